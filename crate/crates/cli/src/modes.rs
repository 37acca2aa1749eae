use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use grapheme::dual::{check_duality, equilibrium_dual_grapheme};
use grapheme::dynamics::{draw_theta, run, DynamicsParams, RunOptions, Simulation, SizeMode, ThetaSource, Transition};
use grapheme::equilibria::frequency_diffusion;
use grapheme::estimators::{estimate_monomial, exact_block_density, subgraph_density, EstimateMode, EXHAUSTIVE_LIMIT};
use grapheme::genealogy::{transformed_distance, GenealogyForest};
use grapheme::graphon::{empirical_graphon, SubgraphPattern};
use grapheme::polynomial::{all_pairs, falling_factorial, ConnectionFn, DistanceFn, DualityFunctionSpec};
use grapheme::record::{Header, SnapshotStats, TrajectoryRecord, SCHEMA_VERSION};
use grapheme::rng::replica_rng;
use grapheme::state::{GraphemeState, TypeLabel, VertexId};
use log::info;
use rayon::prelude::*;

use crate::config::{ConnectionChoice, RunConfig};

/// Why a mode did not succeed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    /// A check ran but its result is outside the tolerance (`--assert`).
    Acceptance(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Acceptance(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Runtime(e) => write!(f, "runtime failure: {e:#}"),
            Failure::Acceptance(m) => write!(f, "acceptance failure: {m}"),
        }
    }
}

pub type ModeResult = std::result::Result<(), Failure>;

/// Invalid parameters surface as configuration errors even when they are
/// only detected while running.
fn runtime<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(|e| match e.downcast_ref::<grapheme::GraphemeError>() {
        Some(grapheme::GraphemeError::InvalidParams(_) | grapheme::GraphemeError::Infeasible(_)) => Failure::Config(e),
        _ => Failure::Runtime(e),
    })
}

fn config<T>(r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(Failure::Config)
}

/// Stream used for burn-in and other single-shot draws, kept apart from the
/// replica streams `0, 1, 2, ...`.
const AUX_STREAM: u64 = u64::MAX;

/// CSV file whose first line is a `# schema=... seed=...` comment.
fn write_csv(path: &Path, seed: u64, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(file, "# schema={SCHEMA_VERSION} seed={seed}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn stats_row(replica: usize, s: &SnapshotStats) -> Vec<String> {
    vec![
        replica.to_string(),
        s.time.to_string(),
        s.n.to_string(),
        s.components.to_string(),
        s.pair_connection.to_string(),
        s.intra_block_intensity.to_string(),
        s.sum_w2.to_string(),
        s.sum_w3.to_string(),
        s.same_component_2.to_string(),
        s.same_component_3.to_string(),
    ]
}

const STATS_HEADER: [&str; 10] = [
    "replica",
    "time",
    "n",
    "components",
    "pair_connection",
    "intra_block_intensity",
    "sum_w2",
    "sum_w3",
    "same_component_2",
    "same_component_3",
];

pub fn simulate(cfg: &RunConfig, out: &Path) -> ModeResult {
    config(cfg.validate_dynamics())?;
    let initial = config(cfg.initial.build())?;
    let opts = RunOptions { horizon: cfg.horizon, snapshot_interval: cfg.snapshot_interval, log_events: cfg.log_events };
    let results: Vec<Result<TrajectoryRecord>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cfg.seed, r as u64);
            let (rec, _) = run(initial.clone(), cfg.params.clone(), opts, &mut rng)?;
            let path = out.join(format!("trajectory_{r:04}.jsonl"));
            let file = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
            rec.write_jsonl(&Header::new(cfg.seed, r as u64, cfg.echo.clone()), file)?;
            info!("replica {r}: {} snapshots, terminal = {}", rec.snapshots.len(), rec.terminal);
            Ok(rec)
        })
        .collect();
    let mut rows = Vec::new();
    for (r, rec) in results.into_iter().enumerate() {
        let rec = runtime(rec)?;
        rows.extend(rec.snapshots.iter().map(|s| stats_row(r, s)));
    }
    runtime(write_csv(&out.join("stats.csv"), cfg.seed, &STATS_HEADER, &rows))
}

fn test_function(cfg: &RunConfig) -> Result<DualityFunctionSpec> {
    let distance = if cfg.lambda > 0.0 { DistanceFn::Exp { lambda: cfg.lambda, pairs: None } } else { DistanceFn::One };
    let connection = match cfg.connection {
        ConnectionChoice::One => ConnectionFn::One,
        ConnectionChoice::All => ConnectionFn::all_connected(cfg.m),
        ConnectionChoice::None => ConnectionFn::Indicator { connected: vec![], disconnected: all_pairs(cfg.m) },
    };
    Ok(DualityFunctionSpec::new(cfg.m, distance, connection)?)
}

/// Initial simulation, run for the configured burn-in on the auxiliary
/// stream.
fn burned_in(cfg: &RunConfig) -> std::result::Result<Simulation, Failure> {
    config(cfg.validate_dynamics())?;
    let state = config(cfg.initial.build())?;
    let mut rng = replica_rng(cfg.seed, AUX_STREAM);
    let mut sim = runtime(Simulation::new(state, cfg.params.clone(), &mut rng).map_err(Into::into))?;
    if cfg.burn_in > 0.0 {
        runtime(sim.run_until(cfg.burn_in, &mut rng).map_err(Into::into))?;
    }
    Ok(sim)
}

fn connection_label(c: ConnectionChoice) -> &'static str {
    match c {
        ConnectionChoice::One => "one",
        ConnectionChoice::All => "all",
        ConnectionChoice::None => "none",
    }
}

pub fn duality_check(cfg: &RunConfig, out: &Path, assert: bool) -> ModeResult {
    let spec = config(test_function(cfg))?;
    let g0 = burned_in(cfg)?;
    let rep = runtime(check_duality(&g0, &spec, cfg.dual_time, cfg.replicas, cfg.seed).map_err(Into::into))?;
    info!("duality: lhs {} ± {}, rhs {} ± {}, z = {}", rep.lhs, rep.se_lhs, rep.rhs, rep.se_rhs, rep.z);
    let row = vec![
        cfg.dual_time.to_string(),
        cfg.m.to_string(),
        cfg.lambda.to_string(),
        connection_label(cfg.connection).to_string(),
        rep.lhs.to_string(),
        rep.se_lhs.to_string(),
        rep.rhs.to_string(),
        rep.se_rhs.to_string(),
        rep.z.to_string(),
        rep.replicas.to_string(),
    ];
    let header = ["t", "m", "lambda", "connection", "lhs", "se_lhs", "rhs", "se_rhs", "z", "replicas"];
    runtime(write_csv(&out.join("duality.csv"), cfg.seed, &header, &[row]))?;
    println!("duality z = {:.3} (forward {:.5} ± {:.5}, dual {:.5} ± {:.5})", rep.z, rep.lhs, rep.se_lhs, rep.rhs, rep.se_rhs);
    if assert && !(rep.z.abs() <= cfg.z_tolerance) {
        return Err(Failure::Acceptance(format!("|z| = {:.3} exceeds {}", rep.z.abs(), cfg.z_tolerance)));
    }
    Ok(())
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff.abs() < 1e-12 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Stationary probability that two distinct vertices share a component
/// under resampling plus immigration: they coalesce before either lineage
/// immigrates, or both immigrate with the same atom.
fn pair_connection_target(p: &DynamicsParams) -> f64 {
    let coalesce = p.d / (p.d + 2.0 * p.c);
    let same_atom = match &p.theta {
        ThetaSource::Atomless => 0.0,
        ThetaSource::Atomic(w) => {
            let s: f64 = w.iter().sum();
            w.iter().map(|x| (x / s).powi(2)).sum()
        }
    };
    coalesce + (1.0 - coalesce) * same_atom
}

pub fn equilibrium_check(cfg: &RunConfig, out: &Path, assert: bool) -> ModeResult {
    config(cfg.validate_dynamics())?;
    let p = &cfg.params;
    if !(p.c > 0.0) || p.b > 0.0 || p.m_mut > 0.0 || p.s_sel > 0.0 || p.flip_regime() || p.size_mode != SizeMode::Fixed {
        return Err(Failure::Config(anyhow!("equilibrium-check needs fixed-size resampling with immigration (c > 0) only")));
    }
    if cfg.replicas < 2 {
        return Err(Failure::Config(anyhow!("equilibrium-check needs at least 2 replicas")));
    }
    let initial = config(cfg.initial.build())?;
    let n = initial.num_vertices();
    let settle = cfg.burn_in.max(cfg.horizon);
    let forward: Vec<f64> = runtime(
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = replica_rng(cfg.seed, 2 * r as u64);
                let mut sim = Simulation::new(initial.clone(), p.clone(), &mut rng)?;
                sim.run_until(settle, &mut rng)?;
                Ok(SnapshotStats::of(&sim.state).same_component_2)
            })
            .collect::<Result<Vec<f64>>>(),
    )?;
    let dual: Vec<f64> = runtime(
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = replica_rng(cfg.seed, 2 * r as u64 + 1);
                let s = equilibrium_dual_grapheme(n, p.d, p.c, &p.theta, &mut rng)?;
                Ok(SnapshotStats::of(&s).same_component_2)
            })
            .collect::<Result<Vec<f64>>>(),
    )?;
    let (fm, fse) = mean_se(&forward);
    let (dm, dse) = mean_se(&dual);
    let target = pair_connection_target(p);
    let z_target = z_score(fm - target, fse);
    let z_fd = z_score(fm - dm, (fse * fse + dse * dse).sqrt());
    let row: Vec<String> = [fm, fse, dm, dse, target, z_target, z_fd].iter().map(|x| x.to_string()).collect();
    let mut full = vec!["same_component_2".to_string()];
    full.extend(row);
    let header = ["statistic", "forward_mean", "forward_se", "dual_mean", "dual_se", "target", "z_target", "z_forward_dual"];
    runtime(write_csv(&out.join("equilibrium.csv"), cfg.seed, &header, &[full]))?;
    println!(
        "pair connection: forward {fm:.5} ± {fse:.5}, dual {dm:.5} ± {dse:.5}, target {target:.5} (z = {z_target:.3}, forward-dual z = {z_fd:.3})"
    );
    if assert && !(z_target.abs() <= cfg.z_tolerance && z_fd.abs() <= cfg.z_tolerance) {
        return Err(Failure::Acceptance(format!("z = {z_target:.3}, forward-dual z = {z_fd:.3}; tolerance {}", cfg.z_tolerance)));
    }
    Ok(())
}

pub fn estimate(cfg: &RunConfig, out: &Path) -> ModeResult {
    let spec = config(test_function(cfg))?;
    let state_only = cfg.burn_in <= 0.0;
    let (state, forest) = if state_only {
        let s = config(cfg.initial.build())?;
        let f = GenealogyForest::for_state(&s);
        (s, f)
    } else {
        let sim = burned_in(cfg)?;
        (sim.state, sim.forest)
    };
    let mut rng = replica_rng(cfg.seed, 0);
    let exhaustive = falling_factorial(state.num_vertices(), spec.m) <= EXHAUSTIVE_LIMIT;
    let mode = if exhaustive { EstimateMode::Exhaustive } else { EstimateMode::WithoutReplacement };
    let mono = runtime(estimate_monomial(&state, Some(&forest), &spec, mode, cfg.samples, &mut rng).map_err(Into::into))?;
    let mut rows = vec![vec![
        "monomial".to_string(),
        serde_json::to_value(mono.mode).unwrap().as_str().unwrap_or_default().to_string(),
        mono.mean.to_string(),
        mono.se.to_string(),
        String::new(),
    ]];
    let graphon = empirical_graphon(&state);
    for (name, pattern) in [("edge", SubgraphPattern::edge()), ("path2", SubgraphPattern::path2()), ("triangle", SubgraphPattern::triangle())] {
        if pattern.vertex_count() > state.num_vertices() {
            continue;
        }
        let e = runtime(subgraph_density(&state, &pattern, cfg.samples, &mut rng).map_err(Into::into))?;
        rows.push(vec![
            format!("density_{name}"),
            "with-replacement".to_string(),
            e.mean.to_string(),
            e.se.to_string(),
            exact_block_density(&graphon, &pattern).to_string(),
        ]);
    }
    for r in &rows {
        println!("{:<18} {:>18} {:>12} ± {:<12} {}", r[0], r[1], r[2], r[3], r[4]);
    }
    runtime(write_csv(&out.join("estimate.csv"), cfg.seed, &["statistic", "mode", "value", "se", "block_graphon"], &rows))
}

pub fn freq_diffusion(cfg: &RunConfig, out: &Path) -> ModeResult {
    let p = &cfg.params;
    let paths: Vec<(bool, bool, f64)> = runtime(
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| {
                let mut rng = replica_rng(cfg.seed, r as u64);
                let path = frequency_diffusion(p.c, p.d, cfg.x0, cfg.dt, cfg.horizon, &mut rng)?;
                Ok((path.hit_zero.is_some(), path.hit_one.is_some(), *path.path.last().unwrap()))
            })
            .collect::<Result<Vec<_>>>(),
    )?;
    let k = paths.len().max(1) as f64;
    let zero = paths.iter().filter(|p| p.0).count() as f64 / k;
    let one = paths.iter().filter(|p| p.1).count() as f64 / k;
    let final_mean = paths.iter().map(|p| p.2).sum::<f64>() / k;
    println!("c/d = {}: P(hit 0 by {}) = {zero:.4}, P(hit 1) = {one:.4}, mean X = {final_mean:.4}", p.c / p.d, cfg.horizon);
    let row: Vec<String> = [p.c, p.d, cfg.x0, cfg.dt, cfg.horizon, paths.len() as f64, zero, one, final_mean]
        .iter()
        .map(|x| x.to_string())
        .collect();
    let header = ["c", "d", "x0", "dt", "horizon", "replicas", "hit_zero_fraction", "hit_one_fraction", "mean_final"];
    runtime(write_csv(&out.join("freq_diffusion.csv"), cfg.seed, &header, &[row]))
}

/// Transformed distance coarsened to the three levels of the scripted
/// influence example: 0 on the diagonal, 1 − e^{-1} for pairs with a common
/// ancestor inside the recorded history, 1 for unrelated pairs.
fn coarse_distance(r: f64, t: f64, same: bool) -> f64 {
    if same {
        0.0
    } else if r < 2.0 * t {
        1.0 - (-1.0f64).exp()
    } else {
        1.0
    }
}

pub fn replay_example(out: Option<&Path>) -> ModeResult {
    let state = GraphemeState::singletons(3);
    let inf = f64::INFINITY;
    let r0 = vec![vec![0.0, inf, inf], vec![inf, 0.0, inf], vec![inf, inf, 0.0]];
    let forest = runtime(GenealogyForest::with_initial_distances(&state, r0).map_err(Into::into))?;
    let params = DynamicsParams { d: 1.0, b: 1.0, c: 1.0, size_mode: SizeMode::Variable, ..Default::default() };
    let mut rng = replica_rng(0, 0);
    let mut sim = runtime(Simulation::with_forest(state, forest, params, &mut rng).map_err(Into::into))?;
    // vertex k of the example is VertexId(k - 1); new vertices get the next ids
    let x = |k: u64| VertexId(k - 1);
    let script: Vec<(f64, &str, Transition)> = vec![
        (1.0, "x1 influences x2", Transition::FVResample { winner: x(1), loser: x(2) }),
        (2.0, "x1 influences x3", Transition::FVResample { winner: x(1), loser: x(3) }),
        // placeholder label, replaced by a fresh one when applied
        (3.0, "x4 joins unconnected", Transition::Immigration { label: TypeLabel::Atom(0) }),
        (4.0, "x5 joins the component of x1", Transition::Birth { parent: x(1) }),
    ];
    let mut rec = TrajectoryRecord::default();
    let mut lines = Vec::new();
    let mut table_rows = Vec::new();
    for (t, what, tr) in script {
        let tr = match tr {
            Transition::Immigration { .. } => Transition::Immigration { label: draw_theta(&ThetaSource::Atomless, &mut sim.state, &mut rng) },
            other => other,
        };
        let ev = runtime(sim.apply_at(tr, t, &mut rng).map_err(Into::into))?;
        rec.events.push(ev);
        let ids: Vec<VertexId> = sim.state.vertex_ids().collect();
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by_key(|&i| ids[i]);
        let partition = partition_string(&sim.state, &order);
        lines.push(format!("t = {t}: {what}; components {partition}"));
        let r = runtime(sim.forest.distance_matrix(&ids).map_err(Into::into))?;
        let mut table = String::new();
        let names: Vec<String> = order.iter().map(|&i| format!("x{}", ids[i].0 + 1)).collect();
        table.push_str(&format!("{:>6}", ""));
        for nm in &names {
            table.push_str(&format!("{nm:>9}"));
        }
        table.push('\n');
        for (a, &i) in order.iter().enumerate() {
            table.push_str(&format!("{:>6}", names[a]));
            for &j in &order {
                let v = coarse_distance(r[i][j], t, i == j);
                table.push_str(&format!("{v:>9.6}"));
                table_rows.push(vec![
                    t.to_string(),
                    names[a].clone(),
                    format!("x{}", ids[j].0 + 1),
                    v.to_string(),
                    runtime(transformed_distance(r[i][j]).map_err(Into::into))?.to_string(),
                ]);
            }
            table.push('\n');
        }
        lines.push(table);
    }
    for l in &lines {
        println!("{l}");
    }
    if let Some(dir) = out {
        let file = runtime(File::create(dir.join("replay.jsonl")).context("creating replay.jsonl"))?;
        runtime(rec.write_jsonl(&Header::new(0, 0, serde_json::json!({"mode": "replay-example"})), BufWriter::new(file)).map_err(Into::into))?;
        let header = ["time", "row", "column", "coarse_distance", "transformed_genealogical_distance"];
        runtime(write_csv(&dir.join("replay.csv"), 0, &header, &table_rows))?;
    }
    Ok(())
}

fn partition_string(state: &GraphemeState, order: &[usize]) -> String {
    let mut blocks: Vec<Vec<u64>> = Vec::new();
    let mut seen = Vec::new();
    for &i in order {
        let c = state.component_of(i);
        match seen.iter().position(|x| *x == c) {
            Some(k) => blocks[k].push(state.vertex_id(i).0 + 1),
            None => {
                seen.push(c);
                blocks.push(vec![state.vertex_id(i).0 + 1]);
            }
        }
    }
    blocks
        .iter()
        .map(|b| format!("{{{}}}", b.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
        .collect::<Vec<_>>()
        .join(",")
}

/// Reads a stats CSV written by `simulate`, checking the schema comment.
fn read_stats(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let schema = first
        .trim()
        .strip_prefix('#')
        .and_then(|s| s.split_whitespace().find_map(|kv| kv.strip_prefix("schema=")))
        .ok_or_else(|| anyhow!("{}: missing schema line", path.display()))?;
    if schema != SCHEMA_VERSION {
        bail!("{}: schema {schema} does not match {SCHEMA_VERSION}", path.display());
    }
    let mut csv = csv::Reader::from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for r in csv.records() {
        let r = r?;
        rows.push(r.iter().map(|x| x.parse::<f64>().map_err(|e| anyhow!("{}: {e}", path.display()))).collect::<Result<Vec<f64>>>()?);
    }
    Ok((header, rows))
}

/// Pools the final snapshot of every replica over the given stats files.
pub fn aggregate(cfg: &RunConfig, inputs: &[PathBuf], out: &Path, assert: bool) -> ModeResult {
    let files: Vec<PathBuf> = if inputs.is_empty() {
        let mut found: Vec<PathBuf> = runtime(std::fs::read_dir(out).with_context(|| format!("listing {}", out.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("stats") && n.ends_with(".csv")))
            .collect();
        found.sort();
        found
    } else {
        inputs.to_vec()
    };
    if files.is_empty() {
        return Err(Failure::Config(anyhow!("no stats files to aggregate")));
    }
    let mut header: Option<Vec<String>> = None;
    let mut finals: Vec<Vec<f64>> = Vec::new();
    for f in &files {
        let (h, rows) = runtime(read_stats(f))?;
        match &header {
            Some(prev) if *prev != h => return Err(Failure::Runtime(anyhow!("{}: columns differ from the first file", f.display()))),
            None => header = Some(h.clone()),
            _ => {}
        }
        let rep = h.iter().position(|c| c == "replica").unwrap_or(usize::MAX);
        let time = h.iter().position(|c| c == "time");
        let mut last: Vec<(f64, Vec<f64>)> = Vec::new();
        for row in rows {
            let key = row.get(rep).copied().unwrap_or(0.0);
            match last.iter_mut().find(|(k, _)| *k == key) {
                Some((_, prev)) => {
                    if time.is_none_or(|t| row[t] >= prev[t]) {
                        *prev = row;
                    }
                }
                None => last.push((key, row)),
            }
        }
        finals.extend(last.into_iter().map(|(_, r)| r));
    }
    let header = header.unwrap();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, name) in header.iter().enumerate() {
        if name == "replica" || name == "time" {
            continue;
        }
        let col: Vec<f64> = finals.iter().map(|r| r[k]).collect();
        let (m, se) = mean_se(&col);
        let expected = cfg.expectations.iter().find(|(s, _)| s == name).map(|e| e.1);
        let (exp_s, z_s, pass_s) = match expected {
            Some(e) => {
                let z = z_score(m - e, se);
                let ok = z.abs() <= cfg.z_tolerance;
                if !ok {
                    failures.push(format!("{name}: mean {m} vs expected {e} (z = {z:.3})"));
                }
                (e.to_string(), z.to_string(), if ok { "pass" } else { "fail" }.to_string())
            }
            None => (String::new(), String::new(), String::new()),
        };
        rows.push(vec![name.clone(), m.to_string(), se.to_string(), col.len().to_string(), exp_s, z_s, pass_s]);
    }
    for r in &rows {
        println!("{:<24} {:>14} ± {:<14} {}", r[0], r[1], r[2], r[6]);
    }
    runtime(write_csv(&out.join("summary.csv"), cfg.seed, &["statistic", "mean", "se", "replicas", "expected", "z", "result"], &rows))?;
    if assert && !failures.is_empty() {
        return Err(Failure::Acceptance(failures.join("; ")));
    }
    Ok(())
}
