//! Monte-Carlo checks of the simulators against closed-form oracles. Seeds
//! are fixed, so every check is deterministic; tolerances are 4σ.

use grapheme::dual::{check_duality, conditioned_dual_exact, conditioned_dual_thinned, equilibrium_dual_grapheme, CoalescentState, PopulationPath};
use grapheme::dynamics::{run, DynamicsParams, RunOptions, Simulation, SizeMode, StepOutcome, ThetaSource};
use grapheme::equilibria::{ewens_expected_blocks, frequency_diffusion};
use grapheme::polynomial::{ConnectionFn, DistanceFn, DualityFunctionSpec};
use grapheme::rng::{master_rng, replica_rng};
use grapheme::state::GraphemeState;

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn within(label: &str, xs: &[f64], target: f64, k: f64) {
    let (m, se) = mean_se(xs);
    assert!((m - target).abs() <= k * se + 1e-12, "{label}: mean {m} ± {se}, expected {target}");
}

fn connected_pair_fraction(state: &GraphemeState) -> f64 {
    let n = state.num_vertices() as f64;
    state.block_sizes().iter().map(|&s| (s * s.saturating_sub(1)) as f64).sum::<f64>() / (n * (n - 1.0))
}

#[test]
fn tagged_pair_coalesces_at_rate_d() {
    let (d, t) = (1.3, 0.5);
    let xs: Vec<f64> = (0..4000)
        .map(|r| {
            let mut rng = replica_rng(11, r);
            let mut sim = Simulation::new(GraphemeState::singletons(10), DynamicsParams::fleming_viot(d), &mut rng).unwrap();
            sim.run_until(t, &mut rng).unwrap();
            sim.state.connected(0, 1) as u8 as f64
        })
        .collect();
    within("pair", &xs, 1.0 - (-d * t).exp(), 4.0);
}

#[test]
fn holding_times_have_mean_one_over_total_rate() {
    let mut rng = master_rng(5);
    let params = DynamicsParams { c: 0.3, ..DynamicsParams::fleming_viot(1.0) };
    let sim = Simulation::new(GraphemeState::from_block_sizes(&[6, 4, 3, 1]), params, &mut rng).unwrap();
    let rate = sim.rates().total();
    let xs: Vec<f64> = (0..5000)
        .map(|_| {
            let mut s = sim.clone();
            match s.step(&mut rng).unwrap() {
                StepOutcome::Event(e) => e.time,
                other => panic!("{other:?}"),
            }
        })
        .collect();
    within("holding", &xs, 1.0 / rate, 4.0);
}

#[test]
fn kingman_absorption_time() {
    let (n, d) = (20, 1.5);
    let xs: Vec<f64> = (0..4000)
        .map(|r| {
            let mut rng = replica_rng(3, r);
            let mut c = CoalescentState::singletons(n);
            while c.num_blocks() > 1 {
                assert!(c.step_until(d, 0.0, &ThetaSource::Atomless, f64::INFINITY, &mut rng));
            }
            c.time()
        })
        .collect();
    // Σ_{k=2}^n 2/(d k (k-1)) telescopes
    within("absorption", &xs, 2.0 / d * (1.0 - 1.0 / n as f64), 4.0);
}

#[test]
fn equilibrium_dual_block_count_is_ewens() {
    let (n, d, c) = (30, 1.0, 0.75);
    let xs: Vec<f64> = (0..3000)
        .map(|r| {
            let s = equilibrium_dual_grapheme(n, d, c, &ThetaSource::Atomless, &mut replica_rng(8, r)).unwrap();
            s.num_components() as f64
        })
        .collect();
    within("blocks", &xs, ewens_expected_blocks(2.0 * c / d, n), 4.0);
}

#[test]
fn tagged_frequency_jump_moments() {
    // one-event moments times the total rate give the exact finite-n
    // coefficients: drift -cX, variance dX(1-X) + cX/n
    let (d, c) = (1.0, 0.5);
    let mut rng = master_rng(21);
    let params = DynamicsParams { c, ..DynamicsParams::fleming_viot(d) };
    let sim = Simulation::new(GraphemeState::from_block_sizes(&[8, 12]), params, &mut rng).unwrap();
    let n = 20.0;
    let tagged = sim.state.component_of(sim.state.index_of(sim.state.vertex_ids().next().unwrap()).unwrap());
    let k0 = sim.state.component(tagged).unwrap().size() as f64;
    let x = k0 / n;
    let rate = sim.rates().total();
    let jumps: Vec<f64> = (0..100_000)
        .map(|_| {
            let mut s = sim.clone();
            s.step(&mut rng).unwrap();
            s.state.component(tagged).map_or(0.0, |c| c.size() as f64) / n - x
        })
        .collect();
    let drift: Vec<f64> = jumps.iter().map(|j| j * rate).collect();
    let var: Vec<f64> = jumps.iter().map(|j| j * j * rate).collect();
    within("drift", &drift, -c * x, 4.0);
    within("variance", &var, d * x * (1.0 - x) + c * x / n, 4.0);

    // Euler step of the limiting diffusion has the large-n coefficients
    let dt = 1e-3;
    let steps: Vec<f64> = (0..100_000)
        .map(|_| frequency_diffusion(c, d, x, dt, dt, &mut rng).unwrap().path[1] - x)
        .collect();
    within("sde drift", &steps.iter().map(|s| s / dt).collect::<Vec<_>>(), -c * x, 4.0);
    let sq: Vec<f64> = steps.iter().map(|s| s * s / dt).collect();
    let (m, _) = mean_se(&sq);
    assert!((m - d * x * (1.0 - x)).abs() < 0.01, "{m}");
}

#[test]
fn conditioned_dual_matches_forward_genealogy() {
    let params = DynamicsParams { b: 1.0, c: 0.3, size_mode: SizeMode::Variable, ..Default::default() };
    let horizon = 4.0;
    let mut diffs = Vec::new();
    let mut thinned_diffs = Vec::new();
    for r in 0..300 {
        let mut rng = replica_rng(17, r);
        let opts = RunOptions { horizon, snapshot_interval: horizon, log_events: true };
        let (rec, sim) = run(GraphemeState::singletons(30), params.clone(), opts, &mut rng).unwrap();
        if sim.state.num_vertices() < 2 {
            continue;
        }
        let path = PopulationPath::from_events(30, 0.0, horizon, &rec.events);
        let forward = connected_pair_fraction(&sim.state);
        let draws = 200;
        let exact = (0..draws)
            .map(|_| conditioned_dual_exact(&path, 2, &mut rng).unwrap().same_block(0, 1) as u8 as f64)
            .sum::<f64>()
            / draws as f64;
        diffs.push(forward - exact);
        if let Ok(first) = conditioned_dual_thinned(&path, 2, params.b, params.c, 30, &mut rng) {
            let mut acc = first.same_block(0, 1) as u8 as f64;
            for _ in 1..draws {
                acc += conditioned_dual_thinned(&path, 2, params.b, params.c, 30, &mut rng).unwrap().same_block(0, 1) as u8 as f64;
            }
            thinned_diffs.push(forward - acc / draws as f64);
        }
    }
    within("exact conditioned dual", &diffs, 0.0, 4.0);
    // the thinned form uses b/N instead of b/(N-1): only a loose check
    let (m, _) = mean_se(&thinned_diffs);
    assert!(m.abs() < 0.05, "{m}");
}

#[test]
fn small_duality_check() {
    let mut rng = master_rng(1);
    let params = DynamicsParams { c: 0.4, ..DynamicsParams::fleming_viot(1.0) };
    let mut sim = Simulation::new(GraphemeState::singletons(8), params, &mut rng).unwrap();
    sim.run_until(0.5, &mut rng).unwrap();
    let spec = DualityFunctionSpec::new(2, DistanceFn::Exp { lambda: 0.5, pairs: None }, ConnectionFn::all_connected(2)).unwrap();
    let rep = check_duality(&sim, &spec, 0.7, 800, 9).unwrap();
    assert!(rep.z.abs() < 4.0, "{rep:?}");
}

#[test]
fn replica_streams_are_uncorrelated() {
    // paired statistics from streams r and r + k: sample correlation is
    // O(1/√k) under independence
    let k = 2000;
    let stat = |r: u64| {
        let mut rng = replica_rng(31, r);
        let mut sim = Simulation::new(GraphemeState::singletons(12), DynamicsParams { c: 0.3, ..DynamicsParams::fleming_viot(1.0) }, &mut rng).unwrap();
        sim.run_until(0.7, &mut rng).unwrap();
        connected_pair_fraction(&sim.state)
    };
    let xs: Vec<f64> = (0..k).map(stat).collect();
    let ys: Vec<f64> = (k..2 * k).map(stat).collect();
    let (mx, _) = mean_se(&xs);
    let (my, _) = mean_se(&ys);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let corr = cov / (vx * vy).sqrt();
    assert!(corr.abs() < 3.0 / (k as f64).sqrt(), "{corr}");
}
