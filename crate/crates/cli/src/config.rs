//! Flat key-value run configuration (TOML syntax, no tables).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use grapheme::dynamics::{DynamicsParams, EdgeInitMode, Fitness, MutationKernel, SizeMode, ThetaSource};
use grapheme::record::TrajectoryRecord;
use grapheme::state::GraphemeState;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Simulate,
    DualityCheck,
    EquilibriumCheck,
    Estimate,
    FreqDiffusion,
    ReplayExample,
    Aggregate,
}

impl Mode {
    fn parse(s: &str) -> Result<Self> {
        <Mode as clap::ValueEnum>::from_str(s, true).map_err(|_| anyhow!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Singletons(usize),
    Partition(String),
    /// Final state of a trajectory file.
    Snapshot(PathBuf),
}

impl InitialState {
    pub fn build(&self) -> Result<GraphemeState> {
        match self {
            InitialState::Singletons(n) => Ok(GraphemeState::singletons(*n)),
            InitialState::Partition(p) => Ok(GraphemeState::from_partition_literal(p)?),
            InitialState::Snapshot(path) => {
                let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                let (_, rec) = TrajectoryRecord::read_jsonl(std::io::BufReader::new(file))?;
                let snap = rec.final_state.ok_or_else(|| anyhow!("{} has no state record", path.display()))?;
                Ok(snap.to_state())
            }
        }
    }
}

/// Connection factor of the test function used by duality and estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionChoice {
    One,
    All,
    None,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub params: DynamicsParams,
    pub initial: InitialState,
    pub horizon: f64,
    pub snapshot_interval: f64,
    pub replicas: usize,
    pub seed: u64,
    pub log_events: bool,
    pub burn_in: f64,
    pub dual_time: f64,
    pub m: usize,
    pub lambda: f64,
    pub connection: ConnectionChoice,
    pub samples: usize,
    pub x0: f64,
    pub dt: f64,
    pub z_tolerance: f64,
    /// `expect_<statistic> = value` pairs for aggregation.
    pub expectations: Vec<(String, f64)>,
    /// Echo of the raw key-value pairs, written into every file header.
    pub echo: serde_json::Value,
}

const KEYS: &[&str] = &[
    "mode", "n0", "partition", "snapshot", "d", "b", "c", "theta", "m_mut", "mutation", "s_sel", "fitness",
    "fitness_default", "a_plus", "a_minus", "size_mode", "edge_init", "n_ref", "scaling", "horizon",
    "snapshot_interval", "replicas", "seed", "log_events", "burn_in", "dual_time", "m", "lambda", "connection",
    "samples", "x0", "dt", "z_tolerance",
];

fn float(v: &Value, key: &str) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => bail!("`{key}` must be a number"),
    }
}

fn uint(v: &Value, key: &str) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => bail!("`{key}` must be a nonnegative integer"),
    }
}

fn string<'a>(v: &'a Value, key: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| anyhow!("`{key}` must be a string"))
}

fn floats(v: &Value, key: &str) -> Result<Vec<f64>> {
    v.as_array().ok_or_else(|| anyhow!("`{key}` must be an array of numbers"))?.iter().map(|x| float(x, key)).collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses the flat configuration; relative snapshot paths resolve
    /// against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let table: Table = text.parse().context("config is not valid key = value syntax")?;
        let mut cfg = RunConfig::default();
        let mut scaling = "none".to_string();
        for (key, v) in &table {
            if matches!(v, Value::Table(_)) {
                bail!("`{key}`: nested tables are not allowed");
            }
            if let Some(stat) = key.strip_prefix("expect_") {
                cfg.expectations.push((stat.to_string(), float(v, key)?));
                continue;
            }
            if !KEYS.contains(&key.as_str()) {
                bail!("unknown key `{key}`");
            }
            let p = &mut cfg.params;
            match key.as_str() {
                "mode" => cfg.mode = Some(Mode::parse(string(v, key)?)?),
                "n0" => cfg.initial = InitialState::Singletons(uint(v, key)? as usize),
                "partition" => cfg.initial = InitialState::Partition(string(v, key)?.to_string()),
                "snapshot" => cfg.initial = InitialState::Snapshot(base.join(string(v, key)?)),
                "d" => p.d = float(v, key)?,
                "b" => p.b = float(v, key)?,
                "c" => p.c = float(v, key)?,
                "theta" => {
                    p.theta = match v {
                        Value::String(s) if s == "atomless" => ThetaSource::Atomless,
                        Value::Array(_) => ThetaSource::Atomic(floats(v, key)?),
                        _ => bail!("`theta` must be \"atomless\" or a list of weights"),
                    }
                }
                "m_mut" => p.m_mut = float(v, key)?,
                "mutation" => {
                    p.mutation = match v {
                        Value::String(s) if s == "atomless" => MutationKernel::Atomless,
                        Value::Array(rows) => {
                            MutationKernel::Table(rows.iter().map(|r| floats(r, key)).collect::<Result<_>>()?)
                        }
                        _ => bail!("`mutation` must be \"atomless\" or a square table"),
                    }
                }
                "s_sel" => p.s_sel = float(v, key)?,
                "fitness" => p.fitness.atoms = floats(v, key)?,
                "fitness_default" => p.fitness.default = float(v, key)?,
                "a_plus" => p.a_plus = float(v, key)?,
                "a_minus" => p.a_minus = float(v, key)?,
                "size_mode" => {
                    p.size_mode = match string(v, key)? {
                        "fixed" => SizeMode::Fixed,
                        "variable" => SizeMode::Variable,
                        other => bail!("size_mode `{other}` (expected fixed or variable)"),
                    }
                }
                "edge_init" => {
                    p.edge_init = match string(v, key)? {
                        "stationary" => EdgeInitMode::Stationary,
                        "complete" => EdgeInitMode::Complete,
                        other => bail!("edge_init `{other}` (expected stationary or complete)"),
                    }
                }
                "n_ref" => p.n_ref = Some(uint(v, key)? as usize),
                "scaling" => scaling = string(v, key)?.to_string(),
                "horizon" => cfg.horizon = float(v, key)?,
                "snapshot_interval" => cfg.snapshot_interval = float(v, key)?,
                "replicas" => cfg.replicas = uint(v, key)? as usize,
                "seed" => cfg.seed = uint(v, key)?,
                "log_events" => cfg.log_events = v.as_bool().ok_or_else(|| anyhow!("`log_events` must be a boolean"))?,
                "burn_in" => cfg.burn_in = float(v, key)?,
                "dual_time" => cfg.dual_time = float(v, key)?,
                "m" => cfg.m = uint(v, key)? as usize,
                "lambda" => cfg.lambda = float(v, key)?,
                "connection" => {
                    cfg.connection = match string(v, key)? {
                        "one" => ConnectionChoice::One,
                        "all" => ConnectionChoice::All,
                        "none" => ConnectionChoice::None,
                        other => bail!("connection `{other}` (expected one, all or none)"),
                    }
                }
                "samples" => cfg.samples = uint(v, key)? as usize,
                "x0" => cfg.x0 = float(v, key)?,
                "dt" => cfg.dt = float(v, key)?,
                "z_tolerance" => cfg.z_tolerance = float(v, key)?,
                _ => unreachable!("key list and match arms out of sync: {key}"),
            }
        }
        match scaling.as_str() {
            "none" => {}
            "diffusion" => {
                let n0 = match &cfg.initial {
                    InitialState::Singletons(n) => *n,
                    _ => bail!("scaling = \"diffusion\" needs n0"),
                };
                cfg.params = cfg.params.diffusion_scaled(n0);
            }
            other => bail!("scaling `{other}` (expected none or diffusion)"),
        }
        cfg.echo = serde_json::to_value(&table)?;
        Ok(cfg)
    }

    pub fn validate_dynamics(&self) -> Result<()> {
        self.params.validate()?;
        Ok(())
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: None,
            params: DynamicsParams { fitness: Fitness::default(), ..DynamicsParams::default() },
            initial: InitialState::Singletons(100),
            horizon: 1.0,
            snapshot_interval: 1.0,
            replicas: 1,
            seed: 0,
            log_events: false,
            burn_in: 0.0,
            dual_time: 1.0,
            m: 2,
            lambda: 0.0,
            connection: ConnectionChoice::All,
            samples: 10_000,
            x0: 0.5,
            dt: 0.001,
            z_tolerance: 4.0,
            expectations: Vec::new(),
            echo: serde_json::Value::Null,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config() {
        let cfg = RunConfig::parse(
            "mode = \"simulate\"\nn0 = 50\nd = 1\nc = 0.5\ntheta = [0.2, 0.8]\nhorizon = 3.0\nseed = 7\nexpect_pair_connection = 0.5\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.mode, Some(Mode::Simulate));
        assert_eq!(cfg.initial, InitialState::Singletons(50));
        assert_eq!(cfg.params.theta, ThetaSource::Atomic(vec![0.2, 0.8]));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.expectations, vec![("pair_connection".to_string(), 0.5)]);
    }

    #[test]
    fn rejects_unknown_keys_and_tables() {
        assert!(RunConfig::parse("speed = 3\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("[dynamics]\nd = 1\n", Path::new(".")).is_err());
        assert!(RunConfig::parse("d = \"fast\"\n", Path::new(".")).is_err());
    }

    #[test]
    fn diffusion_scaling_multiplies_b() {
        let cfg = RunConfig::parse("n0 = 100\nb = 0.5\nsize_mode = \"variable\"\nscaling = \"diffusion\"\n", Path::new(".")).unwrap();
        assert_eq!(cfg.params.b, 50.0);
    }
}
