//! Command-line driver for simulations, duality and equilibrium checks,
//! estimation and aggregation of results.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod modes;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::Parser;

use config::{Mode, RunConfig};
use modes::Failure;

#[derive(Debug, Parser)]
#[command(name = "grapheme", version, about = "Simulate and check Fleming-Viot dynamics on graphs with genealogies")]
struct Args {
    /// Flat `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides the `mode` key of the configuration.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output directory, created if missing (default: the working directory;
    /// `replay-example` writes files only when this is given).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Exit with status 3 when a check falls outside its tolerance.
    #[arg(long)]
    assert: bool,
    /// Worker threads; replicas are independent of this setting.
    #[arg(long)]
    workers: Option<usize>,
    /// Stats files for `aggregate` (default: stats*.csv in the output directory).
    inputs: Vec<PathBuf>,
}

fn dispatch(args: &Args) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicas {
        cfg.replicas = r;
    }
    let mode = args.mode.or(cfg.mode).ok_or_else(|| Failure::Config(anyhow!("no mode given (use --mode or the `mode` key)")))?;
    if cfg.replicas == 0 && mode != Mode::ReplayExample {
        return Err(Failure::Config(anyhow!("replicas must be positive")));
    }
    if let Some(w) = args.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| Failure::Config(anyhow!("worker pool: {e}")))?;
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display())).map_err(Failure::Runtime)?;
    log::info!("mode {mode:?}, seed {}, {} replicas", cfg.seed, cfg.replicas);
    match mode {
        Mode::Simulate => modes::simulate(&cfg, &out),
        Mode::DualityCheck => modes::duality_check(&cfg, &out, args.assert),
        Mode::EquilibriumCheck => modes::equilibrium_check(&cfg, &out, args.assert),
        Mode::Estimate => modes::estimate(&cfg, &out),
        Mode::FreqDiffusion => modes::freq_diffusion(&cfg, &out),
        Mode::ReplayExample => modes::replay_example(args.out.as_deref()),
        Mode::Aggregate => modes::aggregate(&cfg, &args.inputs, &out, args.assert),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRAPHEME_LOG", "warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("grapheme: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
