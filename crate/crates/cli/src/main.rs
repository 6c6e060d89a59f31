use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use tdspectra_cli::{parse_config, run_scenario, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "tdspectra", version, about = "Time-dependent emission spectra of a driven three-level atom")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary spectrum from the steady-state correlation.
    Stationary(Common),
    /// Filtered spectrum at the given readout times.
    Physical(Common),
    /// Bank of cascaded analyzer atoms.
    Analyzer(Common),
    /// All three routes on one parameter set, with a peak alignment table.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// TOML scenario file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    omega_min: Option<f64>,
    #[arg(long)]
    omega_max: Option<f64>,
    #[arg(long)]
    omega_count: Option<usize>,
    /// Readout time; repeat for several.
    #[arg(long = "time")]
    times: Vec<f64>,
}

fn load(scenario: Scenario, args: &Common) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(path) => parse_config(path)?,
        None => ScenarioConfig::default(),
    };
    cfg.scenario = scenario;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    if let Some(v) = args.omega_min {
        cfg.omega.min = v;
    }
    if let Some(v) = args.omega_max {
        cfg.omega.max = v;
    }
    if let Some(v) = args.omega_count {
        cfg.omega.count = v;
    }
    if !args.times.is_empty() {
        cfg.readout_times = args.times.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (scenario, args) = match &cli.command {
        Command::Stationary(a) => (Scenario::StationaryWk, a),
        Command::Physical(a) => (Scenario::PhysicalScan, a),
        Command::Analyzer(a) => (Scenario::AnalyzerBank, a),
        Command::Compare(a) => (Scenario::CompareAll, a),
    };
    let cfg = load(scenario, args)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker pool")?;
    let report = pool.install(|| run_scenario(&cfg))?;
    println!("{report}");
    println!("outputs: {}", cfg.output_dir.display());
    Ok(!report.incomplete())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
