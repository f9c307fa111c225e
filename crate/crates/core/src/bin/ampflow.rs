use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ampflow::harness::{self, ExperimentConfig, ExperimentKind, PartialConfig};
use ampflow::Error;

/// Reproducible Amplitude Flow experiments.
#[derive(Parser)]
#[command(name = "ampflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noiseless recovery from spectral initialization and contraction-rate fit.
    Convergence(Flags),
    /// Smallest distance reached under bounded noise.
    NoiseFloor(Flags),
    /// Recovery success rate across m/n.
    PhaseTransition(Flags),
    /// Empirical supremum deviation of the sign-dependent Gram operators.
    MdcScaling(Flags),
    /// Regularity condition near the truth.
    Regularity(Flags),
    /// Relaxation sandwich and envelope bounds.
    Sandwich(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    n: Option<usize>,
    /// Number of measurements; repeat for a sweep.
    #[arg(long = "m")]
    m: Vec<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat TOML file with any config keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Also write per-trial wall-clock times to this file.
    #[arg(long)]
    timings: Option<PathBuf>,
}

impl Flags {
    fn partial(&self) -> PartialConfig {
        PartialConfig {
            n: self.n,
            m_values: (!self.m.is_empty()).then(|| self.m.clone()),
            alpha: self.alpha,
            noise_rho: self.rho,
            trials: self.trials,
            master_seed: self.seed,
            tol: self.tol,
            output_path: self.out.clone(),
            ..PartialConfig::default()
        }
    }
}

fn split(command: Command) -> (ExperimentKind, Flags) {
    match command {
        Command::Convergence(f) => (ExperimentKind::Convergence, f),
        Command::NoiseFloor(f) => (ExperimentKind::NoiseFloor, f),
        Command::PhaseTransition(f) => (ExperimentKind::PhaseTransition, f),
        Command::MdcScaling(f) => (ExperimentKind::MdcScaling, f),
        Command::Regularity(f) => (ExperimentKind::Regularity, f),
        Command::Sandwich(f) => (ExperimentKind::Sandwich, f),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Io(_) | Error::InvalidParameter(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, flags) = split(cli.command);
    match execute(kind, &flags) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(kind: ExperimentKind, flags: &Flags) -> Result<bool, Error> {
    let file = match &flags.config {
        Some(path) => PartialConfig::from_file(path)?,
        None => PartialConfig::default(),
    };
    let cfg = ExperimentConfig::resolve(kind, file, flags.partial())?;
    let outcome = harness::with_workers(flags.workers, || harness::run(&cfg))??;
    outcome.write_to(&cfg.output_path)?;
    if let Some(path) = &flags.timings {
        outcome.write_timings(path)?;
    }
    let mut all = true;
    for check in outcome.checks() {
        let tag = if check.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", check.name, check.detail);
        all &= check.passed;
    }
    println!("wrote {}", cfg.output_path.display());
    Ok(all)
}
