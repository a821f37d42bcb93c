use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use manhattan_cli::commands::{cmd_curve, cmd_delta, cmd_spectrum};
use manhattan_cli::config::{Overrides, RunConfig};
use manhattan_cli::experiments::{self, EXPERIMENTS};

/// Worker-count environment variable.
const WORKERS_VAR: &str = "MANHATTAN_WORKERS";

#[derive(Parser)]
#[command(
    name = "manhattan",
    version,
    about = "Pair length spectra, critical exponents and Manhattan curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override `run.cutoff`.
    #[arg(long = "T")]
    cutoff: Option<f64>,
    /// Override `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the pair spectrum and write it as MSPEC/1.
    Spectrum(Common),
    /// Estimate the critical exponent (and its Lorentzian and orbit-frame variants).
    Delta(Common),
    /// Sample the Manhattan curve and check its properties.
    Curve(Common),
    /// Run a named experiment.
    Experiment {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENTS))]
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

fn load(c: &Common) -> Result<RunConfig> {
    let cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.with_overrides(&Overrides {
        cutoff: c.cutoff,
        seed: c.seed,
        out: c.out.clone(),
    })
}

fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_VAR) {
        let n: usize = v
            .parse()
            .with_context(|| format!("cli: {WORKERS_VAR}={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cli: building worker pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_workers()?;
    let common = match &cli.command {
        Command::Spectrum(c) | Command::Delta(c) | Command::Curve(c) => c,
        Command::Experiment { common, .. } => common,
    };
    let cfg = load(common)?;
    let output = match &cli.command {
        Command::Spectrum(_) => cmd_spectrum(&cfg)?,
        Command::Delta(_) => cmd_delta(&cfg)?,
        Command::Curve(_) => cmd_curve(&cfg)?,
        Command::Experiment { name, .. } => experiments::run(name, &cfg)?,
    };
    for path in output.write(&cfg.run.out)? {
        println!("wrote {}", path.display());
    }
    for c in &output.report.checks {
        println!(
            "{} {}: {} {} {} (tol {}, margin {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.relation,
            c.bound,
            c.tol,
            c.margin
        );
    }
    Ok(output.report.passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
