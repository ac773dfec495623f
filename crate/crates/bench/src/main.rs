use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latrec_bench::{stages, ExperimentConfig};

/// Latent recalibration benchmark: BASE vs LR vs HDR-R.
#[derive(Parser)]
#[command(name = "latrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the LR and HDR-R calibration maps on the calibration split.
    Fit(Common),
    /// Score BASE, LR and HDR-R on the test split.
    Evaluate(Common),
    /// Write recalibrated draws for the test covariates.
    Recalibrate(Common),
    /// Aggregate per-seed metrics into the report files.
    Report(Common),
    /// Fit, evaluate and report.
    Run(Common),
}

fn execute(cli: Cli) -> Result<bool, latrec_bench::BenchError> {
    let (Command::Fit(c) | Command::Evaluate(c) | Command::Recalibrate(c) | Command::Report(c) | Command::Run(c)) = &cli.command;
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    let seeds = c.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
    let ok = match cli.command {
        Command::Fit(_) => stages::fit(&cfg, &seeds).is_success(),
        Command::Evaluate(_) => stages::evaluate(&cfg, &seeds).is_success(),
        Command::Recalibrate(_) => stages::recalibrate(&cfg, &seeds).is_success(),
        Command::Report(_) | Command::Run(_) => {
            let report = if matches!(cli.command, Command::Run(_)) {
                stages::run(&cfg, &seeds)?
            } else {
                stages::report(&cfg, &seeds)?
            };
            for f in &report.failures {
                eprintln!("seed {} incomplete: {}", f.seed, f.reason);
            }
            println!(
                "{} of {} seeds reported to {}",
                report.seeds.len(),
                seeds.len(),
                cfg.output_dir.display()
            );
            report.is_complete()
        }
    };
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
