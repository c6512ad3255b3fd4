//! `fmse`: batch experiments on discrete fractional magnetic Schrödinger operators.
//!
//! Exit status: 0 when every asserted identity holds, 1 when one fails (the
//! metric is named on stderr and in `report.json`), 2 for configuration
//! errors, 3 when the interior problem is not well posed.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fmse_core::grid::build_grid;

use commands::{Ctx, RunError};
use config::ExperimentConfig;
use report::Report;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    CheckOps,
    Solve,
    Dn,
    Gauge,
    Invert,
    Walk,
    Reduce,
    Fourier,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CheckOps => "check-ops",
            Command::Solve => "solve",
            Command::Dn => "dn",
            Command::Gauge => "gauge",
            Command::Invert => "invert",
            Command::Walk => "walk",
            Command::Reduce => "reduce",
            Command::Fourier => "fourier",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fmse", version, about = "Fractional magnetic Schrödinger operator lab")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) if report.passed() => ExitCode::SUCCESS,
        Ok(report) => {
            eprintln!("identity failure: {}", report.failures.join(", "));
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<Report, RunError> {
    let mut cfg = ExperimentConfig::load(&cli.config).map_err(|e| RunError::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| "out".into());
    let grid = build_grid(&cfg.grid).map_err(|e| RunError::Config(e.to_string()))?;
    std::fs::create_dir_all(&out)
        .map_err(|e| RunError::Config(format!("cannot create {}: {e}", out.display())))?;

    let mut report = Report::new(cli.command.name(), cfg.hash(), grid.fingerprint());
    let ctx = Ctx { cfg: &cfg, grid, out: &out };
    match cli.command {
        Command::CheckOps => commands::check_ops(&ctx, &mut report),
        Command::Solve => commands::solve(&ctx, &mut report),
        Command::Dn => commands::dn(&ctx, &mut report),
        Command::Gauge => commands::gauge(&ctx, &mut report),
        Command::Invert => commands::invert(&ctx, &mut report),
        Command::Walk => commands::walk(&ctx, &mut report),
        Command::Reduce => commands::reduce(&ctx, &mut report),
        Command::Fourier => commands::fourier(&ctx, &mut report),
    }?;
    report.write(&out).map_err(|e| RunError::Core(e.into()))?;
    Ok(report)
}
