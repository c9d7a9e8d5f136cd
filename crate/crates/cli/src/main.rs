use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use homog_cli::{commands, write_report, CliError, CliResult, ExperimentConfig, Report};

#[derive(Parser)]
#[command(name = "homog", version, about = "Numerical homogenization studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Also write an SVG plot where the study has one
    #[arg(long, global = true)]
    svg: bool,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the reference solver tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Ideal method error against ||H f|| across coarse meshes
    Convergence { config: PathBuf },
    /// Decay of the localization error with the number of steps
    Decay { config: PathBuf },
    /// Localized method error against its a priori bound
    Theorem33 { config: PathBuf },
    /// Spectrum of the additive Schwarz operator and decomposition constant
    Spectrum { config: PathBuf },
    /// Fixed small checks of every estimate
    Selftest,
}

fn load(path: &Path, tol: Option<f64>) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(t) = tol {
        cfg.tol = t;
        cfg.validate()
            .map_err(|m| CliError::Config(format!("--tol: {m}")))?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    let (report, failed): (Report, Vec<String>) = match &cli.command {
        Command::Convergence { config } => (commands::convergence(&load(config, cli.tol)?)?, vec![]),
        Command::Decay { config } => (commands::decay(&load(config, cli.tol)?)?, vec![]),
        Command::Theorem33 { config } => (commands::theorem33(&load(config, cli.tol)?)?, vec![]),
        Command::Spectrum { config } => (commands::spectrum(&load(config, cli.tol)?)?, vec![]),
        Command::Selftest => {
            if let Some(t) = cli.tol {
                if !(t > 0.0 && t < 1.0) {
                    return Err(CliError::Config(format!("--tol: {t} outside (0, 1)")));
                }
            }
            let (report, checks) = commands::selftest(cli.tol)?;
            let failed = checks
                .iter()
                .filter(|c| !c.passed())
                .map(|c| format!("{} = {:e} (limit {:e})", c.name, c.value, c.limit))
                .collect();
            (report, failed)
        }
    };
    for path in write_report(&report, &cli.out, cli.svg)? {
        eprintln!("wrote {}", path.display());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::BoundViolation(failed.join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool");
        if let Err(e) = pool {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
