use std::path::PathBuf;
use std::process::ExitCode;

use biphoton_cli::commands;
use biphoton_cli::output::OutputDir;
use biphoton_cli::{CliError, ExperimentConfig};
use clap::{Parser, Subcommand};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "BIPHOTON_OUT";

#[derive(Parser)]
#[command(name = "biphoton", version, about = "Two-photon interference in an unbalanced Michelson interferometer")]
struct Cli {
    /// Configuration file (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory [default: config `output_dir`, then $BIPHOTON_OUT, then .].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace outputs written by a different configuration.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Acquire one start-stop histogram at the configured geometry.
    Histogram,
    /// Scan the path offset and fit fringe visibility for each window.
    Fringes {
        /// Coincidence window in ns; repeat for several windows over one corpus.
        #[arg(long = "window")]
        windows: Vec<f64>,
    },
    /// Tabulate analytic and Monte Carlo rates over pump phase.
    Compare,
    /// Print the effective configuration with all defaults.
    PrintConfig,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Command::PrintConfig = cli.command {
        print!("{}", cfg.to_documented_toml());
        return Ok(());
    }
    for warning in cfg.validate()? {
        eprintln!("warning: {warning}");
    }
    let root = cli
        .out
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let out = OutputDir::new(root, cfg.hash(), cli.force)?;

    match cli.command {
        Command::Histogram => println!("{}", commands::histogram(&cfg, &out)?),
        Command::Fringes { windows } => {
            let windows = if windows.is_empty() { cfg.window_ns.clone() } else { windows };
            let reports = commands::fringes(&cfg, &windows, &out)?;
            for (w, r) in windows.iter().zip(&reports) {
                println!(
                    "window {w} ns: V = {:.3} ± {:.3} ({:?}, {:?})",
                    r.visibility, r.visibility_sigma, r.regime, r.verdict
                );
            }
        }
        Command::Compare => {
            let table = commands::compare(&cfg, &out)?;
            println!("phase      narrow      wide        classical   mc_classical");
            for row in &table.rows {
                println!(
                    "{:<10.4} {:<11.3} {:<11.3} {:<11.3} {:.3} ± {:.3}",
                    row.pump_phase,
                    row.quantum_narrow,
                    row.quantum_wide,
                    row.classical,
                    row.mc_classical.mean,
                    row.mc_classical.stderr
                );
            }
        }
        Command::PrintConfig => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
