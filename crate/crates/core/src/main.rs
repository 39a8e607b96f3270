use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use agesir::harness::config::ModelKind;
use agesir::harness::{load_config, presets, run};
use agesir::{Error, Result};

/// Age-structured SIR simulations, vaccination feedback and certificates.
#[derive(Parser)]
#[command(name = "agesir", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the transport model described by a config file.
    SimulatePide {
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the class model described by a config file.
    SimulateOde {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the reproduction number and the equilibrium classification.
    R0 { config: PathBuf },
    /// Write the nonnegative gain profiles as CSV.
    DesignGains {
        config: PathBuf,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the stability inequalities and the growth bound.
    CheckStability { config: PathBuf },
    /// Run a built-in scenario (2 to 9) and write its CSV files.
    ReproduceFigure {
        #[arg(value_parser = clap::value_parser!(u8).range(2..=9))]
        figure: u8,
        /// Defaults to `figure-<n>` in the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.into()))?;
    println!("{text}");
    Ok(())
}

fn simulate(path: &Path, out: Option<PathBuf>, model: ModelKind) -> Result<()> {
    let cfg = load_config(path)?;
    if cfg.model != model {
        let wanted = match model {
            ModelKind::Pide => "pide",
            ModelKind::Ode => "ode",
        };
        return Err(Error::Config(format!(
            "{}: this command needs model = \"{wanted}\"",
            path.display()
        )));
    }
    let outcome = run::run_scenario(&cfg, out.as_deref())?;
    print_json(&outcome.report)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SimulatePide { config, out } => simulate(&config, out, ModelKind::Pide),
        Command::SimulateOde { config, out } => simulate(&config, out, ModelKind::Ode),
        Command::R0 { config } => print_json(&run::reproduction_number(&load_config(&config)?)?),
        Command::DesignGains { config, out } => {
            let table = run::design_gains(&load_config(&config)?)?;
            match out {
                Some(path) => table.write_csv(std::fs::File::create(path)?),
                None => table.write_csv(std::io::stdout().lock()),
            }
        }
        Command::CheckStability { config } => {
            print_json(&run::check_stability(&load_config(&config)?)?)
        }
        Command::ReproduceFigure { figure, out } => {
            let cfg = presets::figure(figure)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(format!("figure-{figure}")));
            eprintln!("figure {figure}: {}", presets::describe(figure));
            let outcome = run::run_scenario(&cfg, Some(&dir))?;
            print_json(&outcome.report)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // bad arguments count as validation errors
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
