use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use escreg::report::{write_csv, write_harmonics, write_trajectory};
use escreg::scenario::{BuiltScenario, ConfigError, ScenarioConfig};
use escreg::sim::{integrate, SimError};
use escreg::sweep::{sweep, verify_averaging, SweepError};

#[derive(Parser)]
#[command(name = "escreg", version, about = "Extremum-seeking output regulation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write the trajectory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record every integration step.
        #[arg(long)]
        full_rate: bool,
    },
    /// Ultimate bound, averaging deviation and estimator error per dither frequency.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
        omegas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        tail: f64,
    },
    /// Deviation between the dithered and the averaged closed loop.
    VerifyAveraging {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "100,400,1600")]
        omegas: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Seconds; defaults to the scenario horizon.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Steady-state harmonics.
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
}

#[derive(Subcommand)]
enum OracleAction {
    Dump {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Diverged(String),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::IntegrationDiverged { .. } | SimError::NonFinite { .. } => Failure::Diverged(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        if e.is_divergence() {
            Failure::Diverged(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn load(path: &Path) -> Result<BuiltScenario, Failure> {
    Ok(ScenarioConfig::load(path)?.build()?)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            full_rate,
        } => {
            let mut built = load(&scenario)?;
            if full_rate {
                built.scenario.record_stride = Some(1);
            }
            let traj = integrate(&built.scenario)?;
            write_trajectory(create(&out)?, &traj)?;
        }
        Command::Sweep {
            scenario,
            omegas,
            out,
            tail,
        } => {
            let built = load(&scenario)?;
            if !(tail > 0.0 && tail < 1.0) {
                return Err(Failure::Config(format!("tail must lie in (0, 1), got {tail}")));
            }
            let rows = sweep(&built, &omegas, tail)?;
            let header = ["omega", "ultimate_bound_e", "sup_dev_vs_averaged", "vartheta_err_final"].map(String::from);
            write_csv(
                create(&out)?,
                &header,
                rows.iter()
                    .map(|r| vec![r.omega, r.ultimate_bound_e, r.sup_dev_vs_averaged, r.vartheta_err_final]),
            )?;
        }
        Command::VerifyAveraging {
            scenario,
            omegas,
            out,
            horizon,
        } => {
            let built = load(&scenario)?;
            let horizon = horizon.unwrap_or(built.scenario.horizon);
            if !(horizon.is_finite() && horizon > 0.0) {
                return Err(Failure::Config(format!("horizon must be positive, got {horizon}")));
            }
            let devs = verify_averaging(&built, &omegas, horizon)?;
            let header = ["omega", "sup_deviation", "final_deviation"].map(String::from);
            write_csv(
                create(&out)?,
                &header,
                devs.iter().map(|d| vec![d.omega, d.sup, d.final_dev]),
            )?;
        }
        Command::Oracle {
            action: OracleAction::Dump { scenario, out },
        } => {
            let built = load(&scenario)?;
            write_harmonics(create(&out)?, &built.steady_state)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Diverged(msg)) => {
            eprintln!("escreg: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("escreg: invalid configuration: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("escreg: {msg}");
            ExitCode::from(1)
        }
    }
}
