//! `gaitgen`: command-line front end of the gait pattern pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use exo_kinematics::KinematicsError;
use gaitgen_core::data::io::SpeedUnit;
use gaitgen_core::regression::bank::BANK_FORMAT_VERSION;
use gaitgen_core::GaitError;

use config::{parse_speed_unit, RunConfigFile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error("{0}")]
    Kinematics(#[from] KinematicsError),
    #[error("usage: {0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "gaitgen", about = "Personalized gait patterns for a treadmill exoskeleton")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Run configuration (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset root directory.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Dataset schema (TOML); canonical layout when absent.
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
    /// Key-event templates (TOML); built-in templates when absent.
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    /// Model bank (JSON); defaults to <out>/bank.json.
    #[arg(long, global = true)]
    bank: Option<PathBuf>,
    #[arg(long, global = true)]
    geometry_left: Option<PathBuf>,
    #[arg(long, global = true)]
    geometry_right: Option<PathBuf>,
    /// Unit of every --speed flag: km/h or m/s.
    #[arg(long, global = true, value_parser = parse_speed_unit)]
    speed_unit: Option<SpeedUnit>,
    /// Points per normalized cycle.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Speed levels above this treadmill speed (km/h) are dropped.
    #[arg(long, global = true)]
    treadmill_limit: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved config and planned outputs, write nothing.
    #[arg(long, global = true)]
    dry_run: bool,
}

impl GlobalArgs {
    fn overrides(&self) -> RunConfigFile {
        RunConfigFile {
            dataset: self.dataset.clone(),
            schema: self.schema.clone(),
            templates: self.templates.clone(),
            bank: self.bank.clone(),
            geometry_left: self.geometry_left.clone(),
            geometry_right: self.geometry_right.clone(),
            speed_unit: self.speed_unit,
            grid_size: self.grid,
            treadmill_limit_kmh: self.treadmill_limit,
            seed: self.seed,
            output: self.out.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SubjectArgs {
    /// Years.
    #[arg(long)]
    pub age: f64,
    /// Meters.
    #[arg(long)]
    pub height: f64,
    /// Kilograms.
    #[arg(long)]
    pub mass: f64,
    /// M or F.
    #[arg(long)]
    pub gender: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a dataset through its schema and write it in canonical form.
    Ingest,
    /// Fit the key-event regression bank.
    Train,
    /// Personalized pattern from the model bank.
    Predict {
        #[command(flatten)]
        subject: SubjectArgs,
        #[arg(long)]
        speed: f64,
        /// Time step of the reference series, seconds.
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// Height-scaled population average pattern.
    Standard {
        #[arg(long)]
        speed: f64,
        /// Meters.
        #[arg(long)]
        height: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// Pattern of one randomly drawn subject.
    Random {
        /// Speed level: L1, L2 or L3.
        #[arg(long, default_value = "L1")]
        level: String,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
    /// Leave-one-subject-out evaluation.
    Evaluate {
        /// Significance level of stepwise elimination.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Hip angles to actuator positions.
    Fk {
        /// Degrees.
        #[arg(long, allow_hyphen_values = true)]
        theta_fl: f64,
        /// Degrees.
        #[arg(long, allow_hyphen_values = true)]
        theta_ab: f64,
        /// Lateral pelvis offset, mm.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        pelvis: f64,
        /// left or right.
        #[arg(long, default_value = "right")]
        side: String,
    },
    /// Actuator positions to hip angles.
    Ik {
        /// Meters.
        #[arg(long)]
        p_int: f64,
        /// Meters.
        #[arg(long)]
        p_ext: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        pelvis: f64,
        #[arg(long, default_value = "right")]
        side: String,
    },
    /// Actuator reference series of a saved pattern.
    ExportActuators {
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long, default_value_t = 0.001)]
        dt: f64,
    },
    /// Grid positions of a saved pattern for plotting.
    Plotdata {
        #[arg(long)]
        pattern: PathBuf,
        /// Grid points; defaults to the configured grid size.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Synthetic dataset whose key events follow exact linear laws.
    Synth {
        #[arg(long, default_value_t = 24)]
        subjects: usize,
    },
}

fn version() -> String {
    format!("{} (model bank format {BANK_FORMAT_VERSION})", env!("CARGO_PKG_VERSION"))
}

fn main() -> ExitCode {
    let matches = Cli::command().version(&*Box::leak(version().into_boxed_str())).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let file = match &cli.global.config {
        Some(path) => match RunConfigFile::load(path) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        },
        None => RunConfigFile::default(),
    };
    let cfg = file.merge(cli.global.overrides());
    match commands::run(&cli.command, &cfg, cli.global.dry_run) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
