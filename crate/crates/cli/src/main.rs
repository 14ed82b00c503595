//! `gearmotion`: generate assemblies, estimate coupling, train, predict,
//! evaluate and ablate.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gearmotion_core::Error;

#[derive(Parser)]
#[command(name = "gearmotion", version, about = "Gear assembly motion synthesis and prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of gear assemblies with ground-truth motion.
    Gen {
        /// Flat `key = value` generator overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Base preset: desk, paper or suite.
        #[arg(long, default_value = "desk")]
        preset: String,
        /// Number of assemblies, overriding the preset and config.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the estimated coupling matrix of one assembly.
    Couple {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = gearmotion_core::coupling::DEFAULT_TAU_D)]
        tau_d: f64,
        #[arg(long, default_value_t = gearmotion_core::coupling::DEFAULT_TAU_C)]
        tau_c: usize,
    },
    /// Train a model on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Model and training configuration; defaults to the stored one
        /// when resuming.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the state stored in `--out`.
        #[arg(long)]
        resume: bool,
    },
    /// Write predicted motion files for an assembly or a whole dataset.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Configuration of the checkpoint; defaults to `config.cfg` beside it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted motion with ground truth and write `report.csv`.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every combination of message passing on/off and point density.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![128usize, 256])]
        points: Vec<usize>,
    },
}

/// Exit status of a failed command.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::ShapeMismatch { .. } | Error::DriverNotGear(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        _ => 4,
    }
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("GEARMOTION_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("GEARMOTION_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Error> {
    init_threads()?;
    match cli.command {
        Command::Gen {
            config,
            preset,
            count,
            seed,
            out,
        } => commands::gen(config.as_deref(), &preset, count, seed, &out),
        Command::Couple { input, tau_d, tau_c } => commands::couple(&input, tau_d, tau_c),
        Command::Train {
            data,
            config,
            out,
            resume,
        } => commands::train(&data, config.as_deref(), &out, resume),
        Command::Predict {
            checkpoint,
            config,
            input,
            out,
        } => commands::predict(&checkpoint, config.as_deref(), &input, &out),
        Command::Eval { pred, gt, out } => commands::eval(&pred, &gt, &out),
        Command::Ablate {
            data,
            config,
            out,
            seeds,
            points,
        } => commands::ablate(&data, config.as_deref(), &out, &seeds, &points),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
