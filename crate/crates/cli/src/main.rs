mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use adcsr::train::TrainMode;
use adcsr::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adcsr", version, about = "Adaptive densely connected single-image super-resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write bicubic LR images and a checksum manifest for a directory of HR PNGs.
    Prepare {
        #[arg(long)]
        hr_dir: PathBuf,
        #[arg(long)]
        scale: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a config file.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or the bicubic baseline) on a benchmark directory.
    Eval(EvalArgs),
    /// Super-resolve a single image.
    Sr {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ensemble: bool,
    },
    /// Spectrum heatmap and high-frequency energy fraction of an image's luma.
    Spectrum {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = adcsr::metrics::DEFAULT_CUTOFF)]
        cutoff: f64,
    },
    /// Parameter and multiply-accumulate counts per reconstruction head.
    Count {
        #[arg(long)]
        config: Option<PathBuf>,
        /// LR input size as HxW.
        #[arg(long, default_value = "48x48")]
        input_size: String,
        /// Also instantiate each model and sum its parameters.
        #[arg(long)]
        verify: bool,
    },
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Initialise BODY from another scale's checkpoint (head and SKIP excluded).
    #[arg(long)]
    pub transfer_from: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<TrainMode>,
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub pretrain_steps: Option<u64>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub data_root: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Omit to evaluate the bicubic baseline.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Directory containing `HR/` (and optionally `LR_x<r>/`).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub scale: Option<usize>,
    #[arg(long)]
    pub ensemble: bool,
    #[arg(long)]
    pub rgb: bool,
    #[arg(long)]
    pub border_crop: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Report path; defaults to `<out_dir>/eval_<dataset>_x<r>.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    TrainMode::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| format!("unknown mode {s:?}; expected direct, pretrain_skip_then_joint or pretrain_skip_then_freeze"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Numeric(_) => 3,
        Error::Shape(_) | Error::Data(_) | Error::Corrupt(_) | Error::Io(_) => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Prepare { hr_dir, scale, out } => commands::prepare(&hr_dir, scale, &out),
        Command::Train(args) => commands::train(&args),
        Command::Eval(args) => commands::eval(&args),
        Command::Sr { ckpt, input, out, ensemble } => commands::sr(&ckpt, &input, &out, ensemble),
        Command::Spectrum { input, out, cutoff } => commands::spectrum(&input, &out, cutoff),
        Command::Count { config, input_size, verify } => commands::count(config.as_deref(), &input_size, verify),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
