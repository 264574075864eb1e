use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use freqnet_cli::commands;
use freqnet_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "freqnet",
    about = "Frequency-domain neural network training engine",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Config file of `key = value` lines; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Architecture: mnist-cemnet | cifar-small | cifar-large (profiling
    /// also accepts modified-lenet5 | cifar-small-cnn | cifar-large-cnn).
    #[arg(long)]
    arch: Option<String>,
    /// Directory holding the dataset files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Master seed for init, shuffling, and noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Truncate the training set to the first N samples.
    #[arg(long)]
    subset: Option<usize>,
    /// Cap on test samples used for per-epoch evaluation.
    #[arg(long)]
    eval_subset: Option<usize>,
    /// Output directory (metrics CSV, checkpoint).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Initial learning rate.
    #[arg(long)]
    lr_init: Option<f64>,
    /// Final learning rate of the cosine schedule.
    #[arg(long)]
    lr_min: Option<f64>,
    /// Drop rate p for the approximated noise layers.
    #[arg(long)]
    drop_rate: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write metrics plus a checkpoint.
    Train(CommonArgs),
    /// Evaluate a checkpoint on the test set.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint path (default: <out>/checkpoint.bin).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the brute-force oracle suite and print a pass/fail table.
    Verify {
        /// Seed for the randomized checks.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the per-layer operation-count report for an architecture.
    ProfileOps {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write the report as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn resolve(common: CommonArgs) -> Result<RunConfig> {
    let flag_cfg = RunConfig {
        arch: common.arch,
        data_dir: common.data_dir,
        out: common.out,
        checkpoint: None,
        epochs: common.epochs,
        batch_size: common.batch_size,
        seed: common.seed,
        subset: common.subset,
        eval_subset: common.eval_subset,
        lr_init: common.lr_init,
        lr_min: common.lr_min,
        drop_rate: common.drop_rate,
    };
    let base = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    Ok(base.merged_with(flag_cfg))
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train(common) => commands::run_train(&resolve(common)?),
        Command::Eval { common, checkpoint } => {
            let mut cfg = resolve(common)?;
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            commands::run_eval(&cfg)
        }
        Command::Verify { seed } => commands::run_verify(seed),
        Command::ProfileOps { common, csv } => {
            let cfg = resolve(common)?;
            commands::run_profile(&cfg, csv.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
