//! Batch experiment driver wiring environments, meta-training, bound
//! evaluation, prediction metrics, and Bayesian optimization into
//! reproducible CSV/JSON artifacts.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pacoh_lab::Error as LabError;

#[derive(Parser)]
#[command(name = "pacoh-lab", version, about = "PAC-Bayesian meta-learning experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed recorded in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Caps the worker thread count.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate generalization-bound curves over a task-count sweep.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Meta-train a hyper-posterior and write a checkpoint.
    MetaTrain {
        #[command(flatten)]
        common: CommonArgs,
        /// Drop the hyper-prior term from the training score.
        #[arg(long)]
        mll_only: bool,
    },
    /// Evaluate a checkpoint on meta-test tasks.
    MetaTest {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained checkpoint to evaluate.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Ignore the checkpoint's hyper-posterior and use the hyper-prior
        /// mean as the prior (no-meta-learning baseline).
        #[arg(long)]
        vanilla: bool,
    },
    /// Run the candidate-pool bandit.
    Bo {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint with meta-learned priors; omitting it runs the
        /// standard-prior baseline.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

/// Error with the exit code contract: 2 for configuration/validation
/// problems, 3 for numerical failures.
#[derive(Debug)]
pub struct CliError {
    pub message: String,
    pub code: u8,
}

impl CliError {
    pub fn config(err: impl std::fmt::Display) -> Self {
        Self { message: err.to_string(), code: 2 }
    }

    pub fn numerical(err: impl std::fmt::Display) -> Self {
        Self { message: err.to_string(), code: 3 }
    }

    pub fn from_lab(err: LabError) -> Self {
        match err {
            LabError::InvalidConfig(_)
            | LabError::DimensionMismatch { .. }
            | LabError::LengthMismatch { .. }
            | LabError::InvalidRange { .. }
            | LabError::EmptyInput
            | LabError::EmptyPool => Self { message: err.to_string(), code: 2 },
            LabError::NotPositiveDefinite
            | LabError::OutOfValidityWindow(_)
            | LabError::EffectiveSampleSizeTooLow { .. }
            | LabError::DivergenceDetected(_)
            | LabError::NonFinite(_) => Self { message: err.to_string(), code: 3 },
        }
    }
}

impl From<LabError> for CliError {
    fn from(err: LabError) -> Self {
        CliError::from_lab(err)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::config(err)
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn setup(common: &CommonArgs) {
    if let Some(t) = common.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("PACOH_LAB_LOG", "error"),
    )
    .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bounds { common } => {
            setup(common);
            read_config(&common.config)
                .and_then(|cfg| commands::bounds::run(cfg, common.seed, &common.out))
        }
        Command::MetaTrain { common, mll_only } => {
            setup(common);
            read_config(&common.config).and_then(|cfg| {
                commands::meta_train::run(cfg, common.seed, *mll_only, &common.out)
            })
        }
        Command::MetaTest { common, checkpoint, vanilla } => {
            setup(common);
            read_config(&common.config).and_then(|cfg| {
                commands::meta_test::run(cfg, common.seed, checkpoint, *vanilla, &common.out)
            })
        }
        Command::Bo { common, checkpoint } => {
            setup(common);
            read_config(&common.config).and_then(|cfg| {
                commands::bo::run(cfg, common.seed, checkpoint.as_deref(), &common.out)
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
