//! Command-line front end over the library pipeline.

mod commands;
mod config;
mod svg;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// Process exit codes. Stable: scripts branch on them.
pub mod exit {
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const EMPTY_DATASET: u8 = 3;
    pub const ACTION_MISMATCH: u8 = 4;
    pub const NO_CSV: u8 = 5;
}

#[derive(Parser, Debug)]
#[command(name = "softworld", version, about = "Soft-object manipulation with a latent transformer world model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed (a single seed for `train`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Explore the simulator and write trajectory shards plus a manifest.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Pretrain the encoder and SoftGPT on a generated dataset.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train a policy variant for every configured seed.
    Train {
        #[command(flatten)]
        common: Common,
        /// Pretraining output holding `encoder.ckpt` and `softgpt.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue runs found in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Greedy evaluation of a trained run with particle dumps.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Run directory written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Learning-curve SVGs, one per task, from metrics CSVs.
    Plot {
        /// Directory scanned for `*.csv` metrics files.
        csv_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::new(exit::CONFIG, anyhow::anyhow!("invalid configuration: {msg}"))
    }
}

impl From<softworld::Error> for Failure {
    fn from(e: softworld::Error) -> Self {
        let code = match e {
            softworld::Error::Config(_) => exit::CONFIG,
            softworld::Error::InsufficientData(_) => exit::EMPTY_DATASET,
            _ => exit::FAILURE,
        };
        Self::new(code, e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: exit::FAILURE, error }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { common } => commands::gen_data(&common),
        Command::Pretrain { common, dataset } => commands::pretrain(&common, dataset),
        Command::Train { common, checkpoint, resume } => commands::train(&common, checkpoint, resume),
        Command::Eval { common, checkpoint } => commands::eval(&common, &checkpoint),
        Command::Plot { csv_dir, out } => commands::plot(&csv_dir, out),
    }
}
