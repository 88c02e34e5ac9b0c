use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rsac_core::{EigenSolver, Error, LogDetCoefficient, PixelScale, QdcConfig, RankPolicy, ReportFormat, Result};

use crate::run::{default_k, ProtocolKind, RunConfig, SampleCount};

#[derive(Debug, Parser)]
#[command(name = "rsac", version, about = "Continual learning with per-class KLT subspaces and a regularized QDC")]
pub struct Cli {
    /// Worker threads for fitting and evaluation [default: all cores].
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train through a task schedule and evaluate on the test split.
    TrainEval(TrainEvalArgs),
    /// Sweep the power threshold and report k and accuracy per value.
    AblateThreshold(AblateThresholdArgs),
    /// Sweep the number of training samples per class.
    AblateDatasize(AblateDatasizeArgs),
    /// Save, load or inspect a vector bank file.
    #[command(subcommand)]
    Bank(BankCommand),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// mnist, kmnist or fashion (any directory name works with --k or --t).
    #[arg(long, default_value = "mnist")]
    pub dataset: String,

    #[arg(long, env = "RSAC_DATA_ROOT", default_value = "data")]
    pub data_root: PathBuf,

    #[arg(long, value_enum, default_value_t = ProtocolKind::ClassIncremental)]
    pub protocol: ProtocolKind,

    /// Number of tasks (class groups or per-class chunks).
    #[arg(long, default_value_t = 5)]
    pub tasks: usize,

    /// Keep k eigenvectors in every class [default: 150/192/183 for mnist/kmnist/fashion].
    #[arg(long, conflicts_with = "t")]
    pub k: Option<usize>,

    /// Keep the fewest eigenvectors reaching this fraction of each class's spectral energy.
    #[arg(long)]
    pub t: Option<f64>,

    #[arg(long, default_value_t = 0.4)]
    pub alpha: f64,

    /// Weight of the log-determinant term: 0.5 or 1.0.
    #[arg(long, default_value = "0.5")]
    pub logdet_coefficient: LogDetCoefficient,

    /// raw (0..=255) or unit (divided by 255).
    #[arg(long, default_value = "raw")]
    pub pixel_scale: PixelScale,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Train on this many seeded samples per class.
    #[arg(long)]
    pub per_class: Option<usize>,

    /// tridiagonal-ql or jacobi.
    #[arg(long, default_value = "tridiagonal-ql")]
    pub eigensolver: EigenSolver,
}

impl RunArgs {
    pub fn to_config(&self) -> Result<RunConfig> {
        let rank = match (self.k, self.t) {
            (Some(k), None) => RankPolicy::FixedK(k),
            (None, Some(t)) => RankPolicy::PowerThreshold(t),
            (None, None) => RankPolicy::FixedK(default_k(&self.dataset).ok_or_else(|| {
                Error::InvalidConfig(format!("no default k for dataset {:?}; pass --k or --t", self.dataset))
            })?),
            (Some(_), Some(_)) => return Err(Error::InvalidConfig("--k and --t are exclusive".into())),
        };
        let cfg = RunConfig {
            dataset: self.dataset.clone(),
            data_root: self.data_root.clone(),
            protocol: self.protocol,
            tasks: self.tasks,
            rank,
            qdc: QdcConfig {
                alpha: self.alpha,
                logdet_coefficient: self.logdet_coefficient,
            },
            pixel_scale: self.pixel_scale,
            seed: self.seed,
            per_class: self.per_class,
            eigensolver: self.eigensolver,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Report destination [default: stdout].
    #[arg(long)]
    pub output: Option<PathBuf>,

    /// json or csv.
    #[arg(long, default_value = "json")]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct TrainEvalArgs {
    #[command(flatten)]
    pub run: RunArgs,

    #[command(flatten)]
    pub report: ReportArgs,

    /// Write the task schedule manifest here.
    #[arg(long)]
    pub schedule_out: Option<PathBuf>,

    /// Write the confusion matrix as an ASCII PGM image here.
    #[arg(long)]
    pub confusion_pgm: Option<PathBuf>,

    /// Save the trained bank here.
    #[arg(long)]
    pub save_bank: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateThresholdArgs {
    #[command(flatten)]
    pub run: RunArgs,

    #[arg(long, value_delimiter = ',', default_value = "0.8,0.9,0.95,0.96,0.97,0.98")]
    pub thresholds: Vec<f64>,

    /// CSV destination [default: stdout].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateDatasizeArgs {
    #[command(flatten)]
    pub run: RunArgs,

    /// Ascending samples per class; `full` uses the whole split.
    #[arg(long, value_delimiter = ',', default_value = "100,500,2000,full")]
    pub counts: Vec<SampleCount>,

    /// CSV destination [default: stdout].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BankCommand {
    /// Train with the given settings and write the bank.
    Save {
        path: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Read a bank and evaluate it on the test split.
    Load {
        path: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Print per-class ranks, counts and storage.
    Inspect { path: PathBuf },
}
