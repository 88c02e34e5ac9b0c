//! Streaming class-incremental learning with per-class principal subspaces
//! and a regularized quadratic discriminant.

pub mod bank;
pub mod continual;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod persist;
pub mod qdc;

pub use bank::{finalize_class, select_rank, ClassModel, MemoryFootprint, RankPolicy, SufficientStats, VectorBank};
pub use continual::{evaluate_with, make_schedule, Evaluation, Protocol, Task, TaskSchedule, TrainerState};
pub use dataset::{LabeledDataset, PixelScale, Split};
pub use error::{Error, ErrorKind, Result};
pub use linalg::{Basis, EigenDecomposition, EigenSolver, SymMatrix};
pub use metrics::{ConfigSnapshot, ConfusionMatrix, EvalReport, ReportFormat, Timing};
pub use persist::{load_bank, save_bank};
pub use qdc::{Classifier, LogDetCoefficient, Prediction, QdcConfig};

/// Class label.
pub type ClassId = u32;
