use std::io;

use crate::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("eigensolver did not converge after {iterations} iterations")]
    ConvergenceFailure { iterations: usize },
    #[error("class {0} has no samples")]
    EmptyClass(ClassId),
    #[error("vector bank is empty")]
    EmptyBank,
    #[error("unknown class {0}")]
    UnknownClass(ClassId),
    #[error("class {0} has a singular covariance and alpha is zero")]
    SingularCovariance(ClassId),
    #[error("{classes} classes cannot be split into groups of {group}")]
    IndivisibleClasses { classes: usize, group: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("label {0} out of range")]
    LabelOutOfRange(u8),
    #[error("image count {images} does not match label count {labels}")]
    SizeMismatch { images: usize, labels: usize },
    #[error("class {class} has {available} samples, {requested} requested")]
    InsufficientSamples {
        class: ClassId,
        available: usize,
        requested: usize,
    },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("corrupt bank file: {0}")]
    CorruptBank(String),
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("task {0} was already trained")]
    TaskReplayed(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_)
            | Error::IndivisibleClasses { .. }
            | Error::UnknownClass(_)
            | Error::TaskReplayed(_) => {
                ErrorKind::Usage
            }
            Error::EmptyDataset
            | Error::BadMagic { .. }
            | Error::TruncatedFile { .. }
            | Error::LabelOutOfRange(_)
            | Error::SizeMismatch { .. }
            | Error::InsufficientSamples { .. }
            | Error::CorruptBank(_)
            | Error::MalformedReport(_)
            | Error::Io(_) => ErrorKind::Data,
            Error::EmptyInput
            | Error::DimMismatch { .. }
            | Error::ConvergenceFailure { .. }
            | Error::EmptyClass(_)
            | Error::EmptyBank
            | Error::SingularCovariance(_)
            | Error::EmptyMatrix => ErrorKind::Numeric,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimMismatch { expected, found })
    }
}
