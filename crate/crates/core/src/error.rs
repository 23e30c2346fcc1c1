use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate posterior for unlabeled row {row}: unnormalized weights are all zero")]
    DegeneratePosterior { row: usize },

    #[error("class {class} has zero total mass (labeled + pseudo-labeled)")]
    ClassMass { class: usize },

    #[error("invalid cross-fitting folds: {0} (use 0 for no splitting or K >= 2)")]
    InvalidFolds(usize),

    #[error("variance undefined: need at least 2 samples, got {0}")]
    VarianceUndefined(usize),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
