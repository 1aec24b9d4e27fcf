use thiserror::Error;

/// Errors raised by the numerical pipeline and the command layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("matrix {label} is not invertible (sigma_min / sigma_max = {ratio:e})")]
    NotInvertible { label: String, ratio: f64 },

    #[error("singular value decomposition did not converge for matrix {label}")]
    NumericalFailure { label: String },

    #[error("ill-defined splitting: {0}")]
    IllDefinedSplitting(String),

    #[error("ill-conditioned basis at t = {t}, lambda = {lambda} (margin {margin:e})")]
    Conditioning { t: f64, lambda: f64, margin: f64 },

    #[error("multicone construction failed: {reason}")]
    Construction {
        reason: String,
        /// Component count for each scanned radius.
        table: Vec<(f64, usize)>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Attach a matrix label to label-carrying variants.
    pub fn labeled(self, label: &str) -> Self {
        match self {
            Error::NotInvertible { ratio, .. } => Error::NotInvertible {
                label: label.to_string(),
                ratio,
            },
            Error::NumericalFailure { .. } => Error::NumericalFailure {
                label: label.to_string(),
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
