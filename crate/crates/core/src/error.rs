use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("index out of range: {index} >= {len}")]
    Index { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("estimation failed for feature {feature}: {reason}")]
    Estimation { feature: usize, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular system ({context}); use a ridge parameter alpha > 0 or drop collinear predictors")]
    Singular { context: String },

    #[error("feature selection failed for feature {feature}: no observed predictors")]
    Selection { feature: usize },

    #[error("degenerate conditioning: {0}")]
    Degenerate(String),

    #[error("tuning failed: {0}")]
    Tuning(String),

    #[error("scoring failed: {0}")]
    Scoring(String),

    #[error("mask generation failed: {0}")]
    Generation(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported model file: {0}")]
    Version(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Estimation { .. }
                | Error::Domain(_)
                | Error::Singular { .. }
                | Error::Degenerate(_)
                | Error::Tuning(_)
        )
    }

    pub(crate) fn singular(context: impl Into<String>) -> Self {
        Error::Singular {
            context: context.into(),
        }
    }

    /// Prefix the context of a singularity error, leaving other variants untouched.
    pub(crate) fn within(self, outer: impl std::fmt::Display) -> Self {
        match self {
            Error::Singular { context } => Error::Singular {
                context: format!("{outer}: {context}"),
            },
            other => other,
        }
    }
}
