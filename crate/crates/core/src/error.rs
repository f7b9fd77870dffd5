use thiserror::Error;

/// Errors raised by the surrogate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The interpolation matrix is (numerically) rank deficient.
    #[error(
        "interpolation matrix is rank deficient: smallest/largest singular value ratio {ratio:.3e} \
         is below {tolerance:.0e} (duplicate training points or a pathological shape parameter?)"
    )]
    RankDeficient { ratio: f64, tolerance: f64 },

    /// A loss term became NaN or infinite during training.
    #[error("non-finite loss at iteration {iteration} in prior term `{term}` (value {value})")]
    NonFinite {
        iteration: usize,
        term: String,
        value: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (rank deficiency, diverging loss)
    /// as opposed to bad inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::RankDeficient { .. } | Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
