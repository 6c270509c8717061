use thiserror::Error;

/// Errors raised while reading triangles, fitting models or simulating reserves.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty triangle input")]
    Empty,
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("triangle has {rows} accident years but {cols} development years; only square triangles are supported")]
    NotSquare { rows: usize, cols: usize },
    #[error("triangle needs at least 2 accident years, found {0}")]
    TooSmall(usize),
    #[error("negative count {value} at accident year {ay}, development year {dy}")]
    NegativeCount { ay: usize, dy: usize, value: String },
    #[error("non-integer count {value:?} at accident year {ay}, development year {dy}")]
    NonIntegerCount { ay: usize, dy: usize, value: String },
    #[error("observed cell at accident year {ay}, development year {dy} is missing")]
    MissingObservedCell { ay: usize, dy: usize },
    #[error("future cell at accident year {ay}, development year {dy} is populated")]
    FuturePopulated { ay: usize, dy: usize },
    #[error("cell records do not form a complete triangle: {0}")]
    InvalidRecords(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("development factor {dev} has a zero denominator column sum")]
    ZeroColumnSum { dev: usize },

    #[error("{factor} level {level} has only zero counts; its coefficient diverges")]
    Separation { factor: &'static str, level: usize },
    #[error("IRLS did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("design matrix is rank deficient ({0} observations for {1} parameters)")]
    RankDeficient(usize, usize),
    #[error("no residual degrees of freedom ({n_obs} observations for {n_params} parameters)")]
    Saturated { n_obs: usize, n_params: usize },
    #[error("information matrix is singular")]
    SingularInformation,
    #[error("profile likelihood for kappa is flat at {kappa:.4} (curvature {curvature:.3e})")]
    FlatProfile { kappa: f64, curvature: f64 },

    #[error("base model fit failed: {0}")]
    BaseFitFailed(Box<Error>),
    #[error("{failures} of {requested} bootstrap refits failed")]
    ExcessiveFailures { failures: usize, requested: usize },
    #[error("{available} draws are too few for a {level} interval (need at least {required})")]
    TooFewDraws {
        available: usize,
        required: usize,
        level: f64,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Short machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Empty => "Empty",
            Error::RaggedRow { .. } => "RaggedRow",
            Error::NotSquare { .. } => "NotSquare",
            Error::TooSmall(_) => "TooSmall",
            Error::NegativeCount { .. } => "NegativeCount",
            Error::NonIntegerCount { .. } => "NonIntegerCount",
            Error::MissingObservedCell { .. } => "MissingObservedCell",
            Error::FuturePopulated { .. } => "FuturePopulated",
            Error::InvalidRecords(_) => "InvalidRecords",
            Error::Csv(_) => "Csv",
            Error::ZeroColumnSum { .. } => "ZeroColumnSum",
            Error::Separation { .. } => "Separation",
            Error::NotConverged { .. } => "NotConverged",
            Error::RankDeficient(..) => "RankDeficient",
            Error::Saturated { .. } => "Saturated",
            Error::SingularInformation => "SingularInformation",
            Error::FlatProfile { .. } => "FlatProfile",
            Error::BaseFitFailed(_) => "BaseFitFailed",
            Error::ExcessiveFailures { .. } => "ExcessiveFailures",
            Error::TooFewDraws { .. } => "TooFewDraws",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// True for malformed input, as opposed to a model or numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Empty
                | Error::RaggedRow { .. }
                | Error::NotSquare { .. }
                | Error::TooSmall(_)
                | Error::NegativeCount { .. }
                | Error::NonIntegerCount { .. }
                | Error::MissingObservedCell { .. }
                | Error::FuturePopulated { .. }
                | Error::InvalidRecords(_)
                | Error::Csv(_)
                | Error::InvalidConfig(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
