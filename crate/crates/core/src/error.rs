use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no events left for match {0} after dropping rows outside the time domain")]
    EmptyAfterTruncation(String),
    #[error("cumulative score decreases in match {match_id} at minute {minute}")]
    NonMonotoneScores { match_id: String, minute: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("unsupported kernel derivative order ({0}, {1})")]
    UnsupportedOrder(usize, usize),
    #[error("matrix is not positive definite even with jitter {jitter:e}")]
    FactorizationFailure { jitter: f64 },
    #[error("optimizer diverged: {0}")]
    OptimizerDiverged(String),
    #[error("chain {chain} diverged: {reason}")]
    ChainDiverged { chain: usize, reason: String },
    #[error("derivative correlation is degenerate (omega = {0})")]
    DegenerateCorrelation(f64),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("a group with a single observation makes leave-one-out prediction undefined")]
    SingletonGroupObservation,
    #[error("missing bundle file {0}")]
    MissingBundle(String),
    #[error("too many failed draws: {failed} of {total}")]
    TooManyFailedDraws { failed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Numerical failures as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::FactorizationFailure { .. }
                | Error::OptimizerDiverged(_)
                | Error::ChainDiverged { .. }
                | Error::DegenerateCorrelation(_)
                | Error::TooManyFailedDraws { .. }
        )
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyAfterTruncation(_) => "EmptyAfterTruncation",
            Error::NonMonotoneScores { .. } => "NonMonotoneScores",
            Error::InvalidInput(_) => "InvalidInput",
            Error::InvalidHyperparams(_) => "InvalidHyperparams",
            Error::UnsupportedOrder(..) => "UnsupportedOrder",
            Error::FactorizationFailure { .. } => "FactorizationFailure",
            Error::OptimizerDiverged(_) => "OptimizerDiverged",
            Error::ChainDiverged { .. } => "ChainDiverged",
            Error::DegenerateCorrelation(_) => "DegenerateCorrelation",
            Error::InsufficientData(_) => "InsufficientData",
            Error::SingletonGroupObservation => "SingletonGroupObservation",
            Error::MissingBundle(_) => "MissingBundle",
            Error::TooManyFailedDraws { .. } => "TooManyFailedDraws",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
            Error::Config(_) => "Config",
        }
    }
}
