use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{field} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{field} must be positive (got {value})")]
    NonPositive { field: &'static str, value: f64 },

    #[error("scores and weights differ in length ({scores} vs {weights})")]
    LengthMismatch { scores: usize, weights: usize },

    #[error("weights contain a negative entry ({0})")]
    NegativeWeight(f64),

    #[error("weights and infinity mass must sum to 1 (got {total})")]
    UnnormalizedWeights { total: f64 },

    #[error("empty score list with zero mass at infinity")]
    EmptyQuantileSupport,

    #[error("empty calibration input")]
    EmptyCalibration,

    #[error("bin {bin} has no calibration data and fallback is disabled")]
    MissingCalibration { bin: u32 },

    #[error("negative bid {0}")]
    NegativeBid(f64),

    #[error("pctr must be positive to define the price threshold (bid {bid})")]
    UndefinedThreshold { bid: f64 },

    #[error("payment {payment} exceeds remaining budget {remaining}")]
    BudgetOverdraft { payment: f64, remaining: f64 },

    #[error("horizon {got} exceeds the brute-force cap {cap}")]
    HorizonTooLarge { got: usize, cap: usize },

    #[error("RoS is undefined on a ledger with zero spend")]
    UndefinedRos,

    #[error("v_min = 0 violates the positive-value assumption")]
    ZeroValueAssumption,

    #[error("ratio is undefined: baseline mean score is zero")]
    UndefinedRatio,

    #[error("empty ledger")]
    EmptyLedger,

    #[error("empty list passed to {0}")]
    EmptyInput(&'static str),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("invalid value in column `{column}` at line {line}: {msg}")]
    Validation {
        line: u64,
        column: &'static str,
        msg: String,
    },

    #[error("fewer training points ({points}) than bins ({bins})")]
    TooFewPoints { points: usize, bins: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
