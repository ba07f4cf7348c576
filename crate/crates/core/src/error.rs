use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("symbol {symbol} out of range for alphabet of size {k}")]
    InvalidSymbol { symbol: usize, k: usize },
    #[error("exact computation needs {states} states, above the limit of {limit}")]
    ScaleGuardExceeded { states: u128, limit: u128 },
    #[error("pinning has zero probability")]
    ZeroProbabilityPinning,
    #[error("support violation: first distribution charges an outcome the second excludes")]
    SupportViolation,
    #[error("invalid model field `{field}`: {reason}")]
    InvalidModel { field: String, reason: String },
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("oracle mode {mode} does not permit {op} queries")]
    ModeUnsupported { mode: String, op: &'static str },
    #[error("backend {backend} cannot serve model variant {variant}")]
    BackendUnsupported { backend: String, variant: &'static str },
    #[error("sample {symbol} has zero mass under the target")]
    UnsupportedSymbol { symbol: usize },
    #[error("pinning is infeasible under the adversarial distribution")]
    InfeasiblePinning,
    #[error("marginal provider failed: {0}")]
    ProviderFailure(String),
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("tester {tester} needs {needs} access, oracle mode is {mode}")]
    IncompatibleMode { tester: String, needs: String, mode: String },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("constants file: {0}")]
    Constants(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidModel { field: field.to_string(), reason: reason.into() }
}

pub(crate) fn range(msg: impl Into<String>) -> Error {
    Error::InvalidRange(msg.into())
}
