//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Result`]. Variants are
//! deliberately specific so callers (in particular the CLI, which maps them
//! onto process exit codes) can distinguish configuration mistakes from data
//! problems without string matching.

use thiserror::Error;

/// Errors produced by decoding, training, verification, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix dimensions disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The task does not implement an optional capability.
    #[error("task does not support {0}")]
    UnsupportedTask(&'static str),

    /// The direct-loss update was configured with epsilon = 0.
    #[error("direct loss epsilon must be nonzero")]
    ZeroEpsilon,

    /// Two boundary sequences that must align have different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A (begin, end) interval with begin >= end.
    #[error("invalid interval: require begin < end, got ({begin}, {end})")]
    InvalidInterval { begin: usize, end: usize },

    /// A matrix that must be symmetric positive definite is not.
    #[error("matrix is not symmetric positive definite")]
    NonSpd,

    /// No label satisfies the structural constraints of the instance.
    #[error("no feasible label: {0}")]
    Infeasible(String),

    /// The step size and regularizer would make 1 - eta*lambda nonpositive.
    #[error("unstable configuration: eta0 * lambda = {0} must be < 1")]
    ConfigUnstable(f64),

    /// The bound parameter gamma must exceed 1/2.
    #[error("gamma must be > 1/2, got {0}")]
    InvalidGamma(f64),

    /// A margin-conditioned check was invoked on an instance that does not
    /// meet the required margin; callers report this as SKIPPED, not FAIL.
    #[error("margin condition not met: {0}")]
    MarginNotMet(String),

    /// The decoder margin is exactly zero, where the large-scale limit of the
    /// orbit loss is half the cost rather than the cost itself.
    #[error("zero decoder margin: the scaling limit equals cost/2, not cost")]
    DegenerateMargin,

    /// Label enumeration would exceed the supported size.
    #[error("label space too large to enumerate: {0} labels")]
    TooLarge(u128),

    /// A binary file did not start with the expected magic number.
    #[error("bad magic in {path}: expected {expected:#010x}, got {got:#010x}")]
    BadMagic {
        path: String,
        expected: u32,
        got: u32,
    },

    /// A binary file's header promised a different item count than it holds.
    #[error("count mismatch in {path}: header promises {expected}, found {got}")]
    CountMismatch {
        path: String,
        expected: usize,
        got: usize,
    },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A data file or in-memory dataset is malformed.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
