//! Error types shared across the crate.

use thiserror::Error;

/// Errors from hash-function construction and batched evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HashError {
    #[error("hash range must be in [1, {max}), got {got}")]
    InvalidRange { got: u64, max: u64 },
    #[error("independence degree must be in [1, {max}), got {got}")]
    InvalidDegree { got: u64, max: u64 },
    #[error("batch of {len} points exceeds the polynomial degree bound t = {t}")]
    BatchTooLarge { len: usize, t: usize },
}

/// Rejected sketch configurations, including counter-capacity admission.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },
    #[error("counter {counter} can overflow 128 bits under (m={m}, r={r}, n_max={n_max})")]
    CounterOverflow {
        counter: &'static str,
        m: u64,
        r: u64,
        n_max: u64,
    },
    #[error(transparent)]
    Hash(#[from] HashError),
}

/// Errors from combining two sketches.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("sketches have different configurations or master seeds")]
    IncompatibleConfig,
    #[error("stream difference requires the non-strict model")]
    StrictDifference,
    #[error("counter overflow while combining sketches")]
    CounterOverflow,
    #[error("sketch has buffered updates; flush before merging")]
    Unflushed,
}

/// Rejected stream updates.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UpdateError {
    #[error("value {value} outside the admissible universe [1, {m})")]
    ValueOutOfRange { value: u64, m: u64 },
    #[error("count {count} outside [-{r}, {r}]")]
    CountOutOfRange { count: i64, r: u64 },
}

/// Errors from sample extraction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExtractError {
    #[error("recovery failed at level {level} after {fallbacks} fallback levels")]
    RecoveryExhausted { level: u32, fallbacks: u32 },
    #[error("requested sample size {requested} exceeds configured K = {k}")]
    SampleTooLarge { requested: u64, k: u64 },
    #[error("recovery failed at fixed level {level}")]
    LevelRecoveryFailed { level: u32 },
    #[error("level {level} out of range; sketch has {levels} levels")]
    LevelOutOfRange { level: u32, levels: u32 },
    #[error("sketch has buffered updates; flush before fixed-level extraction")]
    Unflushed,
}

/// Errors from the sample-consuming estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("estimator is undefined on an empty sample")]
    EmptySample,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// Errors from reading or writing the serialized container.
#[derive(Debug, Error)]
pub enum ContainerError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic; not a sketch container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("container is truncated or has trailing bytes")]
    Truncated,
    #[error("CRC-32 mismatch; container is corrupted")]
    CrcMismatch,
    #[error("stored derived parameter {name} = {stored} does not match recomputed {computed}")]
    DerivedMismatch {
        name: &'static str,
        stored: u64,
        computed: u64,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}
