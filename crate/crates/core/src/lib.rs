//! A mergeable linear sketch for turnstile data streams (insertions and
//! deletions, optionally negative totals) that extracts an exact sample of
//! (value, total-count) pairs.
//!
//! The sketch routes each value to one geometric level, keeps a compact
//! recovery structure per level, and tracks the number of distinct surviving
//! values. Extraction picks the level expected to hold Theta(K) values and
//! recovers them exactly: every returned pair carries the value's true total.
//! Exact totals are what make inverse-distribution statistics (the fraction
//! of values with a given total) answerable with additive-error guarantees;
//! an approximate sample cannot answer them at all.
//!
//! Two recovery structures are available, trading update cost for
//! completeness:
//!
//! * [`RecoveryKind::Frs`] recovers every element of its level, touching
//!   O(log(K/delta)) array cells per update;
//! * [`RecoveryKind::Efrs`] touches two cells per update and recovers all but
//!   an epsilon fraction.
//!
//! Sketch state is a sum over updates: update order never matters, two
//! sketches built with the same configuration and master seed merge by
//! cellwise addition (union) or subtraction (difference), and serialization
//! is bit-exact. See [`container`] for the on-disk format.
//!
//! ```
//! use tsketch::{Model, RecoveryKind, SamplerConfig, SamplerSketch};
//!
//! let config = SamplerConfig::new(Model::Strict, RecoveryKind::Frs, 16, 0.1)
//!     .with_universe(1 << 20, 1 << 20, 1 << 30)
//!     .with_seed(42);
//! let mut sketch = SamplerSketch::new(config).unwrap();
//! for k in 1..1000u64 {
//!     sketch.update(k, 2).unwrap();
//!     if k % 3 == 0 {
//!         sketch.update(k, -2).unwrap(); // deletion
//!     }
//! }
//! let sample = sketch.extract().unwrap();
//! assert!(sample.entries.iter().all(|&(k, c)| k % 3 != 0 && c == 2));
//! ```

pub mod bin_sketch;
pub mod container;
pub mod efrs;
pub mod error;
pub mod field_hash;
pub mod frs;
pub mod l0_estimate;
pub mod level_map;
pub mod sampler;
pub mod stats;

/// Turnstile stream model. Strict: every value's running total stays
/// nonnegative. Non-strict: totals may go negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Strict,
    NonStrict,
}

/// Which recovery structure sits in each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecoveryKind {
    /// Full Recovery Structure: log(K/delta) arrays, full recovery.
    Frs,
    /// epsilon-Full Recovery Structure: two arrays, peeling recovery, at most
    /// an epsilon fraction lost.
    Efrs,
}

pub use error::{
    ConfigError, ContainerError, ExtractError, HashError, MergeError, StatsError, UpdateError,
};
pub use field_hash::{HashFn, MultipointPlan, FIELD_PRIME};
pub use sampler::{
    MergeOp, Sample, SampleLevel, SamplerConfig, SamplerSketch, DEFAULT_SEED,
};
