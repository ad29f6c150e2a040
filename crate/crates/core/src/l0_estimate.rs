//! Mergeable estimation of L0, the number of distinct values with nonzero
//! total (the Hamming norm of the stream).
//!
//! The sampler only needs a constant-factor approximation, but at success
//! probability 1 - delta and with randomness independent of the level hash.
//! [`AmplifiedEstimator`] keeps tau = O(log 1/delta) base instances, routes
//! each value to one instance with a split hash, and reports a calibrated
//! multiple of the median instance estimate.
//!
//! Each base instance is a geometric bit-sampling grid: depth j sees the
//! values whose sampling hash has at least j trailing zero bits (a 2^-j
//! sample), spread over 64 non-strict Bin Sketch cells. The instance reads
//! occupancy at the shallowest depth that is comfortably unsaturated and
//! inverts the expected-occupancy formula. The constants here are contract
//! constants, validated against [`ExactDistinctCounter`] by the test suite
//! rather than derived.

use std::collections::HashMap;

use crate::bin_sketch::NonStrictBinSketch;
use crate::error::{ConfigError, MergeError};
use crate::field_hash::{sub_seed, HashFn, MultipointPlan};

/// Cells per sampling depth in a base instance.
const CELLS: usize = 64;
/// Occupancy ceiling used to pick the read-out depth.
const OCCUPANCY_LIMIT: usize = 40;
/// Instance count multiplier: tau = ceil(AMPLIFY * log2(1/delta)).
const AMPLIFY: f64 = 4.0;
/// Range of the cell guard hash; one false-empty per 2^24 cell inspections.
const GUARD_RANGE: u64 = 1 << 24;
/// Independence of the per-instance sampling hash.
const SAMPLER_DEGREE: u64 = 8;

/// A mergeable distinct-count estimator with a declared (alpha, delta)
/// contract: L0 <= estimate <= alpha * L0 with probability 1 - delta, for
/// streams that are large relative to K.
pub trait L0Estimator {
    fn update(&mut self, k: u64, c: i128);
    fn estimate(&self) -> u64;
}

/// Exact reference estimator: a value-to-total map. Linear memory; test and
/// oracle use only.
#[derive(Debug, Clone, Default)]
pub struct ExactDistinctCounter {
    totals: HashMap<u64, i128>,
}

impl ExactDistinctCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn merge(&mut self, other: &Self, sign: i128) {
        for (&k, &c) in &other.totals {
            self.update(k, sign * c);
        }
    }

    pub fn totals(&self) -> &HashMap<u64, i128> {
        &self.totals
    }
}

impl L0Estimator for ExactDistinctCounter {
    fn update(&mut self, k: u64, c: i128) {
        let entry = self.totals.entry(k).or_insert(0);
        *entry += c;
        if *entry == 0 {
            self.totals.remove(&k);
        }
    }

    fn estimate(&self) -> u64 {
        self.totals.len() as u64
    }
}

/// Shape of an [`AmplifiedEstimator`], derived from (delta, n_max, alpha).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L0Params {
    pub instances: usize,
    pub depths: usize,
    pub split_degree: u64,
    pub alpha: f64,
}

impl L0Params {
    pub fn new(delta: f64, n_max: u64, alpha: f64, split_degree: u64) -> Self {
        let instances = (AMPLIFY * (1.0 / delta).log2()).ceil().max(1.0) as usize;
        let bits = 64 - n_max.leading_zeros() as usize;
        let depths = (bits + 2).clamp(16, 48);
        Self {
            instances,
            depths,
            split_degree,
            alpha,
        }
    }

    pub fn cells_per_instance(&self) -> usize {
        self.depths * CELLS
    }

    pub fn cells(&self) -> usize {
        CELLS
    }

    pub fn guard_range(&self) -> u64 {
        GUARD_RANGE
    }
}

/// Median-amplified estimator over `instances` bit-sampling grids.
#[derive(Debug, Clone)]
pub struct AmplifiedEstimator {
    params: L0Params,
    split: HashFn,
    guard: HashFn,
    samplers: Vec<HashFn>,
    pub(crate) cells: Vec<NonStrictBinSketch>,
}

impl AmplifiedEstimator {
    /// Sub-seed indices under the estimator's seed domain.
    const IDX_SPLIT: u64 = 0;
    const IDX_GUARD: u64 = 1;
    const IDX_SAMPLER0: u64 = 2;

    pub fn new(params: L0Params, seed: u64) -> Result<Self, ConfigError> {
        let split = HashFn::new(
            sub_seed(seed, 0, Self::IDX_SPLIT),
            params.split_degree,
            params.instances as u64,
        )?;
        // Degree at least the batch size so batched evaluation stays within
        // the multipoint contract.
        let guard = HashFn::new(
            sub_seed(seed, 0, Self::IDX_GUARD),
            params.split_degree.max(32),
            GUARD_RANGE,
        )?;
        let sampler_range = (CELLS as u64) << params.depths;
        let samplers = (0..params.instances)
            .map(|i| {
                HashFn::new(
                    sub_seed(seed, 0, Self::IDX_SAMPLER0 + i as u64),
                    SAMPLER_DEGREE,
                    sampler_range,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cells = vec![NonStrictBinSketch::default(); params.instances * params.cells_per_instance()];
        Ok(Self {
            params,
            split,
            guard,
            samplers,
            cells,
        })
    }

    pub fn params(&self) -> &L0Params {
        &self.params
    }

    /// Batched split-hash values for the sampler's ingestion buffer.
    pub fn split_values(&self, plan: &MultipointPlan) -> Vec<u64> {
        self.split.eval_with_plan(plan)
    }

    /// Batched guard-hash values for the sampler's ingestion buffer.
    pub fn guard_values(&self, plan: &MultipointPlan) -> Vec<u64> {
        self.guard.eval_with_plan(plan)
    }

    /// Applies one update whose split and guard hashes are already known.
    pub fn update_routed(&mut self, k: u64, c: i128, instance: u64, guard_value: u64) {
        let instance = instance as usize;
        debug_assert!(instance < self.params.instances);
        let v = self.samplers[instance].eval(k);
        let cell = (v >> self.params.depths) as usize;
        let low = v & ((1u64 << self.params.depths) - 1);
        let deepest = if low == 0 {
            self.params.depths - 1
        } else {
            (low.trailing_zeros() as usize).min(self.params.depths - 1)
        };
        let base = instance * self.params.cells_per_instance();
        // Nested depths: a value with j trailing zeros lives in depths 0..=j.
        for depth in 0..=deepest {
            self.cells[base + depth * CELLS + cell].insert(k, c, guard_value, None);
        }
    }

    /// Estimate for one instance: occupancy inversion at the shallowest
    /// unsaturated depth, scaled back by the sampling rate 2^-depth.
    fn instance_estimate(&self, instance: usize) -> f64 {
        let base = instance * self.params.cells_per_instance();
        for depth in 0..self.params.depths {
            let row = &self.cells[base + depth * CELLS..base + (depth + 1) * CELLS];
            let occupied = row.iter().filter(|c| !c.is_zero()).count();
            if occupied <= OCCUPANCY_LIMIT || depth == self.params.depths - 1 {
                let v = occupied.min(CELLS - 1) as f64;
                let n = (1.0 - v / CELLS as f64).ln() / (1.0 - 1.0 / CELLS as f64).ln();
                return n * (depth as f64).exp2();
            }
        }
        unreachable!("loop always returns at the deepest depth");
    }

    pub fn merge(&mut self, other: &Self, sign: i128) -> Result<(), MergeError> {
        if self.params != other.params || self.split != other.split {
            return Err(MergeError::IncompatibleConfig);
        }
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.combine(b, sign)?;
        }
        Ok(())
    }
}

impl L0Estimator for AmplifiedEstimator {
    fn update(&mut self, k: u64, c: i128) {
        let instance = self.split.eval(k);
        let guard_value = self.guard.eval(k);
        self.update_routed(k, c, instance, guard_value);
    }

    /// tau times the median instance estimate, inflated by sqrt(alpha) so the
    /// result straddles [L0, alpha * L0] rather than centering on L0.
    ///
    /// Streams with fewer distinct values than instances can zero the median
    /// outright; a nonzero stream still reports at least 1, which sends the
    /// sampler down its whole-stream extraction path instead of declaring
    /// the stream empty.
    fn estimate(&self) -> u64 {
        let mut estimates: Vec<f64> = (0..self.params.instances)
            .map(|i| self.instance_estimate(i))
            .collect();
        estimates.sort_by(|a, b| a.total_cmp(b));
        let median = estimates[estimates.len() / 2];
        let scaled = (self.params.alpha.sqrt() * self.params.instances as f64 * median).ceil();
        if scaled == 0.0 && self.cells.iter().any(|c| !c.is_zero()) {
            return 1;
        }
        scaled as u64
    }
}
