//! The sampling sketch: buffered ingestion, level routing, per-level
//! recovery structures and the L0 estimator, with union/difference merging.
//!
//! Updates are buffered in micro-batches of t_lvl so the t-wise hash
//! evaluations (level hash, L0 split and guard, and the two epsilon-FRS array
//! hashes) amortize through one shared multipoint plan per batch. Queries
//! flush, and the sketch state is a pure sum over updates, so batch
//! boundaries and update order never change the serialized bytes.
//!
//! Every hash function derives its seed from the master seed under a fixed
//! domain tag, keeping the level mapping, the array hashes, the guard hashes
//! and the L0 randomness mutually independent:
//! level = 0x01, array hashes = 0x02 (indexed), guard = 0x03, L0 = 0x04.

use crate::bin_sketch::check_counter_capacity;
use crate::efrs::{Efrs, EfrsConfig};
use crate::error::{ConfigError, ExtractError, MergeError, UpdateError};
use crate::field_hash::{sub_seed, HashFn, MultipointPlan, FIELD_PRIME};
use crate::frs::{Frs, FrsConfig};
use crate::l0_estimate::{AmplifiedEstimator, L0Estimator, L0Params};
use crate::level_map::LevelConfig;
use crate::{Model, RecoveryKind};

const DOMAIN_LEVEL: u64 = 0x01;
const DOMAIN_ARRAY: u64 = 0x02;
const DOMAIN_GUARD: u64 = 0x03;
const DOMAIN_L0: u64 = 0x04;

/// Default master seed for the CLI and tests.
pub const DEFAULT_SEED: u64 = 0x5EED;

/// How many sparser levels a failed strict FRS recovery may fall back to.
const MAX_FALLBACKS: u32 = 2;

/// Full sketch configuration. Two sketches are merge-compatible exactly when
/// their configurations (including the master seed) are equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub model: Model,
    pub recovery: RecoveryKind,
    /// Requested sample size K.
    pub k: u64,
    /// Failure probability delta.
    pub delta: f64,
    /// Partial-sample loss bound; required iff `recovery` is Efrs.
    pub epsilon: Option<f64>,
    /// Universe bound: admissible values are [1, m).
    pub m: u64,
    /// Per-update count bound: counts lie in [-r, r].
    pub r: u64,
    /// Maximum stream length admitted by the counter-capacity check.
    pub n_max: u64,
    /// Level decay ratio.
    pub lambda: f64,
    /// Declared L0-approximation factor.
    pub alpha: f64,
    /// Level-hash range M.
    pub big_m: u64,
    pub seed: u64,
}

impl SamplerConfig {
    /// A configuration with the library defaults: m = 2^32 (values start at
    /// 1), r = 2^31, n_max = 2^32, lambda = 0.5, alpha = 1.5, M = 2m.
    pub fn new(model: Model, recovery: RecoveryKind, k: u64, delta: f64) -> Self {
        let m = 1u64 << 32;
        SamplerConfig {
            model,
            recovery,
            k,
            delta,
            epsilon: None,
            m,
            r: 1 << 31,
            n_max: 1 << 32,
            lambda: 0.5,
            alpha: 1.5,
            big_m: 2 * m,
            seed: DEFAULT_SEED,
        }
    }

    /// Rebinds the universe bounds and keeps M = 2m.
    pub fn with_universe(mut self, m: u64, r: u64, n_max: u64) -> Self {
        self.m = m;
        self.r = r;
        self.n_max = n_max;
        self.big_m = 2 * m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    /// Maximal expected elements in the selected level: (2 alpha / lambda + 1) K.
    pub fn k_tilde(&self) -> u64 {
        ((2.0 * self.alpha / self.lambda + 1.0) * self.k as f64).ceil() as u64
    }

    /// Level-hash independence: max(32, ceil(2 log2(1/delta))).
    pub fn t_lvl(&self) -> u64 {
        ((2.0 * (1.0 / self.delta).log2()).ceil() as u64).max(32)
    }

    pub(crate) fn frs_config(&self) -> FrsConfig {
        FrsConfig::new(self.model, self.k_tilde(), self.delta)
    }

    pub(crate) fn efrs_config(&self) -> EfrsConfig {
        EfrsConfig::new(self.model, self.k_tilde(), self.delta)
    }

    pub(crate) fn l0_params(&self) -> L0Params {
        L0Params::new(self.delta, self.n_max, self.alpha, self.t_lvl())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let param = |name: &'static str, reason: String| ConfigError::Parameter { name, reason };
        if self.k == 0 {
            return Err(param("k", "sample size must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(param("delta", format!("must be in (0, 1), got {}", self.delta)));
        }
        if self.m < 2 || self.m >= FIELD_PRIME / 2 {
            return Err(param("m", format!("universe bound out of range: {}", self.m)));
        }
        if self.big_m < 2 * self.m || self.big_m >= FIELD_PRIME {
            return Err(param(
                "M",
                format!("level range must satisfy 2m <= M < p, got {}", self.big_m),
            ));
        }
        if self.r == 0 || self.r > i64::MAX as u64 {
            return Err(param("r", format!("count bound out of range: {}", self.r)));
        }
        if self.n_max == 0 {
            return Err(param("n_max", "stream bound must be positive".into()));
        }
        match (self.recovery, self.epsilon) {
            (RecoveryKind::Frs, Some(_)) => {
                return Err(param("epsilon", "only meaningful with the efrs recovery".into()));
            }
            (RecoveryKind::Efrs, None) => {
                return Err(param("epsilon", "required by the efrs recovery".into()));
            }
            (RecoveryKind::Efrs, Some(e)) if !(e > 0.0 && e < 1.0) => {
                return Err(param("epsilon", format!("must be in (0, 1), got {e}")));
            }
            _ => {}
        }
        // Sample-size floors: K = Omega(log 1/delta) for FRS and
        // K = Omega((1/epsilon) log 1/delta) for epsilon-FRS (unit constant).
        let log_delta = (1.0 / self.delta).log2();
        let floor = match self.recovery {
            RecoveryKind::Frs => log_delta.ceil() as u64,
            RecoveryKind::Efrs => ((1.0 / self.epsilon.unwrap()) * log_delta).ceil() as u64,
        };
        if self.k < floor.max(1) {
            return Err(param(
                "k",
                format!(
                    "sample size {} is below the contract floor {} for this recovery",
                    self.k,
                    floor.max(1)
                ),
            ));
        }
        // Counter-capacity admission across every structure in the sketch.
        let (w_range, q) = match self.recovery {
            RecoveryKind::Frs => (1, 1),
            RecoveryKind::Efrs => {
                let cfg = self.efrs_config();
                (cfg.bins_per_array, if self.model == Model::NonStrict { cfg.q } else { 1 })
            }
        };
        let t_range = q.max(self.l0_params().guard_range());
        check_counter_capacity(self.m, self.r, self.n_max, w_range, t_range)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LevelStructure {
    Frs(Frs),
    Efrs(Efrs),
}

/// Which level a sample was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleLevel {
    /// The stream was empty (L0 estimate of zero).
    EmptyStream,
    /// No level was expected to hold 2K elements; the sample is the union of
    /// every level, i.e. the entire surviving support.
    WholeStream,
    Level(u32),
}

/// An extracted sample: exact (value, total) pairs plus extraction metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Distinct values with their exact nonzero totals, sorted by value.
    pub entries: Vec<(u64, i128)>,
    pub level: SampleLevel,
    pub l0_estimate: u64,
    /// The level-selection inequality had no in-range solution.
    pub clamped_level: bool,
    /// Sparser levels tried after strict FRS recovery failures.
    pub fallback_levels: u32,
    /// epsilon-FRS: bins left unpeeled (the fail-set residue).
    pub residual_bins: u64,
    /// epsilon-FRS: bins skipped on W-consistency grounds.
    pub skipped_bins: u64,
    /// Configuration echoes for downstream error accounting.
    pub delta: f64,
    pub partial_epsilon: f64,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Union or difference of two sketches. Differences are inherently
/// non-strict: even two strict streams can subtract to negative totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeOp {
    Union,
    Difference,
}

impl MergeOp {
    fn sign(self) -> i128 {
        match self {
            MergeOp::Union => 1,
            MergeOp::Difference => -1,
        }
    }
}

/// The mergeable sampling sketch. Single writer; extraction and
/// serialization operate on flushed state and recovery runs on a scratch
/// copy, so reads are safe whenever no writer is active.
#[derive(Debug, Clone)]
pub struct SamplerSketch {
    pub(crate) config: SamplerConfig,
    pub(crate) level_cfg: LevelConfig,
    level_hash: HashFn,
    pub(crate) array_hashes: Vec<HashFn>,
    pub(crate) guard_hash: Option<HashFn>,
    pub(crate) levels: Vec<LevelStructure>,
    pub(crate) l0: AmplifiedEstimator,
    buffer: Vec<(u64, i64)>,
}

impl SamplerSketch {
    pub fn new(config: SamplerConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let level_cfg = LevelConfig::new(config.lambda, config.alpha, config.big_m)?;
        let level_hash = HashFn::new(
            sub_seed(config.seed, DOMAIN_LEVEL, 0),
            config.t_lvl(),
            config.big_m,
        )?;
        let (array_hashes, guard_hash, template) = match config.recovery {
            RecoveryKind::Frs => {
                let cfg = config.frs_config();
                let hashes = (0..cfg.arrays)
                    .map(|a| {
                        HashFn::new(
                            sub_seed(config.seed, DOMAIN_ARRAY, a as u64),
                            2,
                            cfg.bins_per_array,
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                (hashes, None, LevelStructure::Frs(Frs::new(cfg)))
            }
            RecoveryKind::Efrs => {
                let cfg = config.efrs_config();
                let hashes = (0..2u64)
                    .map(|a| {
                        HashFn::new(sub_seed(config.seed, DOMAIN_ARRAY, a), cfg.t, cfg.bins_per_array)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let guard = match config.model {
                    Model::NonStrict => Some(HashFn::new(
                        sub_seed(config.seed, DOMAIN_GUARD, 0),
                        cfg.t,
                        cfg.q,
                    )?),
                    Model::Strict => None,
                };
                (hashes, guard, LevelStructure::Efrs(Efrs::new(cfg)))
            }
        };
        let levels = vec![template; level_cfg.level_count() as usize];
        let l0 = AmplifiedEstimator::new(config.l0_params(), sub_seed(config.seed, DOMAIN_L0, 0))?;
        Ok(SamplerSketch {
            config,
            level_cfg,
            level_hash,
            array_hashes,
            guard_hash,
            levels,
            l0,
            buffer: Vec::new(),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn level_count(&self) -> u32 {
        self.level_cfg.level_count()
    }

    pub fn is_flushed(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Buffers one stream update. The buffer drains through the batched hash
    /// path whenever it reaches t_lvl updates; queries flush it implicitly.
    pub fn update(&mut self, k: u64, c: i64) -> Result<(), UpdateError> {
        if k < 1 || k >= self.config.m {
            return Err(UpdateError::ValueOutOfRange {
                value: k,
                m: self.config.m,
            });
        }
        if c.unsigned_abs() > self.config.r {
            return Err(UpdateError::CountOutOfRange {
                count: c,
                r: self.config.r,
            });
        }
        self.buffer.push((k, c));
        if self.buffer.len() >= self.config.t_lvl() as usize {
            self.flush();
        }
        Ok(())
    }

    /// Applies all buffered updates. One multipoint plan over the batch
    /// serves every t-wise hash in the sketch.
    pub fn flush(&mut self) {
        if self.buffer.is_empty() {
            return;
        }
        let updates = std::mem::take(&mut self.buffer);
        let points: Vec<u64> = updates.iter().map(|&(k, _)| k).collect();
        let plan = MultipointPlan::new(&points);
        let level_values = self.level_hash.eval_with_plan(&plan);
        let split_values = self.l0.split_values(&plan);
        let l0_guard_values = self.l0.guard_values(&plan);
        match self.config.recovery {
            RecoveryKind::Frs => {
                for (i, &(k, c)) in updates.iter().enumerate() {
                    let level = self.level_cfg.level_of_value(level_values[i]) as usize;
                    let LevelStructure::Frs(frs) = &mut self.levels[level] else {
                        unreachable!()
                    };
                    frs.insert(&self.array_hashes, k, c as i128);
                    self.l0.update_routed(k, c as i128, split_values[i], l0_guard_values[i]);
                }
            }
            RecoveryKind::Efrs => {
                let pos0 = self.array_hashes[0].eval_with_plan(&plan);
                let pos1 = self.array_hashes[1].eval_with_plan(&plan);
                let guard_values = self.guard_hash.as_ref().map(|g| g.eval_with_plan(&plan));
                for (i, &(k, c)) in updates.iter().enumerate() {
                    let level = self.level_cfg.level_of_value(level_values[i]) as usize;
                    let LevelStructure::Efrs(efrs) = &mut self.levels[level] else {
                        unreachable!()
                    };
                    let guard = guard_values.as_ref().map_or(0, |g| g[i]);
                    efrs.insert_at(k, c as i128, [pos0[i], pos1[i]], guard);
                    self.l0.update_routed(k, c as i128, split_values[i], l0_guard_values[i]);
                }
            }
        }
    }

    fn partial_epsilon(&self) -> f64 {
        match self.config.recovery {
            RecoveryKind::Frs => 0.0,
            RecoveryKind::Efrs => self.config.epsilon.unwrap_or(0.0),
        }
    }

    fn empty_sample(&self) -> Sample {
        Sample {
            entries: Vec::new(),
            level: SampleLevel::EmptyStream,
            l0_estimate: 0,
            clamped_level: false,
            fallback_levels: 0,
            residual_bins: 0,
            skipped_bins: 0,
            delta: self.config.delta,
            partial_epsilon: self.partial_epsilon(),
        }
    }

    /// Extracts a sample of the configured size K.
    pub fn extract(&mut self) -> Result<Sample, ExtractError> {
        let k = self.config.k;
        self.extract_k(k)
    }

    /// Extracts a sample of size `k_requested <= K`: query the L0 estimate,
    /// select the level, recover it. Strict FRS recovery failures fall back
    /// to the next sparser level up to two times.
    pub fn extract_k(&mut self, k_requested: u64) -> Result<Sample, ExtractError> {
        if k_requested == 0 || k_requested > self.config.k {
            return Err(ExtractError::SampleTooLarge {
                requested: k_requested,
                k: self.config.k,
            });
        }
        self.flush();
        let l0_estimate = self.l0.estimate();
        let Some((level, clamped)) = self.level_cfg.select_level(l0_estimate, k_requested) else {
            return Ok(self.empty_sample());
        };
        if level == 0 && clamped {
            // The whole-stream regime: no level is expected to hold 2K
            // elements, so the union of all levels is the entire support and
            // fits the per-level capacity.
            let mut sample = self.recover_levels(0..self.level_count(), SampleLevel::WholeStream)?;
            sample.l0_estimate = l0_estimate;
            sample.clamped_level = true;
            return Ok(sample);
        }
        let mut fallbacks = 0;
        loop {
            let attempt = level + fallbacks;
            match self.recover_levels(attempt..attempt + 1, SampleLevel::Level(attempt)) {
                Ok(mut sample) => {
                    sample.l0_estimate = l0_estimate;
                    sample.clamped_level = clamped;
                    sample.fallback_levels = fallbacks;
                    return Ok(sample);
                }
                Err(_) if fallbacks < MAX_FALLBACKS && attempt + 1 < self.level_count() => {
                    fallbacks += 1;
                }
                Err(_) => {
                    return Err(ExtractError::RecoveryExhausted {
                        level,
                        fallbacks,
                    });
                }
            }
        }
    }

    /// Recovers one fixed level, with no fallback. Requires a flushed sketch;
    /// used for coordinated extraction across merge-compatible sketches.
    pub fn extract_at_level(&self, level: u32) -> Result<Sample, ExtractError> {
        if !self.is_flushed() {
            return Err(ExtractError::Unflushed);
        }
        if level >= self.level_count() {
            return Err(ExtractError::LevelOutOfRange {
                level,
                levels: self.level_count(),
            });
        }
        let mut sample = self.recover_levels(level..level + 1, SampleLevel::Level(level))?;
        sample.l0_estimate = self.l0.estimate();
        Ok(sample)
    }

    /// Recovers the union of every level (the whole-stream extraction).
    pub fn extract_whole(&self) -> Result<Sample, ExtractError> {
        if !self.is_flushed() {
            return Err(ExtractError::Unflushed);
        }
        let mut sample = self.recover_levels(0..self.level_count(), SampleLevel::WholeStream)?;
        sample.l0_estimate = self.l0.estimate();
        Ok(sample)
    }

    fn recover_levels(
        &self,
        levels: std::ops::Range<u32>,
        tag: SampleLevel,
    ) -> Result<Sample, ExtractError> {
        let mut entries: Vec<(u64, i128)> = Vec::new();
        let mut residual_bins = 0;
        let mut skipped_bins = 0;
        for level in levels {
            match &self.levels[level as usize] {
                LevelStructure::Frs(frs) => match self.config.model {
                    Model::Strict => {
                        let recovered = frs
                            .recover_strict(&self.array_hashes, self.config.m)
                            .map_err(|_| ExtractError::LevelRecoveryFailed { level })?;
                        entries.extend(recovered);
                    }
                    Model::NonStrict => {
                        entries.extend(frs.recover_non_strict(&self.array_hashes, self.config.m));
                    }
                },
                LevelStructure::Efrs(efrs) => {
                    let rec = efrs.recover(self.config.m, self.guard_hash.as_ref());
                    entries.extend(rec.entries);
                    residual_bins += rec.residual_bins;
                    skipped_bins += rec.skipped_bins;
                }
            }
        }
        entries.sort_unstable();
        Ok(Sample {
            entries,
            level: tag,
            l0_estimate: 0,
            clamped_level: false,
            fallback_levels: 0,
            residual_bins,
            skipped_bins,
            delta: self.config.delta,
            partial_epsilon: self.partial_epsilon(),
        })
    }

    /// Cellwise union or difference. Both sketches must be flushed and
    /// built from identical configurations (including the master seed);
    /// differences additionally require the non-strict model.
    pub fn merged(&self, other: &Self, op: MergeOp) -> Result<SamplerSketch, MergeError> {
        if !self.is_flushed() || !other.is_flushed() {
            return Err(MergeError::Unflushed);
        }
        if self.config != other.config {
            return Err(MergeError::IncompatibleConfig);
        }
        if op == MergeOp::Difference && self.config.model == Model::Strict {
            return Err(MergeError::StrictDifference);
        }
        let sign = op.sign();
        let mut out = self.clone();
        for (mine, theirs) in out.levels.iter_mut().zip(&other.levels) {
            match (mine, theirs) {
                (LevelStructure::Frs(a), LevelStructure::Frs(b)) => a.combine(b, sign)?,
                (LevelStructure::Efrs(a), LevelStructure::Efrs(b)) => a.combine(b, sign)?,
                _ => return Err(MergeError::IncompatibleConfig),
            }
        }
        out.l0.merge(&other.l0, sign)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container;
    use std::collections::BTreeMap;

    fn small_config(model: Model, recovery: RecoveryKind) -> SamplerConfig {
        let mut cfg = SamplerConfig::new(model, recovery, 16, 0.1)
            .with_universe(1 << 16, 1 << 16, 1 << 20)
            .with_seed(77);
        if recovery == RecoveryKind::Efrs {
            cfg = cfg.with_epsilon(0.25);
        }
        cfg
    }

    #[test]
    fn config_floors_are_enforced() {
        let cfg = SamplerConfig::new(Model::Strict, RecoveryKind::Frs, 2, 0.01);
        assert!(matches!(
            SamplerSketch::new(cfg),
            Err(ConfigError::Parameter { name: "k", .. })
        ));
        let cfg = SamplerConfig::new(Model::Strict, RecoveryKind::Efrs, 16, 0.1).with_epsilon(0.01);
        assert!(matches!(
            SamplerSketch::new(cfg),
            Err(ConfigError::Parameter { name: "k", .. })
        ));
        let cfg = SamplerConfig::new(Model::Strict, RecoveryKind::Frs, 64, 0.1).with_epsilon(0.1);
        assert!(matches!(
            SamplerSketch::new(cfg),
            Err(ConfigError::Parameter { name: "epsilon", .. })
        ));
    }

    #[test]
    fn update_bounds_are_hard_errors() {
        let mut s = SamplerSketch::new(small_config(Model::Strict, RecoveryKind::Frs)).unwrap();
        assert!(matches!(
            s.update(0, 1),
            Err(UpdateError::ValueOutOfRange { .. })
        ));
        assert!(matches!(
            s.update(1 << 16, 1),
            Err(UpdateError::ValueOutOfRange { .. })
        ));
        assert!(matches!(
            s.update(5, (1 << 17) as i64),
            Err(UpdateError::CountOutOfRange { .. })
        ));
    }

    #[test]
    fn queries_flush_transparently() {
        let cfg = small_config(Model::Strict, RecoveryKind::Frs);
        let mut eager = SamplerSketch::new(cfg.clone()).unwrap();
        let mut lazy = SamplerSketch::new(cfg).unwrap();
        for k in 1..=10u64 {
            eager.update(k, 3).unwrap();
            lazy.update(k, 3).unwrap();
        }
        eager.flush();
        let a = eager.extract().unwrap();
        let b = lazy.extract().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn permuted_streams_serialize_identically() {
        let cfg = small_config(Model::NonStrict, RecoveryKind::Frs);
        let updates = [(3u64, 5i64), (90, -2), (3, -5), (700, 1), (90, 7), (12, 1)];
        let mut a = SamplerSketch::new(cfg.clone()).unwrap();
        let mut b = SamplerSketch::new(cfg).unwrap();
        for &(k, c) in &updates {
            a.update(k, c).unwrap();
        }
        for &(k, c) in updates.iter().rev() {
            b.update(k, c).unwrap();
        }
        a.flush();
        b.flush();
        assert_eq!(container::save(&mut a), container::save(&mut b));
    }

    #[test]
    fn zero_net_stream_extracts_empty() {
        let mut s = SamplerSketch::new(small_config(Model::NonStrict, RecoveryKind::Frs)).unwrap();
        for k in 1..=50u64 {
            s.update(k, 9).unwrap();
            s.update(k, -9).unwrap();
        }
        let sample = s.extract().unwrap();
        assert!(sample.is_empty());
        assert_eq!(sample.level, SampleLevel::EmptyStream);
    }

    #[test]
    fn tiny_stream_yields_the_entire_support() {
        for recovery in [RecoveryKind::Frs, RecoveryKind::Efrs] {
            let mut s = SamplerSketch::new(small_config(Model::Strict, recovery)).unwrap();
            let mut truth = BTreeMap::new();
            for k in 1..=12u64 {
                s.update(k * 31, (k % 4 + 1) as i64).unwrap();
                truth.insert(k * 31, (k % 4 + 1) as i128);
            }
            let sample = s.extract().unwrap();
            assert_eq!(sample.level, SampleLevel::WholeStream);
            assert!(sample.clamped_level);
            assert_eq!(sample.entries, truth.into_iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn merge_matches_concatenated_ingest() {
        let cfg = small_config(Model::NonStrict, RecoveryKind::Efrs);
        let mut left = SamplerSketch::new(cfg.clone()).unwrap();
        let mut right = SamplerSketch::new(cfg.clone()).unwrap();
        let mut both = SamplerSketch::new(cfg).unwrap();
        for k in 1..400u64 {
            left.update(k, 2).unwrap();
            both.update(k, 2).unwrap();
        }
        for k in 300..600u64 {
            right.update(k, -1).unwrap();
            both.update(k, -1).unwrap();
        }
        left.flush();
        right.flush();
        both.flush();
        let mut merged = left.merged(&right, MergeOp::Union).unwrap();
        assert_eq!(container::save(&mut merged), container::save(&mut both));
    }

    #[test]
    fn self_difference_is_empty() {
        let cfg = small_config(Model::NonStrict, RecoveryKind::Frs);
        let mut s = SamplerSketch::new(cfg).unwrap();
        for k in (1..2000u64).step_by(7) {
            s.update(k, (k % 11) as i64 + 1).unwrap();
        }
        s.flush();
        let mut diff = s.merged(&s, MergeOp::Difference).unwrap();
        let sample = diff.extract().unwrap();
        assert!(sample.is_empty());
    }

    #[test]
    fn merge_preconditions() {
        let cfg = small_config(Model::Strict, RecoveryKind::Frs);
        let mut a = SamplerSketch::new(cfg.clone()).unwrap();
        let b = SamplerSketch::new(cfg.clone().with_seed(78)).unwrap();
        a.flush();
        assert!(matches!(
            a.merged(&b, MergeOp::Union),
            Err(MergeError::IncompatibleConfig)
        ));
        let c = SamplerSketch::new(cfg).unwrap();
        assert!(matches!(
            a.merged(&c, MergeOp::Difference),
            Err(MergeError::StrictDifference)
        ));
        let mut unflushed = c.clone();
        unflushed.update(5, 1).unwrap();
        assert!(matches!(
            a.merged(&unflushed, MergeOp::Union),
            Err(MergeError::Unflushed)
        ));
    }

    #[test]
    fn extraction_recovers_exact_totals_at_moderate_scale() {
        let cfg = SamplerConfig::new(Model::Strict, RecoveryKind::Frs, 16, 0.1)
            .with_universe(1 << 16, 1 << 10, 1 << 20)
            .with_seed(1234);
        let mut s = SamplerSketch::new(cfg).unwrap();
        let mut truth = BTreeMap::new();
        for i in 0..3000u64 {
            let k = 1 + (i * 17) % ((1 << 16) - 1);
            let c = (i % 9) as i64 + 1;
            s.update(k, c).unwrap();
            *truth.entry(k).or_insert(0i128) += c as i128;
        }
        let sample = s.extract().unwrap();
        assert!(!sample.is_empty());
        let SampleLevel::Level(_) = sample.level else {
            panic!("expected a proper level, got {:?}", sample.level)
        };
        for (k, c) in &sample.entries {
            assert_eq!(truth.get(k), Some(c));
        }
    }
}
