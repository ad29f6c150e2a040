//! Full Recovery Structure: tau arrays of Bin Sketch cells that recover
//! every element they hold. Each value is hashed into one bin per array by a
//! pairwise hash; with probability 1 - delta every element is isolated
//! somewhere, so scanning and peeling the single-element bins drains the
//! structure.
//!
//! Strict streams use deterministic verification: after peeling everything
//! found, all cells must be zero or recovery reports failure. Non-strict
//! streams cannot be verified that way (cells can be forged by cancellation),
//! so candidates read from the first few arrays are kept only when a majority
//! of the remaining arrays agree on the exact (value, total) pair.

use std::collections::BTreeMap;

use crate::bin_sketch::{CellVerdict, StrictBinSketch};
use crate::error::MergeError;
use crate::field_hash::HashFn;
use crate::Model;

/// Shape of an FRS instance. The array hashes themselves are owned by the
/// sampler and shared by the FRS at every level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrsConfig {
    pub mode: Model,
    pub k_tilde: u64,
    /// Number of arrays.
    pub arrays: usize,
    /// Arrays scanned for candidates in non-strict recovery; the remaining
    /// arrays vote. Equal to `arrays` in strict mode.
    pub candidate_arrays: usize,
    /// Bins per array.
    pub bins_per_array: u64,
}

impl FrsConfig {
    /// Strict sizing: tau = ceil(log2(K~/delta)) arrays of 2 K~ bins.
    /// Non-strict sizing: tau = ceil(5 log2(K~/delta)) arrays of 8 K~ bins,
    /// with the first ceil(log2(K~/delta)) arrays providing candidates.
    pub fn new(mode: Model, k_tilde: u64, delta: f64) -> Self {
        let log_ratio = (k_tilde as f64 / delta).log2().max(1.0);
        match mode {
            Model::Strict => {
                let arrays = log_ratio.ceil() as usize;
                FrsConfig {
                    mode,
                    k_tilde,
                    arrays,
                    candidate_arrays: arrays,
                    bins_per_array: 2 * k_tilde,
                }
            }
            Model::NonStrict => FrsConfig {
                mode,
                k_tilde,
                arrays: (5.0 * log_ratio).ceil() as usize,
                candidate_arrays: log_ratio.ceil() as usize,
                bins_per_array: 8 * k_tilde,
            },
        }
    }

    pub fn total_bins(&self) -> usize {
        self.arrays * self.bins_per_array as usize
    }
}

/// The 1 - delta recovery event did not occur (or the structure was fed more
/// than its capacity). The caller may fall back to a sparser level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecoveryFailure;

/// One FRS instance: a tau x s grid of strict cells. Both stream models use
/// strict cells; the non-strict variant compensates by majority voting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frs {
    cfg: FrsConfig,
    pub(crate) bins: Vec<StrictBinSketch>,
}

impl Frs {
    pub fn new(cfg: FrsConfig) -> Self {
        Frs {
            cfg,
            bins: vec![StrictBinSketch::default(); cfg.total_bins()],
        }
    }

    pub fn config(&self) -> &FrsConfig {
        &self.cfg
    }

    #[inline]
    fn bin_index(&self, array: usize, hash_value: u64) -> usize {
        array * self.cfg.bins_per_array as usize + hash_value as usize
    }

    /// Folds (k, c) into its bin in every array.
    pub fn insert(&mut self, hashes: &[HashFn], k: u64, c: i128) {
        debug_assert_eq!(hashes.len(), self.cfg.arrays);
        for (a, h) in hashes.iter().enumerate() {
            let idx = self.bin_index(a, h.eval(k));
            self.bins[idx].insert(k, c, None);
        }
    }

    /// Strict full recovery: repeatedly extract every single-element bin and
    /// subtract it everywhere, then verify the structure drained to zero.
    /// Peeling iterates to a fixpoint, which only enlarges the success region
    /// over the single scan-and-verify pass.
    pub fn recover_strict(
        &self,
        hashes: &[HashFn],
        m: u64,
    ) -> Result<Vec<(u64, i128)>, RecoveryFailure> {
        debug_assert_eq!(self.cfg.mode, Model::Strict);
        let mut scratch = self.bins.clone();
        let mut found: BTreeMap<u64, i128> = BTreeMap::new();
        loop {
            let mut progressed = false;
            for idx in 0..scratch.len() {
                let CellVerdict::Single { value, count } = scratch[idx].classify(m) else {
                    continue;
                };
                if found.contains_key(&value) {
                    // A value can only resurface if totals disagreed across
                    // arrays, which no strict stream produces.
                    return Err(RecoveryFailure);
                }
                found.insert(value, count);
                for (a, h) in hashes.iter().enumerate() {
                    let cell = self.bin_index(a, h.eval(value));
                    scratch[cell].insert(value, -count, None);
                }
                progressed = true;
            }
            if !progressed {
                break;
            }
        }
        if scratch.iter().all(|c| c.is_zero()) {
            Ok(found.into_iter().collect())
        } else {
            Err(RecoveryFailure)
        }
    }

    /// Non-strict recovery: candidate (value, total) pairs come from the
    /// single-element bins of the first `candidate_arrays` arrays; a
    /// candidate joins the sample when at least half of the remaining arrays
    /// classify its bin as exactly that pair.
    pub fn recover_non_strict(&self, hashes: &[HashFn], m: u64) -> Vec<(u64, i128)> {
        debug_assert_eq!(self.cfg.mode, Model::NonStrict);
        let s = self.cfg.bins_per_array as usize;
        let mut candidates: BTreeMap<(u64, i128), usize> = BTreeMap::new();
        for idx in 0..self.cfg.candidate_arrays * s {
            if let CellVerdict::Single { value, count } = self.bins[idx].classify(m) {
                candidates.insert((value, count), 0);
            }
        }
        let voting_arrays = self.cfg.arrays - self.cfg.candidate_arrays;
        for ((value, count), votes) in candidates.iter_mut() {
            for (a, h) in hashes
                .iter()
                .enumerate()
                .skip(self.cfg.candidate_arrays)
            {
                let idx = self.bin_index(a, h.eval(*value));
                if self.bins[idx].classify(m)
                    == (CellVerdict::Single {
                        value: *value,
                        count: *count,
                    })
                {
                    *votes += 1;
                }
            }
        }
        // Accept majority winners; if two totals for one value both clear the
        // bar (a vanishing-probability tie), keep the better-supported pair
        // and drop exact ties entirely.
        let mut accepted: BTreeMap<u64, (i128, usize)> = BTreeMap::new();
        let mut poisoned: Vec<u64> = Vec::new();
        for ((value, count), votes) in candidates {
            if 2 * votes < voting_arrays {
                continue;
            }
            match accepted.get(&value) {
                None => {
                    accepted.insert(value, (count, votes));
                }
                Some(&(_, prior_votes)) => {
                    if votes > prior_votes {
                        accepted.insert(value, (count, votes));
                    } else if votes == prior_votes {
                        poisoned.push(value);
                    }
                }
            }
        }
        for value in poisoned {
            accepted.remove(&value);
        }
        accepted.into_iter().map(|(k, (c, _))| (k, c)).collect()
    }

    /// Counterwise `self + sign * other`.
    pub fn combine(&mut self, other: &Self, sign: i128) -> Result<(), MergeError> {
        if self.cfg != other.cfg {
            return Err(MergeError::IncompatibleConfig);
        }
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.combine(b, sign)?;
        }
        Ok(())
    }

    pub fn occupied_bins(&self) -> usize {
        self.bins.iter().filter(|c| !c.is_zero()).count()
    }
}
