//! epsilon-Full Recovery Structure: two arrays of Bin Sketch cells addressed
//! by t-wise hashes, drained by queue-driven peeling. Every element outside a
//! fail set (elements colliding with each other in both of their bins) is
//! recovered; fail sets larger than t occur with probability at most delta.
//!
//! Each cell's W counter accumulates c * h_other(k), where h_other is the
//! hash of the companion array. When a cell holds the single element (k, C),
//! W / C is k's bin in the other array, so peeling never evaluates an array
//! hash: extract, subtract from the twin via W, enqueue the twin.

use std::collections::{BTreeMap, VecDeque};

use crate::bin_sketch::{CellVerdict, NonStrictBinSketch, StrictBinSketch};
use crate::error::MergeError;
use crate::field_hash::HashFn;
use crate::Model;

/// Shape of an epsilon-FRS instance: two arrays of `bins_per_array` cells,
/// addressed by hashes of independence `t`. Non-strict cells carry the shared
/// guard hash with range `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfrsConfig {
    pub mode: Model,
    pub k_tilde: u64,
    pub bins_per_array: u64,
    /// Array-hash independence: max(32, even ceil(2 log2(K~/delta))).
    pub t: u64,
    /// Guard range ceil(4 K~ / delta); meaningful in non-strict mode only.
    pub q: u64,
}

impl EfrsConfig {
    pub fn new(mode: Model, k_tilde: u64, delta: f64) -> Self {
        let mut t = (2.0 * (k_tilde as f64 / delta).log2()).ceil().max(1.0) as u64;
        t += t & 1;
        EfrsConfig {
            mode,
            k_tilde,
            bins_per_array: 4 * k_tilde,
            t: t.max(32),
            q: (4.0 * k_tilde as f64 / delta).ceil().max(2.0) as u64,
        }
    }

    pub fn total_bins(&self) -> usize {
        2 * self.bins_per_array as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum EfrsBins {
    Strict(Vec<StrictBinSketch>),
    NonStrict(Vec<NonStrictBinSketch>),
}

/// The recovered partial sample plus peeling diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EfrsRecovery {
    pub entries: Vec<(u64, i128)>,
    /// Bins whose single verdict failed the W divisibility or range checks
    /// (treated as collisions; counts toward the delta budget).
    pub skipped_bins: u64,
    /// Bins left non-zero after peeling; the unpeeled fail-set residue.
    pub residual_bins: u64,
}

/// One epsilon-FRS instance. Cells always maintain W; non-strict cells also
/// maintain the T guard.
#[derive(Debug, Clone, PartialEq)]
pub struct Efrs {
    cfg: EfrsConfig,
    pub(crate) bins: EfrsBins,
}

impl Efrs {
    pub fn new(cfg: EfrsConfig) -> Self {
        let n = cfg.total_bins();
        let bins = match cfg.mode {
            Model::Strict => EfrsBins::Strict(vec![StrictBinSketch::default(); n]),
            Model::NonStrict => EfrsBins::NonStrict(vec![NonStrictBinSketch::default(); n]),
        };
        Efrs { cfg, bins }
    }

    pub fn config(&self) -> &EfrsConfig {
        &self.cfg
    }

    /// Applies one update whose array-hash values (and guard value, in
    /// non-strict mode) were already evaluated; the sampler computes them in
    /// batches. Each cell's W is fed the other array's hash value.
    pub fn insert_at(&mut self, k: u64, c: i128, pos: [u64; 2], guard_value: u64) {
        let s = self.cfg.bins_per_array as usize;
        let idx0 = pos[0] as usize;
        let idx1 = s + pos[1] as usize;
        match &mut self.bins {
            EfrsBins::Strict(cells) => {
                cells[idx0].insert(k, c, Some(pos[1]));
                cells[idx1].insert(k, c, Some(pos[0]));
            }
            EfrsBins::NonStrict(cells) => {
                cells[idx0].insert(k, c, guard_value, Some(pos[1]));
                cells[idx1].insert(k, c, guard_value, Some(pos[0]));
            }
        }
    }

    /// Convenience ingestion that evaluates the hashes directly.
    pub fn insert(&mut self, hashes: &[HashFn; 2], guard: Option<&HashFn>, k: u64, c: i128) {
        let pos = [hashes[0].eval(k), hashes[1].eval(k)];
        let guard_value = guard.map_or(0, |g| g.eval(k));
        self.insert_at(k, c, pos, guard_value);
    }

    fn classify(&self, cells: &EfrsBins, idx: usize, m: u64, guard: Option<&HashFn>) -> CellVerdict {
        match cells {
            EfrsBins::Strict(v) => v[idx].classify(m),
            EfrsBins::NonStrict(v) => v[idx].classify(m, guard.expect("guard hash set")),
        }
    }

    /// Queue-driven peeling on a scratch copy.
    ///
    /// Scan both arrays, enqueue every single-element bin; then repeatedly
    /// dequeue, re-classify, extract the element, locate its twin bin through
    /// W / C, subtract it from both bins and enqueue the twin. Bins whose W
    /// fails the divisibility or range check are skipped and flagged. The
    /// queue never holds a bin twice; re-classification on dequeue makes any
    /// staleness harmless.
    pub fn recover(&self, m: u64, guard: Option<&HashFn>) -> EfrsRecovery {
        let s = self.cfg.bins_per_array as i128;
        let total = self.cfg.total_bins();
        let mut scratch = self.bins.clone();
        let mut queue: VecDeque<usize> = VecDeque::new();
        let mut queued = vec![false; total];
        for idx in 0..total {
            if matches!(
                self.classify(&scratch, idx, m, guard),
                CellVerdict::Single { .. }
            ) {
                queue.push_back(idx);
                queued[idx] = true;
            }
        }
        let mut out: BTreeMap<u64, i128> = BTreeMap::new();
        let mut skipped = 0u64;
        // Outside the 1 - delta event, forged extractions could in principle
        // keep re-lighting bins; cap the work so recovery always terminates.
        let mut budget = 4 * total + 16;
        while let Some(idx) = queue.pop_front() {
            queued[idx] = false;
            let CellVerdict::Single { value, count } = self.classify(&scratch, idx, m, guard)
            else {
                continue;
            };
            let w = match &scratch {
                EfrsBins::Strict(v) => v[idx].w,
                EfrsBins::NonStrict(v) => v[idx].base.w,
            };
            if w % count != 0 {
                skipped += 1;
                continue;
            }
            let twin_pos = w / count;
            if twin_pos < 0 || twin_pos >= s {
                skipped += 1;
                continue;
            }
            if out.contains_key(&value) || budget == 0 {
                skipped += 1;
                continue;
            }
            budget -= 1;
            let own_array = idx / s as usize;
            let own_pos = (idx % s as usize) as u64;
            let twin_idx = (1 - own_array) * s as usize + twin_pos as usize;
            out.insert(value, count);
            let guard_value = guard.map_or(0, |g| g.eval(value));
            let pos = if own_array == 0 {
                [own_pos, twin_pos as u64]
            } else {
                [twin_pos as u64, own_pos]
            };
            match &mut scratch {
                EfrsBins::Strict(v) => {
                    v[idx].insert(value, -count, Some(pos[1 - own_array]));
                    v[twin_idx].insert(value, -count, Some(pos[own_array]));
                }
                EfrsBins::NonStrict(v) => {
                    v[idx].insert(value, -count, guard_value, Some(pos[1 - own_array]));
                    v[twin_idx].insert(value, -count, guard_value, Some(pos[own_array]));
                }
            }
            if !queued[twin_idx] {
                queue.push_back(twin_idx);
                queued[twin_idx] = true;
            }
        }
        let residual_bins = match &scratch {
            EfrsBins::Strict(v) => v.iter().filter(|c| !c.is_zero()).count(),
            EfrsBins::NonStrict(v) => v.iter().filter(|c| !c.is_zero()).count(),
        } as u64;
        EfrsRecovery {
            entries: out.into_iter().collect(),
            skipped_bins: skipped,
            residual_bins,
        }
    }

    pub fn combine(&mut self, other: &Self, sign: i128) -> Result<(), MergeError> {
        if self.cfg != other.cfg {
            return Err(MergeError::IncompatibleConfig);
        }
        match (&mut self.bins, &other.bins) {
            (EfrsBins::Strict(a), EfrsBins::Strict(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    x.combine(y, sign)?;
                }
            }
            (EfrsBins::NonStrict(a), EfrsBins::NonStrict(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    x.combine(y, sign)?;
                }
            }
            _ => return Err(MergeError::IncompatibleConfig),
        }
        Ok(())
    }

    pub fn occupied_bins(&self) -> usize {
        match &self.bins {
            EfrsBins::Strict(v) => v.iter().filter(|c| !c.is_zero()).count(),
            EfrsBins::NonStrict(v) => v.iter().filter(|c| !c.is_zero()).count(),
        }
    }
}
