//! Bin Sketch cells: constant-size counter bundles that detect whether a
//! substream is empty, holds a single surviving value (and recover it), or
//! holds a collision.
//!
//! The strict cell keeps X = sum(c), Y = sum(c*k), Z = sum(c*k^2) plus a W
//! counter that is active only inside the two-array recovery structure. For a
//! single survivor (k, C_k): X = C_k, Y = C_k*k, Z = C_k*k^2, so XZ = Y^2 and
//! k = Y/X. Under strict streams (all totals nonnegative) that identity holds
//! if and only if exactly one value survives.
//!
//! With deletions driving totals negative, multi-value contents can forge the
//! XYZ identity, so the non-strict cell adds T = sum(C_k * h_T(k)) for a
//! shared t'-wise hash with range q; a forged single passes the extra check
//! T = X * h_T(Y/X) with probability at most 1/q.
//!
//! All counters are exact signed 128-bit integers. Structures that own cells
//! verify at construction that the configured (m, r, N_max) bounds cannot
//! overflow them, so inserts never wrap silently.

use crate::error::{ConfigError, MergeError};
use crate::field_hash::HashFn;

/// Classification of a cell's contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellVerdict {
    Empty,
    /// A single surviving value and its (nonzero) exact total.
    Single { value: u64, count: i128 },
    Collision,
}

/// The strict-model cell. `w` is maintained only when the owning structure
/// activates it (the two-array recovery structure); it stays zero otherwise.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StrictBinSketch {
    pub x: i128,
    pub y: i128,
    pub z: i128,
    pub w: i128,
}

impl StrictBinSketch {
    /// Folds one update into the counters. `h_other_value` is the companion
    /// array's hash of `k`, supplied iff the W counter is active.
    #[inline]
    pub fn insert(&mut self, k: u64, c: i128, h_other_value: Option<u64>) {
        let k = k as i128;
        self.x += c;
        self.y += c * k;
        self.z += c * k * k;
        if let Some(h) = h_other_value {
            self.w += c * h as i128;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0 && self.y == 0 && self.z == 0 && self.w == 0
    }

    /// Single-element test for strict streams. `m` bounds the admissible
    /// universe; recovered values outside [1, m) are collisions.
    pub fn classify(&self, m: u64) -> CellVerdict {
        // Emptiness in the strict model is exactly X = 0.
        if self.x == 0 {
            return CellVerdict::Empty;
        }
        match self.single_candidate(m) {
            Some((value, count)) => CellVerdict::Single { value, count },
            None => CellVerdict::Collision,
        }
    }

    /// Integer form of the XZ = Y^2 test: X | Y, k = Y/X in [1, m), and
    /// Z = k*Y. Equivalent over exact arithmetic, and it avoids the 256-bit
    /// products of comparing XZ with Y^2 directly.
    #[inline]
    fn single_candidate(&self, m: u64) -> Option<(u64, i128)> {
        if self.x == 0 || self.y == 0 || self.z == 0 {
            return None;
        }
        if self.y % self.x != 0 {
            return None;
        }
        let k = self.y / self.x;
        if k < 1 || k >= m as i128 {
            return None;
        }
        match k.checked_mul(self.y) {
            Some(ky) if ky == self.z => Some((k as u64, self.x)),
            _ => None,
        }
    }

    /// Counterwise `self + sign * other`, checked so merges of independently
    /// admitted sketches cannot wrap.
    pub fn combine(&mut self, other: &Self, sign: i128) -> Result<(), MergeError> {
        let add = |a: i128, b: i128| {
            a.checked_add(sign.checked_mul(b).ok_or(MergeError::CounterOverflow)?)
                .ok_or(MergeError::CounterOverflow)
        };
        self.x = add(self.x, other.x)?;
        self.y = add(self.y, other.y)?;
        self.z = add(self.z, other.z)?;
        self.w = add(self.w, other.w)?;
        Ok(())
    }
}

/// The non-strict cell: the strict counters plus the hashed guard counter T.
/// The owning structure shares one `h_T` across all of its cells and passes
/// precomputed `h_T(k)` values into [`NonStrictBinSketch::insert`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NonStrictBinSketch {
    pub base: StrictBinSketch,
    pub t: i128,
}

impl NonStrictBinSketch {
    #[inline]
    pub fn insert(&mut self, k: u64, c: i128, h_t_value: u64, h_other_value: Option<u64>) {
        self.base.insert(k, c, h_other_value);
        self.t += c * h_t_value as i128;
    }

    /// Emptiness under deletions requires all four counters to vanish;
    /// X = 0 alone says nothing once negative totals are allowed.
    pub fn is_zero(&self) -> bool {
        self.base.x == 0 && self.base.y == 0 && self.base.z == 0 && self.t == 0
    }

    /// Single-element test with the T-counter guard: accepts (k, C_k) only
    /// when additionally T = C_k * h_T(k).
    pub fn classify(&self, m: u64, h_t: &HashFn) -> CellVerdict {
        if self.is_zero() {
            return CellVerdict::Empty;
        }
        let Some((value, count)) = self.base.single_candidate(m) else {
            return CellVerdict::Collision;
        };
        let expected = count.checked_mul(h_t.eval(value) as i128);
        if expected == Some(self.t) {
            CellVerdict::Single { value, count }
        } else {
            CellVerdict::Collision
        }
    }

    pub fn combine(&mut self, other: &Self, sign: i128) -> Result<(), MergeError> {
        self.base.combine(&other.base, sign)?;
        self.t = self
            .t
            .checked_add(sign.checked_mul(other.t).ok_or(MergeError::CounterOverflow)?)
            .ok_or(MergeError::CounterOverflow)?;
        Ok(())
    }
}

/// Worst-case counter magnitudes for a stream of `n_max` updates with counts
/// in [-r, r] over values in [1, m), plus hashed counters with the given
/// ranges. Rejects any configuration whose counters could leave 128 bits.
pub fn check_counter_capacity(
    m: u64,
    r: u64,
    n_max: u64,
    w_range: u64,
    t_range: u64,
) -> Result<(), ConfigError> {
    let overflow = |counter: &'static str| ConfigError::CounterOverflow {
        counter,
        m,
        r,
        n_max,
    };
    let per_update = (n_max as u128)
        .checked_mul(r as u128)
        .ok_or_else(|| overflow("X"))?;
    let bound = |factor: u128, counter: &'static str| -> Result<(), ConfigError> {
        let total = per_update
            .checked_mul(factor)
            .ok_or_else(|| overflow(counter))?;
        if total > i128::MAX as u128 {
            return Err(overflow(counter));
        }
        Ok(())
    };
    let k_max = (m - 1) as u128;
    bound(1, "X")?;
    bound(k_max, "Y")?;
    bound(k_max * k_max, "Z")?;
    if w_range > 1 {
        bound((w_range - 1) as u128, "W")?;
    }
    if t_range > 1 {
        bound((t_range - 1) as u128, "T")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_accumulates_the_counter_formulas() {
        let mut cell = StrictBinSketch::default();
        cell.insert(5, 3, None);
        assert_eq!((cell.x, cell.y, cell.z), (3, 15, 75));
        assert_eq!(
            cell.classify(1 << 20),
            CellVerdict::Single { value: 5, count: 3 }
        );
    }

    #[test]
    fn cancellation_zeroes_every_counter() {
        let mut cell = NonStrictBinSketch::default();
        cell.insert(5, 3, 17, Some(9));
        cell.insert(5, -3, 17, Some(9));
        assert!(cell.is_zero());
        assert_eq!(cell.base.w, 0);
    }

    #[test]
    fn two_elements_fail_the_algebraic_identity() {
        let mut cell = StrictBinSketch::default();
        cell.insert(2, 1, None);
        cell.insert(3, 1, None);
        assert_eq!((cell.x, cell.y, cell.z), (2, 5, 13));
        // XZ = 26 != 25 = Y^2.
        assert_eq!(cell.x * cell.z, 26);
        assert_eq!(cell.y * cell.y, 25);
        assert_eq!(cell.classify(1 << 20), CellVerdict::Collision);
    }

    #[test]
    fn strict_empty_is_x_zero() {
        let cell = StrictBinSketch::default();
        assert_eq!(cell.classify(8), CellVerdict::Empty);
    }

    #[test]
    fn non_integral_ratio_is_a_collision() {
        // X = 2, Y = 5: Y/X is not an integer, so no single element fits.
        let cell = StrictBinSketch {
            x: 2,
            y: 5,
            z: 13,
            w: 0,
        };
        assert_eq!(cell.classify(1 << 20), CellVerdict::Collision);
    }

    #[test]
    fn out_of_universe_value_is_a_collision() {
        let mut cell = StrictBinSketch::default();
        cell.insert(9, 2, None);
        assert_eq!(cell.classify(9), CellVerdict::Collision);
        assert_eq!(
            cell.classify(10),
            CellVerdict::Single { value: 9, count: 2 }
        );
    }

    #[test]
    fn negative_total_is_legal_non_strict() {
        let h_t = HashFn::new(3, 8, 1000).unwrap();
        let mut cell = NonStrictBinSketch::default();
        cell.insert(9, -2, h_t.eval(9), None);
        assert_eq!(
            cell.classify(1 << 20, &h_t),
            CellVerdict::Single {
                value: 9,
                count: -2
            }
        );
        let empty = NonStrictBinSketch::default();
        assert_eq!(empty.classify(1 << 20, &h_t), CellVerdict::Empty);
    }

    /// The footnote-style alternating quadruple cancels X and Y but leaves
    /// Z = 4, so with one live element the plain algebra already rejects it.
    #[test]
    fn alternating_quadruple_plus_live_element_is_rejected() {
        let h_t = HashFn::new(11, 8, 1000).unwrap();
        let mut cell = NonStrictBinSketch::default();
        for (k, c) in [(10i64, 1i64), (11, -1), (12, -1), (13, 1), (7, 4)] {
            cell.insert(k as u64, c as i128, h_t.eval(k as u64), None);
        }
        assert_eq!((cell.base.x, cell.base.y), (4, 28));
        assert_eq!(cell.base.z, 200); // 4 + 4 * 49
        assert_eq!(cell.classify(1 << 20, &h_t), CellVerdict::Collision);
    }

    /// A multiset that zeroes X, Y and Z (third-difference counts on four
    /// consecutive values) plus a live element forges the strict identity;
    /// only the T counter can reject it, and it does so for all but ~1/q of
    /// the hash seeds.
    #[test]
    fn t_counter_rejects_a_forged_single() {
        let q = 1000u64;
        let trials = 20_000u64;
        let mut false_singles = 0u64;
        for seed in 0..trials {
            let h_t = HashFn::new(seed, 8, q).unwrap();
            let mut cell = NonStrictBinSketch::default();
            for (k, c) in [(1u64, 1i128), (2, -3), (3, 3), (4, -1), (7, 4)] {
                cell.insert(k, c, h_t.eval(k), None);
            }
            assert_eq!((cell.base.x, cell.base.y, cell.base.z), (4, 28, 196));
            if matches!(
                cell.classify(1 << 20, &h_t),
                CellVerdict::Single { value: 7, count: 4 }
            ) {
                false_singles += 1;
            }
        }
        let rate = false_singles as f64 / trials as f64;
        assert!(rate <= 1.0 / q as f64 + 0.01, "false-single rate {rate}");
    }

    #[test]
    fn self_difference_is_zero_and_combines_linearly() {
        let mut a = StrictBinSketch::default();
        a.insert(5, 3, None);
        a.insert(12, 2, None);
        let mut diff = a;
        diff.combine(&a, -1).unwrap();
        assert!(diff.is_zero());

        let mut b = StrictBinSketch::default();
        b.insert(5, 1, None);
        let mut merged = a;
        merged.combine(&b, 1).unwrap();
        let mut direct = StrictBinSketch::default();
        direct.insert(5, 3, None);
        direct.insert(12, 2, None);
        direct.insert(5, 1, None);
        assert_eq!(merged, direct);
    }

    #[test]
    fn combine_of_a_single_value_adds_counts() {
        let mut a = StrictBinSketch::default();
        a.insert(5, 3, None);
        let mut b = StrictBinSketch::default();
        b.insert(5, 1, None);
        a.combine(&b, 1).unwrap();
        assert_eq!(
            a.classify(1 << 20),
            CellVerdict::Single { value: 5, count: 4 }
        );
    }

    #[test]
    fn capacity_admission_rejects_oversized_configs() {
        // Defaults sit just inside the 128-bit budget.
        check_counter_capacity(1 << 32, 1 << 31, 1 << 32, 1, 1).unwrap();
        let err = check_counter_capacity(1 << 32, 1 << 31, 1 << 33, 1, 1).unwrap_err();
        assert!(matches!(
            err,
            ConfigError::CounterOverflow { counter: "Z", .. }
        ));
    }
}
