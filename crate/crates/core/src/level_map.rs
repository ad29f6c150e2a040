//! Geometric level mapping: each value's hash routes it to exactly one of
//! L = ceil(log_{1/lambda} M) levels, level l holding roughly a
//! lambda^l * (1 - lambda) fraction of the distinct values. Extraction picks
//! the level expected to hold Theta(K) elements from the L0 estimate alone,
//! never from the mapped elements themselves, so the sample stays unbiased.

use crate::error::ConfigError;
use crate::field_hash::HashFn;

/// Level-mapping parameters. `thresholds[l]` is ceil(lambda^l * M): a hash
/// value v lies in level l exactly when thresholds[l+1] <= v < thresholds[l],
/// with v = 0 assigned to the deepest level so the map is total.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelConfig {
    lambda: f64,
    alpha: f64,
    big_m: u64,
    levels: u32,
    thresholds: Vec<u64>,
    /// Set when lambda = 1/2 and M is a power of two; level_of is then a
    /// leading-zeros computation instead of a table walk.
    halving_bits: Option<u32>,
}

impl LevelConfig {
    pub fn new(lambda: f64, alpha: f64, big_m: u64) -> Result<Self, ConfigError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(ConfigError::Parameter {
                name: "lambda",
                reason: format!("must be in (0, 1), got {lambda}"),
            });
        }
        if !(alpha > 1.0) {
            return Err(ConfigError::Parameter {
                name: "alpha",
                reason: format!("must be > 1, got {alpha}"),
            });
        }
        if big_m < 2 {
            return Err(ConfigError::Parameter {
                name: "M",
                reason: format!("hash range must be at least 2, got {big_m}"),
            });
        }
        let levels = ((big_m as f64).ln() / (1.0 / lambda).ln()).ceil() as u32;
        let levels = levels.max(1);

        // Exact thresholds for dyadic lambda = 2^-j, float-derived otherwise.
        let dyadic_j = dyadic_exponent(lambda);
        let mut thresholds = Vec::with_capacity(levels as usize);
        for l in 0..levels {
            let thr = match dyadic_j {
                Some(j) => {
                    let shift = (j as u64).saturating_mul(l as u64);
                    if shift >= 64 {
                        1
                    } else {
                        big_m.div_ceil(1u64 << shift)
                    }
                }
                None => (lambda.powi(l as i32) * big_m as f64).ceil().max(1.0) as u64,
            };
            thresholds.push(thr);
        }
        let halving_bits = match (dyadic_j, big_m.is_power_of_two()) {
            (Some(1), true) => Some(big_m.trailing_zeros()),
            _ => None,
        };
        Ok(Self {
            lambda,
            alpha,
            big_m,
            levels,
            thresholds,
            halving_bits,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn range(&self) -> u64 {
        self.big_m
    }

    pub fn level_count(&self) -> u32 {
        self.levels
    }

    /// Level of a hash value `v` in [0, M).
    #[inline]
    pub fn level_of_value(&self, v: u64) -> u32 {
        debug_assert!(v < self.big_m);
        if let Some(bits) = self.halving_bits {
            let bitlen = 64 - v.leading_zeros();
            return (bits - bitlen.min(bits)).min(self.levels - 1);
        }
        // Largest l with v < thresholds[l]; thresholds decrease, so binary
        // search over the flipped predicate.
        let first_excluded = self.thresholds.partition_point(|&thr| v < thr);
        (first_excluded as u32).saturating_sub(1).min(self.levels - 1)
    }

    /// Level of a value under the given level hash.
    pub fn level_of(&self, hash: &HashFn, x: u64) -> u32 {
        self.level_of_value(hash.eval(x))
    }

    /// Picks the extraction level for a distinct-count estimate and target
    /// sample size: the l* with
    /// (1/alpha) L0~ lambda^(l*+1) (1-lambda) < 2K <= (1/alpha) L0~ lambda^(l*) (1-lambda),
    /// clamped into [0, L-1]. Returns `None` for an empty stream (L0~ = 0);
    /// the flag reports that clamping replaced an unsatisfiable inequality.
    pub fn select_level(&self, l0_estimate: u64, k: u64) -> Option<(u32, bool)> {
        if l0_estimate == 0 {
            return None;
        }
        let target = 2.0 * k as f64;
        let g = |l: u32| -> f64 {
            l0_estimate as f64 * self.lambda.powi(l as i32) * (1.0 - self.lambda) / self.alpha
        };
        if g(0) < target {
            return Some((0, true));
        }
        // g decreases in l; take the largest level still holding 2K expected.
        let mut level = 0;
        while level + 1 < self.levels && g(level + 1) >= target {
            level += 1;
        }
        let clamped = level == self.levels - 1 && g(self.levels) >= target;
        Some((level, clamped))
    }
}

fn dyadic_exponent(lambda: f64) -> Option<u32> {
    for j in 1..=32 {
        if lambda == 0.5f64.powi(j) {
            return Some(j as u32);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda: f64, big_m: u64) -> LevelConfig {
        LevelConfig::new(lambda, 1.5, big_m).unwrap()
    }

    #[test]
    fn top_of_range_maps_to_level_zero() {
        let c = cfg(0.5, 1 << 20);
        assert_eq!(c.level_of_value((1 << 20) - 1), 0);
    }

    #[test]
    fn zero_maps_to_the_deepest_level() {
        let c = cfg(0.5, 1 << 20);
        assert_eq!(c.level_of_value(0), c.level_count() - 1);
    }

    #[test]
    fn quarter_point_maps_to_level_one() {
        let m = 1u64 << 20;
        let c = cfg(0.5, m);
        assert_eq!(c.level_of_value(m / 4), 1);
    }

    /// Every hash value lands in exactly one level, and whenever the paper's
    /// two-sided floor condition has a solution the assigned level is it.
    #[test]
    fn partition_is_exhaustive_for_small_ranges() {
        for (lambda, big_m) in [(0.5, 64u64), (0.5, 100), (0.25, 64), (0.3, 81)] {
            let c = LevelConfig::new(lambda, 1.5, big_m).unwrap();
            for v in 0..big_m {
                let assigned = c.level_of_value(v);
                let holds = |l: u32| {
                    let h_l = (v as f64 / (lambda.powi(l as i32) * big_m as f64)).floor();
                    let h_next = (v as f64 / (lambda.powi(l as i32 + 1) * big_m as f64)).floor();
                    h_l == 0.0 && h_next != 0.0
                };
                let satisfying: Vec<u32> = (0..c.level_count()).filter(|&l| holds(l)).collect();
                assert!(satisfying.len() <= 1, "lambda={lambda} M={big_m} v={v}");
                match satisfying.first() {
                    Some(&l) => assert_eq!(assigned, l, "lambda={lambda} M={big_m} v={v}"),
                    // Condition unterminated (v in the deepest tail).
                    None => assert_eq!(assigned, c.level_count() - 1),
                }
            }
        }
    }

    #[test]
    fn fast_path_matches_table_walk() {
        let m = 1u64 << 16;
        let fast = cfg(0.5, m);
        assert!(fast.halving_bits.is_some());
        let mut slow = fast.clone();
        slow.halving_bits = None;
        for v in 0..m {
            assert_eq!(fast.level_of_value(v), slow.level_of_value(v), "v={v}");
        }
    }

    /// The returned level satisfies the selection inequality whenever it is
    /// not clamped.
    #[test]
    fn selected_level_satisfies_the_inequality() {
        let c = cfg(0.5, 1 << 24);
        for (l0, k) in [(240u64, 10u64), (100_000, 100), (7_000, 64), (13, 1)] {
            let (level, clamped) = c.select_level(l0, k).unwrap();
            if clamped {
                continue;
            }
            let g = |l: u32| l0 as f64 * 0.5f64.powi(l as i32) * 0.5 / 1.5;
            assert!(
                2.0 * k as f64 <= g(level),
                "l0={l0} k={k} level={level}: upper side"
            );
            assert!(
                g(level + 1) < 2.0 * k as f64,
                "l0={l0} k={k} level={level}: lower side"
            );
        }
        // Direct instance: L0~ = 24K solves to l* = 2 under the defaults.
        let (level, clamped) = c.select_level(240, 10).unwrap();
        assert_eq!((level, clamped), (2, false));
    }

    #[test]
    fn empty_stream_is_a_sentinel() {
        let c = cfg(0.5, 1 << 20);
        assert_eq!(c.select_level(0, 10), None);
    }

    #[test]
    fn tiny_streams_clamp_to_level_zero() {
        let c = cfg(0.5, 1 << 20);
        assert_eq!(c.select_level(3, 100), Some((0, true)));
    }
}
