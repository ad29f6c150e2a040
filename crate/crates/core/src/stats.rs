//! Estimators computed from extracted samples: inverse distribution point,
//! range, heavy-hitter and quantile queries, coordinated Jaccard similarity,
//! and the high-moment tail bound used to calibrate Monte-Carlo tests.
//!
//! Because sample totals are exact, the inverse distribution of the sample is
//! an additive-epsilon estimate of the stream's inverse distribution; the
//! reported error bound stacks the sampling term with the partial-sample loss
//! of an epsilon-FRS extraction.

use std::collections::BTreeMap;

use crate::error::StatsError;
use crate::sampler::{MergeOp, Sample, SampleLevel, SamplerSketch};

/// The empirical inverse distribution of a sample: for each observed total i,
/// the fraction of sampled values whose total is exactly i.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseDistribution {
    counts: BTreeMap<i128, usize>,
    total: usize,
}

impl InverseDistribution {
    /// Undefined on an empty sample.
    pub fn from_sample(sample: &Sample) -> Result<Self, StatsError> {
        if sample.is_empty() {
            return Err(StatsError::EmptySample);
        }
        let mut counts: BTreeMap<i128, usize> = BTreeMap::new();
        for &(_, c) in &sample.entries {
            *counts.entry(c).or_insert(0) += 1;
        }
        Ok(Self {
            counts,
            total: sample.len(),
        })
    }

    /// Fraction of sampled values with total exactly `freq`.
    pub fn point(&self, freq: i128) -> f64 {
        *self.counts.get(&freq).unwrap_or(&0) as f64 / self.total as f64
    }

    /// Sum of the point estimates over totals in `[lo, hi]`.
    pub fn range(&self, lo: i128, hi: i128) -> f64 {
        self.counts
            .range(lo..=hi)
            .map(|(_, &n)| n)
            .sum::<usize>() as f64
            / self.total as f64
    }

    /// Totals whose inverse-distribution mass is at least `phi`.
    pub fn heavy_hitters(&self, phi: f64) -> Vec<i128> {
        self.counts
            .iter()
            .filter(|&(_, &n)| n as f64 / self.total as f64 >= phi)
            .map(|(&i, _)| i)
            .collect()
    }

    /// Smallest observed total whose cumulative mass (ascending) reaches `phi`.
    pub fn quantile(&self, phi: f64) -> i128 {
        let mut acc = 0usize;
        for (&i, &n) in &self.counts {
            acc += n;
            if acc as f64 / self.total as f64 >= phi {
                return i;
            }
        }
        *self.counts.keys().next_back().expect("nonempty")
    }
}

/// Inverse point query f^-1(freq): the fraction of distinct surviving values
/// whose total count equals `freq` (which must be nonzero).
pub fn inverse_point(sample: &Sample, freq: i128) -> Result<f64, StatsError> {
    if freq == 0 {
        return Err(StatsError::InvalidQuery(
            "frequency 0 is excluded from the inverse distribution".into(),
        ));
    }
    Ok(InverseDistribution::from_sample(sample)?.point(freq))
}

/// Inverse range query over totals in `[lo, hi]`.
pub fn inverse_range(sample: &Sample, lo: i128, hi: i128) -> Result<f64, StatsError> {
    if lo > hi {
        return Err(StatsError::InvalidQuery(format!(
            "empty range [{lo}, {hi}]"
        )));
    }
    Ok(InverseDistribution::from_sample(sample)?.range(lo, hi))
}

/// Totals with inverse-distribution mass at least `phi`. A threshold above 1
/// is legal and yields an empty set.
pub fn inverse_heavy_hitters(sample: &Sample, phi: f64) -> Result<Vec<i128>, StatsError> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(StatsError::InvalidQuery(format!(
            "threshold must be positive, got {phi}"
        )));
    }
    Ok(InverseDistribution::from_sample(sample)?.heavy_hitters(phi))
}

/// Inverse quantile: smallest total (ascending) with cumulative mass >= phi.
pub fn inverse_quantile(sample: &Sample, phi: f64) -> Result<i128, StatsError> {
    if !(phi > 0.0 && phi <= 1.0) {
        return Err(StatsError::InvalidQuery(format!(
            "quantile rank must be in (0, 1], got {phi}"
        )));
    }
    Ok(InverseDistribution::from_sample(sample)?.quantile(phi))
}

/// The additive error bound to report with estimates from this sample:
/// the sampling term sqrt(4 ln(1/delta) / |S|) (from the sample-size rule
/// K = 4/eps^2 ln(1/delta)) plus the partial-sample loss epsilon.
pub fn error_bound(sample: &Sample) -> f64 {
    if sample.is_empty() {
        return 1.0;
    }
    let point = (4.0 * (1.0 / sample.delta).ln() / sample.len() as f64).sqrt();
    (point + sample.partial_epsilon).min(1.0)
}

/// Jaccard similarity of the two streams' surviving supports.
///
/// Builds the union sketch, extracts a sample from it, then extracts from
/// both inputs at the same level (coordinated by the shared level hash).
/// The estimate is the fraction of union-sampled values recovered from both
/// sides. Any failed recovery aborts rather than biasing the estimate.
pub fn jaccard(a: &SamplerSketch, b: &SamplerSketch) -> Result<f64, StatsError> {
    let mut union = a.merged(b, MergeOp::Union)?;
    let union_sample = union.extract()?;
    if union_sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (sample_a, sample_b) = match union_sample.level {
        SampleLevel::Level(l) => (a.extract_at_level(l)?, b.extract_at_level(l)?),
        SampleLevel::WholeStream => (a.extract_whole()?, b.extract_whole()?),
        SampleLevel::EmptyStream => return Err(StatsError::EmptySample),
    };
    let in_both = |k: u64| {
        sample_a.entries.binary_search_by_key(&k, |e| e.0).is_ok()
            && sample_b.entries.binary_search_by_key(&k, |e| e.0).is_ok()
    };
    let hits = union_sample
        .entries
        .iter()
        .filter(|&&(k, _)| in_both(k))
        .count();
    Ok(hits as f64 / union_sample.len() as f64)
}

/// High-moment tail bound for a sum Z of l-wise independent indicators:
/// Pr[|Z - E| >= alpha E] <= min(1, 48 l / alpha * (6 l / (alpha^2 E))^((l-1)/2)).
/// `l` must be even. Used to size Monte-Carlo trial counts and tolerances.
pub fn tail_bound(expected: f64, l: u32, alpha: f64) -> Result<f64, StatsError> {
    if l < 2 || l % 2 != 0 {
        return Err(StatsError::InvalidQuery(format!(
            "moment order must be even and at least 2, got {l}"
        )));
    }
    if !(expected > 0.0) || !(alpha > 0.0) {
        return Err(StatsError::InvalidQuery(
            "expected value and deviation factor must be positive".into(),
        ));
    }
    let l = l as f64;
    let base = 6.0 * l / (alpha * alpha * expected);
    let bound = 48.0 * l / alpha * base.powf((l - 1.0) / 2.0);
    Ok(bound.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::SamplerConfig;
    use crate::{Model, RecoveryKind};

    fn sample_of(entries: Vec<(u64, i128)>) -> Sample {
        Sample {
            entries,
            level: SampleLevel::Level(0),
            l0_estimate: 0,
            clamped_level: false,
            fallback_levels: 0,
            residual_bins: 0,
            skipped_bins: 0,
            delta: 0.1,
            partial_epsilon: 0.0,
        }
    }

    #[test]
    fn point_query_on_uniform_totals() {
        let s = sample_of((1..=10).map(|k| (k, 1i128)).collect());
        assert_eq!(inverse_point(&s, 1).unwrap(), 1.0);
        assert_eq!(inverse_point(&s, 7).unwrap(), 0.0);
    }

    #[test]
    fn zero_frequency_is_rejected() {
        let s = sample_of(vec![(1, 1)]);
        assert!(matches!(
            inverse_point(&s, 0),
            Err(StatsError::InvalidQuery(_))
        ));
    }

    #[test]
    fn empty_sample_is_an_error() {
        let s = sample_of(vec![]);
        assert!(matches!(
            inverse_point(&s, 1),
            Err(StatsError::EmptySample)
        ));
    }

    #[test]
    fn range_over_all_observed_totals_is_one() {
        let s = sample_of(vec![(1, 1), (2, 3), (3, 3), (4, -2)]);
        assert_eq!(inverse_range(&s, -2, 3).unwrap(), 1.0);
        assert_eq!(inverse_range(&s, 3, 3).unwrap(), 0.5);
    }

    #[test]
    fn point_masses_sum_to_one() {
        let s = sample_of(vec![(1, 5), (2, 5), (3, 9), (4, -1), (5, 9)]);
        let dist = InverseDistribution::from_sample(&s).unwrap();
        let total: f64 = [-1, 5, 9].iter().map(|&i| dist.point(i)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heavy_hitters_above_one_is_empty() {
        let s = sample_of(vec![(1, 1), (2, 1)]);
        assert!(inverse_heavy_hitters(&s, 1.5).unwrap().is_empty());
        assert_eq!(inverse_heavy_hitters(&s, 0.9).unwrap(), vec![1]);
    }

    #[test]
    fn quantile_on_an_even_split() {
        // Totals 1 and 2 at 50% each: the median is 1.
        let s = sample_of(vec![(10, 1), (11, 1), (12, 2), (13, 2)]);
        assert_eq!(inverse_quantile(&s, 0.5).unwrap(), 1);
        assert_eq!(inverse_quantile(&s, 0.75).unwrap(), 2);
    }

    #[test]
    fn jaccard_identical_and_disjoint() {
        let cfg = SamplerConfig::new(Model::Strict, RecoveryKind::Frs, 8, 0.1)
            .with_universe(1 << 14, 1 << 10, 1 << 20)
            .with_seed(5);
        let mut a = SamplerSketch::new(cfg.clone()).unwrap();
        let mut b = SamplerSketch::new(cfg.clone()).unwrap();
        let mut c = SamplerSketch::new(cfg).unwrap();
        for k in 1..500u64 {
            a.update(k, 2).unwrap();
            b.update(k, 5).unwrap(); // same support, different totals
            c.update(k + 8000, 1).unwrap();
        }
        a.flush();
        b.flush();
        c.flush();
        assert_eq!(jaccard(&a, &b).unwrap(), 1.0);
        assert_eq!(jaccard(&a, &c).unwrap(), 0.0);
        assert_eq!(jaccard(&a, &c).unwrap(), jaccard(&c, &a).unwrap());
    }

    #[test]
    fn tail_bound_examples() {
        // Vacuous regime: base >= 1 forces the bound to 1.
        assert_eq!(tail_bound(10.0, 4, 0.5).unwrap(), 1.0);
        // E = 1e4, l = 10, alpha = 0.5: 960 * (60 / 2500)^4.5.
        let b = tail_bound(1e4, 10, 0.5).unwrap();
        let expect = 960.0 * (60.0f64 / 2500.0).powf(4.5);
        assert!((b - expect).abs() < 1e-12);
        assert!((b - 4.94e-5).abs() < 1e-6);
        // Monotone: growing E never increases the bound.
        let mut prev = f64::INFINITY;
        for e in [1e2, 1e3, 1e4, 1e5] {
            let v = tail_bound(e, 10, 0.5).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(matches!(tail_bound(1e4, 9, 0.5), Err(_)));
    }
}
