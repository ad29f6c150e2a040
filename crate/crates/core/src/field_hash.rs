//! Seeded t-wise independent hash functions over the prime field GF(2^61 - 1).
//!
//! A hash function is a random polynomial of degree t-1 with coefficients in
//! the field, evaluated at the input and reduced modulo the output range. Any
//! t outputs are jointly uniform (up to the O(range/p) reduction bias, which
//! is below 2^-29 for every range used in this crate).
//!
//! The Mersenne prime p = 2^61 - 1 keeps modular multiplication to one 128-bit
//! product and a fold. Coefficients are expanded deterministically from a
//! 64-bit seed with a SplitMix64 counter generator, so identical seeds produce
//! identical functions on every platform.
//!
//! Batched evaluation on up to t points goes through a subproduct tree
//! (build the product of the (X - x_i), then push remainders down), which is
//! how the amortized per-point cost stays polylogarithmic in t. Tiny batches
//! fall back to Horner's rule where the tree overhead dominates.

use crate::error::HashError;

/// The field modulus, 2^61 - 1.
pub const FIELD_PRIME: u64 = (1 << 61) - 1;

/// Batches smaller than this are evaluated point-by-point with Horner's rule.
const TREE_MIN_BATCH: usize = 16;

/// Polynomial products below this size use the schoolbook algorithm.
const KARATSUBA_MIN: usize = 32;

#[inline]
fn add_mod(a: u64, b: u64) -> u64 {
    let mut r = a + b; // < 2^62
    r = (r & FIELD_PRIME) + (r >> 61);
    if r >= FIELD_PRIME {
        r - FIELD_PRIME
    } else {
        r
    }
}

#[inline]
fn sub_mod(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + FIELD_PRIME - b
    }
}

#[inline]
fn mul_mod(a: u64, b: u64) -> u64 {
    debug_assert!(a < FIELD_PRIME && b < FIELD_PRIME);
    let t = a as u128 * b as u128; // < 2^122
    let lo = (t & FIELD_PRIME as u128) as u64;
    let hi = (t >> 61) as u64;
    add_mod(lo, hi)
}

/// SplitMix64 counter generator (constants from Vigna's reference
/// implementation). Used for seed expansion and sub-seed derivation so that
/// sketches are bit-reproducible across platforms.
pub(crate) struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub(crate) fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub(crate) fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }
}

/// The SplitMix64 finalizer.
pub(crate) fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a sub-seed from a master seed, a fixed domain tag and an index.
/// Every hash function in a sketch gets its randomness from a disjoint
/// (domain, index) pair so the level mapping, the per-array hashes, the guard
/// hashes and the L0 estimator stay mutually independent.
pub(crate) fn sub_seed(master: u64, domain: u64, index: u64) -> u64 {
    let a = mix64(master ^ domain.wrapping_mul(0xA076_1D64_78BD_642F));
    mix64(a ^ index.wrapping_mul(0xE703_7ED1_A0B4_28DB))
}

/// A degree-(t-1) polynomial over GF(2^61 - 1) with output range `[0, range)`.
///
/// Immutable after construction; identical `(seed, t, range)` inputs to
/// [`HashFn::new`] produce identical functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFn {
    /// Coefficients in ascending degree order; `coeffs.len()` is the
    /// independence degree t.
    coeffs: Vec<u64>,
    range: u64,
}

impl HashFn {
    /// Builds a t-wise independent hash with coefficients expanded from
    /// `seed`. Requires `1 <= range < p` and `1 <= t < p`.
    pub fn new(seed: u64, t: u64, range: u64) -> Result<Self, HashError> {
        if range == 0 || range >= FIELD_PRIME {
            return Err(HashError::InvalidRange {
                got: range,
                max: FIELD_PRIME,
            });
        }
        if t == 0 || t >= FIELD_PRIME {
            return Err(HashError::InvalidDegree {
                got: t,
                max: FIELD_PRIME,
            });
        }
        let mut gen = SplitMix64::new(seed);
        let coeffs = (0..t)
            .map(|_| loop {
                // Masking to 61 bits leaves a single rejected value (p), so
                // coefficients are exactly uniform on [0, p).
                let v = gen.next_u64() & FIELD_PRIME;
                if v < FIELD_PRIME {
                    break v;
                }
            })
            .collect();
        Ok(Self { coeffs, range })
    }

    /// Builds a hash from explicit coefficients (ascending degree order).
    pub fn from_coefficients(coeffs: Vec<u64>, range: u64) -> Result<Self, HashError> {
        if range == 0 || range >= FIELD_PRIME {
            return Err(HashError::InvalidRange {
                got: range,
                max: FIELD_PRIME,
            });
        }
        if coeffs.is_empty() || coeffs.iter().any(|&c| c >= FIELD_PRIME) {
            return Err(HashError::InvalidDegree {
                got: coeffs.len() as u64,
                max: FIELD_PRIME,
            });
        }
        Ok(Self { coeffs, range })
    }

    /// Independence degree t.
    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn range(&self) -> u64 {
        self.range
    }

    /// Evaluates the polynomial at `x` (Horner's rule) and reduces into the
    /// output range. `x` must be a field element.
    #[inline]
    pub fn eval(&self, x: u64) -> u64 {
        debug_assert!(x < FIELD_PRIME);
        let mut acc = *self.coeffs.last().expect("coeffs nonempty");
        for &c in self.coeffs.iter().rev().skip(1) {
            acc = add_mod(mul_mod(acc, x), c);
        }
        acc % self.range
    }

    /// Evaluates the polynomial on a batch of at most t points.
    ///
    /// `out[i] == eval(xs[i])` for every i. Batches larger than t violate the
    /// multipoint contract and are rejected.
    pub fn multipoint_eval(&self, xs: &[u64]) -> Result<Vec<u64>, HashError> {
        if xs.len() > self.coeffs.len() {
            return Err(HashError::BatchTooLarge {
                len: xs.len(),
                t: self.coeffs.len(),
            });
        }
        Ok(self.eval_with_plan(&MultipointPlan::new(xs)))
    }

    /// Evaluates on a prepared batch. The plan may be reused for several
    /// hash functions over the same points; the caller is responsible for
    /// the batch-size contract (`plan.len() <= t`).
    pub fn eval_with_plan(&self, plan: &MultipointPlan) -> Vec<u64> {
        match &plan.tree {
            None => plan.points.iter().map(|&x| self.eval(x)).collect(),
            Some(tree) => {
                let rem = poly_rem(&self.coeffs, &tree.poly);
                let mut out = Vec::with_capacity(plan.points.len());
                descend(tree, &rem, &mut out);
                debug_assert_eq!(out.len(), plan.points.len());
                out.iter_mut().for_each(|v| *v %= self.range);
                out
            }
        }
    }
}

/// A prepared multipoint-evaluation batch: the subproduct tree over the
/// points, built once and shared by every polynomial evaluated on them.
pub struct MultipointPlan {
    points: Vec<u64>,
    tree: Option<SubproductTree>,
}

impl MultipointPlan {
    pub fn new(points: &[u64]) -> Self {
        let tree = if points.len() >= TREE_MIN_BATCH {
            Some(SubproductTree::build(points))
        } else {
            None
        };
        Self {
            points: points.to_vec(),
            tree,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

struct SubproductTree {
    /// Monic product of (X - x_i) over this node's points.
    poly: Vec<u64>,
    children: Option<Box<(SubproductTree, SubproductTree)>>,
}

impl SubproductTree {
    fn build(points: &[u64]) -> Self {
        match points {
            [x] => SubproductTree {
                poly: vec![sub_mod(0, *x), 1],
                children: None,
            },
            _ => {
                let (l, r) = points.split_at(points.len() / 2);
                let left = Self::build(l);
                let right = Self::build(r);
                let poly = poly_mul(&left.poly, &right.poly);
                SubproductTree {
                    poly,
                    children: Some(Box::new((left, right))),
                }
            }
        }
    }
}

/// Pushes the remainder of the hash polynomial down the tree; at each leaf
/// the remainder mod (X - x) is the constant f(x).
fn descend(node: &SubproductTree, rem: &[u64], out: &mut Vec<u64>) {
    match &node.children {
        None => out.push(rem.first().copied().unwrap_or(0)),
        Some(ch) => {
            let (left, right) = ch.as_ref();
            let rl = poly_rem(rem, &left.poly);
            descend(left, &rl, out);
            let rr = poly_rem(rem, &right.poly);
            descend(right, &rr, out);
        }
    }
}

fn poly_len(p: &[u64]) -> usize {
    let mut n = p.len();
    while n > 0 && p[n - 1] == 0 {
        n -= 1;
    }
    n
}

/// Product of two coefficient vectors (ascending order).
fn poly_mul(a: &[u64], b: &[u64]) -> Vec<u64> {
    let (na, nb) = (poly_len(a), poly_len(b));
    if na == 0 || nb == 0 {
        return vec![];
    }
    if na.min(nb) < KARATSUBA_MIN {
        let mut out = vec![0u64; na + nb - 1];
        for (i, &ai) in a[..na].iter().enumerate() {
            if ai == 0 {
                continue;
            }
            for (j, &bj) in b[..nb].iter().enumerate() {
                out[i + j] = add_mod(out[i + j], mul_mod(ai, bj));
            }
        }
        return out;
    }
    karatsuba(&a[..na], &b[..nb])
}

fn karatsuba(a: &[u64], b: &[u64]) -> Vec<u64> {
    let n = a.len().max(b.len());
    let half = n / 2;
    if a.len() <= half || b.len() <= half {
        // Lopsided split; fall back to splitting the longer operand only.
        let (lo, hi) = if a.len() > half {
            (a.split_at(half), b)
        } else {
            (b.split_at(half), a)
        };
        let ((x0, x1), y) = (lo, hi);
        let mut out = vec![0u64; a.len() + b.len() - 1];
        for (res, part) in [(0usize, x0), (half, x1)] {
            let prod = poly_mul(part, y);
            for (i, &v) in prod.iter().enumerate() {
                out[res + i] = add_mod(out[res + i], v);
            }
        }
        return out;
    }
    let (a0, a1) = a.split_at(half);
    let (b0, b1) = b.split_at(half);
    let z0 = poly_mul(a0, b0);
    let z2 = poly_mul(a1, b1);
    let asum = poly_add(a0, a1);
    let bsum = poly_add(b0, b1);
    let mut z1 = poly_mul(&asum, &bsum);
    for (i, &v) in z0.iter().enumerate() {
        z1[i] = sub_mod(z1[i], v);
    }
    for (i, &v) in z2.iter().enumerate() {
        z1[i] = sub_mod(z1[i], v);
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &v) in z0.iter().enumerate() {
        out[i] = add_mod(out[i], v);
    }
    for (i, &v) in z1.iter().enumerate() {
        out[half + i] = add_mod(out[half + i], v);
    }
    for (i, &v) in z2.iter().enumerate() {
        out[2 * half + i] = add_mod(out[2 * half + i], v);
    }
    out
}

fn poly_add(a: &[u64], b: &[u64]) -> Vec<u64> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut out = long.to_vec();
    for (i, &v) in short.iter().enumerate() {
        out[i] = add_mod(out[i], v);
    }
    out
}

/// Remainder of `f` modulo the monic polynomial `g` (schoolbook division).
fn poly_rem(f: &[u64], g: &[u64]) -> Vec<u64> {
    let ng = poly_len(g);
    debug_assert!(ng >= 1 && g[ng - 1] == 1, "divisor must be monic");
    let nf = poly_len(f);
    if nf < ng {
        return f[..nf].to_vec();
    }
    let mut rem = f[..nf].to_vec();
    for i in (ng - 1..nf).rev() {
        let q = rem[i];
        if q == 0 {
            continue;
        }
        rem[i] = 0;
        for (j, &gj) in g[..ng - 1].iter().enumerate() {
            let idx = i + 1 + j - ng;
            rem[idx] = sub_mod(rem[idx], mul_mod(q, gj));
        }
    }
    rem.truncate(ng - 1);
    rem
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_seed_gives_identical_function() {
        let a = HashFn::new(1, 2, 16).unwrap();
        let b = HashFn::new(1, 2, 16).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.coeffs, b.coeffs);
    }

    #[test]
    fn range_and_degree_bounds_are_enforced() {
        assert!(matches!(
            HashFn::new(1, 2, FIELD_PRIME + 1),
            Err(HashError::InvalidRange { .. })
        ));
        assert!(matches!(
            HashFn::new(1, 2, 0),
            Err(HashError::InvalidRange { .. })
        ));
        assert!(matches!(
            HashFn::new(1, 0, 16),
            Err(HashError::InvalidDegree { .. })
        ));
    }

    #[test]
    fn seed_expansion_shape() {
        let h = HashFn::new(7, 32, 1 << 20).unwrap();
        assert_eq!(h.degree(), 32);
        assert!(h.coeffs.iter().all(|&c| c < FIELD_PRIME));
    }

    #[test]
    fn constant_polynomial_evaluates_to_constant() {
        let h = HashFn::from_coefficients(vec![12345], 100).unwrap();
        for x in [0, 1, 99, 1 << 40] {
            assert_eq!(h.eval(x), 12345 % 100);
        }
    }

    #[test]
    fn identity_polynomial_with_full_range() {
        let h = HashFn::from_coefficients(vec![0, 1], FIELD_PRIME - 1).unwrap();
        for x in [0u64, 1, 5, 1 << 33, FIELD_PRIME - 2] {
            assert_eq!(h.eval(x), x % (FIELD_PRIME - 1));
        }
    }

    #[test]
    fn singleton_batch_equals_eval() {
        let h = HashFn::new(42, 4, 1000).unwrap();
        let xs = [987654321u64];
        assert_eq!(h.multipoint_eval(&xs).unwrap(), vec![h.eval(xs[0])]);
    }

    #[test]
    fn multipoint_matches_horner_at_t8() {
        let h = HashFn::new(99, 8, 1 << 30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<u64> = (0..8).map(|_| rng.random_range(0..FIELD_PRIME)).collect();
        let batch = h.multipoint_eval(&xs).unwrap();
        let point: Vec<u64> = xs.iter().map(|&x| h.eval(x)).collect();
        assert_eq!(batch, point);
    }

    #[test]
    fn multipoint_matches_horner_on_tree_path() {
        // Batch sizes at and above the tree threshold, including duplicates.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for t in [16usize, 17, 31, 32, 48, 64] {
            let h = HashFn::new(rng.random(), t as u64, 1 << 24).unwrap();
            let mut xs: Vec<u64> = (0..t).map(|_| rng.random_range(0..FIELD_PRIME)).collect();
            xs[t / 2] = xs[0];
            let batch = h.multipoint_eval(&xs).unwrap();
            let point: Vec<u64> = xs.iter().map(|&x| h.eval(x)).collect();
            assert_eq!(batch, point, "t = {t}");
            assert_eq!(batch[t / 2], batch[0]);
        }
    }

    #[test]
    fn oversized_batch_is_rejected() {
        let h = HashFn::new(3, 4, 100).unwrap();
        assert!(matches!(
            h.multipoint_eval(&[1, 2, 3, 4, 5]),
            Err(HashError::BatchTooLarge { len: 5, t: 4 })
        ));
    }

    #[test]
    fn shared_plan_matches_per_hash_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let xs: Vec<u64> = (0..32).map(|_| rng.random_range(0..1 << 32)).collect();
        let plan = MultipointPlan::new(&xs);
        for seed in 0..4u64 {
            let h = HashFn::new(seed, 32, 4096).unwrap();
            let via_plan = h.eval_with_plan(&plan);
            let direct: Vec<u64> = xs.iter().map(|&x| h.eval(x)).collect();
            assert_eq!(via_plan, direct);
        }
    }

    #[test]
    fn pairwise_collision_rate_is_near_uniform() {
        // Pr[h(x) = h(y)] for fixed x != y should sit within three standard
        // errors of 1/s over many independent seeds.
        let s = 64u64;
        let trials = 20_000u64;
        let (x, y) = (12345u64, 987654321u64);
        let mut collisions = 0u64;
        for seed in 0..trials {
            let h = HashFn::new(seed, 2, s).unwrap();
            if h.eval(x) == h.eval(y) {
                collisions += 1;
            }
        }
        let p = 1.0 / s as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        let observed = collisions as f64 / trials as f64;
        assert!(
            (observed - p).abs() <= 3.0 * se,
            "observed {observed}, expected {p} +/- {}",
            3.0 * se
        );
    }
}
