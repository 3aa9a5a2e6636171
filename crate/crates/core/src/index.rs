//! Multi-index sets and dyadic sparse grids organizing the hierarchical expansion.
//!
//! A level multi-index `k` selects one dyadic refinement level per axis; the
//! "notched" set keeps only indices whose largest coordinate is big relative to
//! how far the total level falls short of the target, which thins the classical
//! Smolyak set near its diagonal.

use crate::error::{Error, Result};
use crate::sampling::Lp;
use std::collections::BTreeSet;
use std::fmt;

/// Per-axis dyadic level vector `k`, entries >= -1.
///
/// Level -1 indexes the two boundary half-hats of the general basis; the
/// sampling operator only ever uses levels >= 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiLevel(Vec<i32>);

impl MultiLevel {
    pub fn new(levels: Vec<i32>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("level vector must have dimension >= 1"));
        }
        if let Some(&k) = levels.iter().find(|&&k| k < -1) {
            return Err(Error::invalid(format!("level {k} below -1")));
        }
        Ok(MultiLevel(levels))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn levels(&self) -> &[i32] {
        &self.0
    }

    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|&k| k as i64).sum()
    }

    pub fn linf_norm(&self) -> i32 {
        self.0.iter().copied().max().unwrap()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|&k| k >= 0)
    }
}

impl fmt::Display for MultiLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|k| k.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Per-axis position vector `s`; `s_i` ranges over `Z(k_i) = {0, ..., 2^{k_i}-1}`
/// for `k_i >= 0` and over `{0, 1}` for `k_i = -1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiPosition(Vec<u64>);

impl MultiPosition {
    /// Validates `s` against its paired level vector.
    pub fn new(positions: Vec<u64>, levels: &MultiLevel) -> Result<Self> {
        if positions.len() != levels.dim() {
            return Err(Error::DimensionMismatch {
                expected: levels.dim(),
                got: positions.len(),
            });
        }
        for (&s, &k) in positions.iter().zip(levels.levels()) {
            let limit = if k >= 0 { 1u64 << k } else { 2 };
            if s >= limit {
                return Err(Error::invalid(format!(
                    "position {s} out of range for level {k}"
                )));
            }
        }
        Ok(MultiPosition(positions))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn positions(&self) -> &[u64] {
        &self.0
    }
}

impl fmt::Display for MultiPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Which family an [`IndexSet`] was enumerated from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexSetKind {
    /// Notched Smolyak set: `|k|_1 = m - j` and `|k|_inf >= m - floor(beta j)`.
    Notched { beta: f64, m: u32 },
    /// Classical Smolyak set `|k|_1 <= m`.
    Smolyak { m: u32 },
    /// Full tensor set `|k|_inf <= m`.
    Full { m: u32 },
}

/// A deduplicated, lexicographically ordered collection of level multi-indices.
#[derive(Debug, Clone)]
pub struct IndexSet {
    kind: IndexSetKind,
    dim: usize,
    entries: Vec<MultiLevel>,
}

impl IndexSet {
    pub fn kind(&self) -> IndexSetKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[MultiLevel] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, k: &MultiLevel) -> bool {
        self.entries.binary_search(k).is_ok()
    }
}

/// Exact `floor(beta * j)` for a finite `beta > 0` given as an f64.
///
/// Membership in the notched set is discontinuous in `beta`, so the floor is
/// taken on the exact binary rational the f64 represents rather than on a
/// rounded product.
pub(crate) fn floor_beta_j(beta: f64, j: u32) -> i64 {
    assert!(beta.is_finite() && beta > 0.0);
    if j == 0 {
        return 0;
    }
    let bits = beta.to_bits();
    let exp_field = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    // beta > 0 and beta >= 1 in all callers, so the subnormal branch is moot,
    // but handle it anyway.
    let (mantissa, exp) = if exp_field == 0 {
        (frac, -1074i64)
    } else {
        (frac | (1u64 << 52), exp_field - 1075)
    };
    let prod = mantissa as i128 * j as i128;
    let val = if exp >= 0 {
        prod.checked_shl(exp as u32).expect("floor_beta_j overflow")
    } else {
        let shift = (-exp) as u32;
        if shift >= 127 {
            0
        } else {
            prod >> shift
        }
    };
    val as i64
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    Ok(())
}

/// Enumerates all `k` in N_0^d with `|k|_1 <= m`, in lexicographic order,
/// calling `visit` on each.
fn for_each_l1_bounded(d: usize, m: u32, visit: &mut impl FnMut(&[i32])) {
    fn rec(buf: &mut Vec<i32>, d: usize, rest: i64, visit: &mut impl FnMut(&[i32])) {
        if buf.len() == d - 1 {
            for last in 0..=rest {
                buf.push(last as i32);
                visit(buf);
                buf.pop();
            }
            return;
        }
        for v in 0..=rest {
            buf.push(v as i32);
            rec(buf, d, rest - v, visit);
            buf.pop();
        }
    }
    let mut buf = Vec::with_capacity(d);
    rec(&mut buf, d, m as i64, visit);
}

/// The notched index set `Delta^d_beta(m)`: all `k` with `|k|_1 = m - j` for some
/// `j in {0..m}` and `|k|_inf >= m - floor(beta j)`.
pub fn enumerate_notched(d: usize, beta: f64, m: u32) -> Result<IndexSet> {
    check_dim(d)?;
    if !(beta > 1.0) || !beta.is_finite() {
        return Err(Error::invalid(format!("beta must be > 1, got {beta}")));
    }
    let mut entries = Vec::new();
    for_each_l1_bounded(d, m, &mut |k| {
        let l1: i64 = k.iter().map(|&v| v as i64).sum();
        let j = (m as i64 - l1) as u32;
        let threshold = m as i64 - floor_beta_j(beta, j);
        let linf = *k.iter().max().unwrap() as i64;
        if linf >= threshold {
            entries.push(MultiLevel(k.to_vec()));
        }
    });
    Ok(IndexSet {
        kind: IndexSetKind::Notched { beta, m },
        dim: d,
        entries,
    })
}

/// The Smolyak index set `Delta^d(m)`: all `k` with `|k|_1 <= m`.
pub fn enumerate_smolyak(d: usize, m: u32) -> Result<IndexSet> {
    check_dim(d)?;
    let mut entries = Vec::new();
    for_each_l1_bounded(d, m, &mut |k| entries.push(MultiLevel(k.to_vec())));
    Ok(IndexSet {
        kind: IndexSetKind::Smolyak { m },
        dim: d,
        entries,
    })
}

/// The full tensor index set: all `k` with `|k|_inf <= m`.
pub fn enumerate_full(d: usize, m: u32) -> Result<IndexSet> {
    check_dim(d)?;
    let mut entries = Vec::new();
    let mut k = vec![0i32; d];
    loop {
        entries.push(MultiLevel(k.clone()));
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(IndexSet {
                    kind: IndexSetKind::Full { m },
                    dim: d,
                    entries,
                });
            }
            axis -= 1;
            if k[axis] < m as i32 {
                k[axis] += 1;
                for v in &mut k[axis + 1..] {
                    *v = 0;
                }
                break;
            }
        }
    }
}

/// One coordinate of a grid point as an exact reduced dyadic rational
/// `num / 2^log_den` (numerator odd unless the value is 0 or 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DyadicCoord {
    pub num: u64,
    pub log_den: u32,
}

impl DyadicCoord {
    pub fn reduced(mut num: u64, mut log_den: u32) -> Self {
        while log_den > 0 && num % 2 == 0 {
            num /= 2;
            log_den -= 1;
        }
        DyadicCoord { num, log_den }
    }

    pub fn as_f64(self) -> f64 {
        // Exact for the level range reachable here (log_den far below 1024).
        self.num as f64 / (self.log_den as f64).exp2()
    }
}

impl Ord for DyadicCoord {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let lhs = (self.num as u128) << other.log_den;
        let rhs = (other.num as u128) << self.log_den;
        lhs.cmp(&rhs)
    }
}

impl PartialOrd for DyadicCoord {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for DyadicCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, 1u64 << self.log_den)
    }
}

/// A deduplicated set of dyadic grid points in `[0,1]^d`, sorted by coordinates.
#[derive(Debug, Clone)]
pub struct SparseGrid {
    dim: usize,
    points: Vec<Vec<DyadicCoord>>,
}

impl SparseGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<DyadicCoord>] {
        &self.points
    }

    pub fn point_f64(&self, i: usize) -> Vec<f64> {
        self.points[i].iter().map(|c| c.as_f64()).collect()
    }
}

/// The sampling grid of an index set: for each `k` in `S` the full tensor grid
/// of per-axis dyadic points `j / 2^{k_i + 1}`, `j = 0..2^{k_i+1}`, deduplicated
/// across indices by exact rational comparison.
///
/// These are exactly the points the hierarchical-surplus stencils of level `k`
/// read, so the recovery operator built on `S` interpolates boundary-vanishing
/// functions on this grid.
pub fn grid_points(set: &IndexSet) -> Result<SparseGrid> {
    if set.is_empty() {
        return Err(Error::invalid("index set is empty"));
    }
    if set.entries.iter().any(|k| !k.is_nonnegative()) {
        return Err(Error::invalid("grid points require levels >= 0"));
    }
    let d = set.dim;
    let mut seen: BTreeSet<Vec<DyadicCoord>> = BTreeSet::new();
    for k in &set.entries {
        let axis_points: Vec<Vec<DyadicCoord>> = k
            .levels()
            .iter()
            .map(|&ki| {
                let log_den = (ki + 1) as u32;
                (0..=(1u64 << log_den))
                    .map(|j| DyadicCoord::reduced(j, log_den))
                    .collect()
            })
            .collect();
        let mut odo = vec![0usize; d];
        'outer: loop {
            let point: Vec<DyadicCoord> = (0..d).map(|i| axis_points[i][odo[i]]).collect();
            seen.insert(point);
            let mut axis = d;
            loop {
                if axis == 0 {
                    break 'outer;
                }
                axis -= 1;
                if odo[axis] + 1 < axis_points[axis].len() {
                    odo[axis] += 1;
                    for v in &mut odo[axis + 1..] {
                        *v = 0;
                    }
                    break;
                }
            }
        }
    }
    Ok(SparseGrid {
        dim: d,
        points: seen.into_iter().collect(),
    })
}

/// Number of `(k, s)` basis terms indexed by the set: `sum_k 2^{|k|_1}`.
pub fn term_count(set: &IndexSet) -> Result<u128> {
    let mut total: u128 = 0;
    for k in &set.entries {
        if !k.is_nonnegative() {
            return Err(Error::invalid("term count requires levels >= 0"));
        }
        let l1 = k.l1_norm();
        if l1 >= 127 {
            return Err(Error::Overflow("2^|k|_1".into()));
        }
        total = total
            .checked_add(1u128 << l1)
            .ok_or_else(|| Error::Overflow("sum of 2^|k|_1".into()))?;
    }
    Ok(total)
}

/// Closed-form cardinality bound `(beta/(beta-1)) d (1 - 2^{-1/(beta-1)})^{-d} 2^m`
/// on the number of basis terms of the notched set.
pub fn term_count_bound(d: usize, beta: f64, m: u32) -> f64 {
    let q = 1.0 - (-1.0 / (beta - 1.0)).exp2();
    beta / (beta - 1.0) * d as f64 * q.powi(-(d as i32)) * (m as f64).exp2()
}

/// Exact value and closed-form bound of the level-sum
/// `sum_{|k|_1 = ell} |2^k|_p <= d 2^{ell + d - 1}`.
pub fn exp_sum_check(d: usize, ell: u32, p: Lp) -> (f64, f64) {
    let mut exact = 0.0;
    let mut visit = |k: &[i32]| {
        let l1: i64 = k.iter().map(|&v| v as i64).sum();
        if l1 != ell as i64 {
            return;
        }
        let norm = match p {
            Lp::Inf => (k.iter().copied().max().unwrap() as f64).exp2(),
            Lp::P(p) => {
                let sum: f64 = k.iter().map(|&ki| (p * ki as f64).exp2()).sum();
                sum.powf(1.0 / p)
            }
        };
        exact += norm;
    };
    for_each_l1_bounded(d, ell, &mut visit);
    let bound = d as f64 * ((ell + d as u32 - 1) as f64).exp2();
    (exact, bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ml(v: &[i32]) -> MultiLevel {
        MultiLevel::new(v.to_vec()).unwrap()
    }

    #[test]
    fn notched_1d_is_all_levels() {
        let set = enumerate_notched(1, 2.0, 5).unwrap();
        let want: Vec<MultiLevel> = (0..=5).map(|k| ml(&[k])).collect();
        assert_eq!(set.entries(), &want[..]);
    }

    #[test]
    fn notched_2d_beta2_m3_matches_brute_force() {
        // Oracle: brute-force the set definition over all |k|_1 <= 3.
        let mut expected = Vec::new();
        for a in 0..=3i32 {
            for b in 0..=3i32 {
                let l1 = a + b;
                if l1 > 3 {
                    continue;
                }
                let j = 3 - l1;
                if a.max(b) as i64 >= 3 - floor_beta_j(2.0, j as u32) {
                    expected.push(ml(&[a, b]));
                }
            }
        }
        expected.sort();
        let set = enumerate_notched(2, 2.0, 3).unwrap();
        assert_eq!(set.entries(), &expected[..]);
        assert_eq!(set.len(), 8);
        // Delta^2(3) minus the two "balanced" indices.
        assert!(!set.contains(&ml(&[2, 1])));
        assert!(!set.contains(&ml(&[1, 2])));
    }

    #[test]
    fn notched_trivial_level_zero() {
        let set = enumerate_notched(3, 1.5, 0).unwrap();
        assert_eq!(set.entries(), &[ml(&[0, 0, 0])]);
    }

    #[test]
    fn notched_rejects_bad_parameters() {
        assert!(enumerate_notched(0, 2.0, 1).is_err());
        assert!(enumerate_notched(2, 1.0, 1).is_err());
        assert!(enumerate_notched(2, 0.5, 1).is_err());
    }

    #[test]
    fn smolyak_counts_binomial() {
        let set = enumerate_smolyak(2, 3).unwrap();
        assert_eq!(set.len(), 10); // C(5,2)
        let set = enumerate_smolyak(1, 0).unwrap();
        assert_eq!(set.entries(), &[ml(&[0])]);
    }

    #[test]
    fn full_set_counts_power() {
        let set = enumerate_full(2, 2).unwrap();
        assert_eq!(set.len(), 9);
        assert!(set.contains(&ml(&[2, 2])));
    }

    #[test]
    fn floor_beta_j_exact_at_boundaries() {
        assert_eq!(floor_beta_j(2.0, 3), 6);
        assert_eq!(floor_beta_j(1.5, 3), 4);
        assert_eq!(floor_beta_j(1.5, 2), 3);
        assert_eq!(floor_beta_j(3.0, 7), 21);
        // 0.1 in binary is slightly above 0.1 exactly? It is 0.1000000000000000055...,
        // so floor(10 * 1.1) on the exact rational is 11.
        assert_eq!(floor_beta_j(1.1, 10), 11);
    }

    #[test]
    fn grid_points_1d_level1() {
        let set = enumerate_notched(1, 2.0, 1).unwrap();
        let grid = grid_points(&set).unwrap();
        let xs: Vec<f64> = (0..grid.len()).map(|i| grid.point_f64(i)[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn grid_points_dedupe_is_exact() {
        // Levels (1,0) and (0,1) share the common refinement points.
        let set = enumerate_smolyak(2, 1).unwrap();
        let grid = grid_points(&set).unwrap();
        // Union of {0,1/4,..,1} x {0,1/2,1} and its transpose, deduped:
        // 5*3 + 3*5 - 3*3 = 21 points.
        assert_eq!(grid.len(), 21);
        for i in 0..grid.len() {
            for c in grid.point_f64(i) {
                assert!((0.0..=1.0).contains(&c));
            }
        }
    }

    #[test]
    fn grid_cardinality_bound_holds() {
        // Paper bound with the extra 2^d factor, on desk-scale cells.
        for (d, beta, m) in [
            (1usize, 2.0, 6u32),
            (2, 1.5, 6),
            (2, 3.0, 6),
            (3, 2.0, 5),
            (4, 1.5, 4),
            (6, 1.5, 2),
        ] {
            let set = enumerate_notched(d, beta, m).unwrap();
            let grid = grid_points(&set).unwrap();
            let bound = term_count_bound(d, beta, m) * (d as f64).exp2();
            assert!(
                (grid.len() as f64) <= bound,
                "grid bound failed at d={d} beta={beta} m={m}: {} > {bound}",
                grid.len()
            );
        }
    }

    #[test]
    fn term_count_examples() {
        let set = enumerate_notched(2, 2.0, 3).unwrap();
        assert_eq!(term_count(&set).unwrap(), 33);
        let set = enumerate_notched(3, 1.5, 0).unwrap();
        assert_eq!(term_count(&set).unwrap(), 1);
        // Closed-form bound from the cardinality lemma.
        assert!(33.0 <= term_count_bound(2, 2.0, 3));
        assert_eq!(term_count_bound(2, 2.0, 3), 2.0 * 2.0 * 4.0 * 8.0);
    }

    #[test]
    fn term_count_signals_overflow() {
        let set = IndexSet {
            kind: IndexSetKind::Smolyak { m: 150 },
            dim: 3,
            entries: vec![ml(&[50, 50, 50])],
        };
        assert!(matches!(term_count(&set), Err(Error::Overflow(_))));
    }

    #[test]
    fn exp_sum_examples() {
        let (exact, bound) = exp_sum_check(1, 3, Lp::P(1.0));
        assert_eq!(exact, 8.0);
        assert_eq!(bound, 8.0);
        // Enumeration oracle over {(2,0),(1,1),(0,2)}: (4+1)+(2+2)+(1+4) = 14.
        let (exact, bound) = exp_sum_check(2, 2, Lp::P(1.0));
        assert_eq!(exact, 14.0);
        assert_eq!(bound, 16.0);
        let (exact, bound) = exp_sum_check(2, 2, Lp::Inf);
        assert_eq!(exact, 10.0);
        assert_eq!(bound, 16.0);
    }

    #[test]
    fn notched_subset_and_monotone_in_beta() {
        for d in 1..=4usize {
            for m in 0..=6u32 {
                let smolyak = enumerate_smolyak(d, m).unwrap();
                let mut prev: Option<IndexSet> = None;
                for beta in [1.5, 2.0, 3.0] {
                    let notched = enumerate_notched(d, beta, m).unwrap();
                    for k in notched.entries() {
                        assert!(smolyak.contains(k));
                    }
                    if let Some(p) = &prev {
                        for k in p.entries() {
                            assert!(notched.contains(k), "monotonicity in beta violated");
                        }
                    }
                    prev = Some(notched);
                }
            }
        }
    }

    #[test]
    fn permutation_symmetry() {
        let set = enumerate_notched(3, 1.5, 5).unwrap();
        for k in set.entries() {
            let mut rev = k.levels().to_vec();
            rev.reverse();
            assert!(set.contains(&MultiLevel::new(rev).unwrap()));
        }
    }

    #[test]
    fn cardinality_lemma_exhaustive() {
        for d in 1..=6usize {
            for beta in [1.5, 2.0, 3.0] {
                for m in 0..=10u32 {
                    let set = enumerate_notched(d, beta, m).unwrap();
                    let count = term_count(&set).unwrap() as f64;
                    let bound = term_count_bound(d, beta, m);
                    assert!(
                        count <= bound,
                        "cardinality bound failed at d={d} beta={beta} m={m}: {count} > {bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn exp_sum_lemma_exhaustive() {
        for d in 1..=6usize {
            for ell in 0..=12u32 {
                for p in [Lp::P(1.0), Lp::P(2.0), Lp::Inf] {
                    let (exact, bound) = exp_sum_check(d, ell, p);
                    assert!(
                        exact <= bound * (1.0 + 1e-12),
                        "exp-sum bound failed at d={d} ell={ell} p={p:?}"
                    );
                }
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn notched_is_subset_of_smolyak(
                d in 1usize..=5,
                m in 0u32..=8,
                beta in 1.01f64..4.0,
            ) {
                let notched = enumerate_notched(d, beta, m).unwrap();
                let smolyak = enumerate_smolyak(d, m).unwrap();
                for k in notched.entries() {
                    prop_assert!(smolyak.contains(k));
                }
            }

            #[test]
            fn notched_grows_with_beta(
                d in 1usize..=4,
                m in 0u32..=8,
                beta in 1.01f64..3.0,
                bump in 0.01f64..2.0,
            ) {
                let small = enumerate_notched(d, beta, m).unwrap();
                let large = enumerate_notched(d, beta + bump, m).unwrap();
                for k in small.entries() {
                    prop_assert!(large.contains(k));
                }
            }

            #[test]
            fn notched_is_permutation_symmetric(
                d in 2usize..=4,
                m in 0u32..=7,
                beta in 1.01f64..3.0,
            ) {
                let set = enumerate_notched(d, beta, m).unwrap();
                for k in set.entries() {
                    let mut rotated = k.levels().to_vec();
                    rotated.rotate_left(1);
                    prop_assert!(set.contains(&MultiLevel::new(rotated).unwrap()));
                }
            }

            #[test]
            fn dyadic_order_matches_value_order(
                a_seed in 0u64..=4096,
                ka in 0u32..=12,
                b_seed in 0u64..=4096,
                kb in 0u32..=12,
            ) {
                let a = a_seed % ((1 << ka) + 1);
                let b = b_seed % ((1 << kb) + 1);
                let x = DyadicCoord::reduced(a, ka);
                let y = DyadicCoord::reduced(b, kb);
                prop_assert_eq!(
                    x.cmp(&y),
                    x.as_f64().partial_cmp(&y.as_f64()).unwrap()
                );
                // Reduction is canonical: equal values compare equal.
                prop_assert_eq!(x == y, x.as_f64() == y.as_f64());
            }
        }
    }
}
