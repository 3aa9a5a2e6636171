//! Univariate and tensor-product hat (Faber) basis functions, the
//! hierarchical-surplus coefficient functionals, and finite expansions.

use crate::error::{Error, Result};
use crate::function::{Differentiable, Function};
use crate::index::{MultiLevel, MultiPosition};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

/// Maximum per-axis level for which the dyadic stencil points stay exact in f64.
const MAX_LEVEL: i32 = 50;

/// The hat function `M_2(x) = max(0, 1 - |x - 1|)` with knots at 0, 1, 2.
pub fn m2(x: f64) -> f64 {
    (1.0 - (x - 1.0).abs()).max(0.0)
}

fn check_unit_interval(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [0,1]")));
    }
    Ok(())
}

fn check_level_pos(k: i32, s: u64) -> Result<()> {
    if !(-1..=MAX_LEVEL).contains(&k) {
        return Err(Error::invalid(format!("level {k} out of range")));
    }
    let limit = if k >= 0 { 1u64 << k } else { 2 };
    if s >= limit {
        return Err(Error::invalid(format!(
            "position {s} out of range for level {k}"
        )));
    }
    Ok(())
}

/// Univariate basis value `phi_{k,s}(x) = M_2(2^{k+1} x - 2s)` for `k >= 0`,
/// `M_2(x - s + 1)` for `k = -1`.
pub fn hat_eval(k: i32, s: u64, x: f64) -> Result<f64> {
    check_level_pos(k, s)?;
    check_unit_interval(x)?;
    Ok(hat_value_unchecked(k, s, x))
}

#[inline]
pub(crate) fn hat_value_unchecked(k: i32, s: u64, x: f64) -> f64 {
    if k >= 0 {
        m2(((k + 1) as f64).exp2() * x - 2.0 * s as f64)
    } else {
        m2(x - s as f64 + 1.0)
    }
}

/// Univariate basis derivative with the right-derivative convention at kinks:
/// `+2^{k+1}` on the rising piece (left support edge included), `-2^{k+1}` on
/// the falling piece (peak included), 0 from the right support edge outward.
pub fn hat_deriv(k: i32, s: u64, x: f64) -> Result<f64> {
    check_level_pos(k, s)?;
    check_unit_interval(x)?;
    Ok(hat_deriv_unchecked(k, s, x))
}

#[inline]
pub(crate) fn hat_deriv_unchecked(k: i32, s: u64, x: f64) -> f64 {
    if k >= 0 {
        let scale = ((k + 1) as f64).exp2();
        let t = scale * x - 2.0 * s as f64;
        if !(0.0..2.0).contains(&t) {
            0.0
        } else if t < 1.0 {
            scale
        } else {
            -scale
        }
    } else if s == 0 {
        -1.0
    } else {
        1.0
    }
}

/// A `(level, position)` pair identifying one tensor-product hat function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FaberIndex {
    level: MultiLevel,
    position: MultiPosition,
}

impl FaberIndex {
    pub fn new(level: MultiLevel, position: MultiPosition) -> Result<Self> {
        // MultiPosition::new validates ranges; re-validate pairing here since the
        // position may have been built against a different level vector.
        let position = MultiPosition::new(position.positions().to_vec(), &level)?;
        if level.levels().iter().any(|&k| k > MAX_LEVEL) {
            return Err(Error::invalid("level exceeds the exact-arithmetic range"));
        }
        Ok(FaberIndex { level, position })
    }

    pub fn from_parts(levels: Vec<i32>, positions: Vec<u64>) -> Result<Self> {
        let level = MultiLevel::new(levels)?;
        let position = MultiPosition::new(positions, &level)?;
        FaberIndex::new(level, position)
    }

    pub fn dim(&self) -> usize {
        self.level.dim()
    }

    pub fn level(&self) -> &MultiLevel {
        &self.level
    }

    pub fn position(&self) -> &MultiPosition {
        &self.position
    }

    /// The support midpoint, where the tensor hat attains its peak value 1.
    pub fn peak(&self) -> Vec<f64> {
        self.level
            .levels()
            .iter()
            .zip(self.position.positions())
            .map(|(&k, &s)| {
                if k >= 0 {
                    (2.0 * s as f64 + 1.0) / ((k + 1) as f64).exp2()
                } else {
                    s as f64
                }
            })
            .collect()
    }
}

/// Tensor-product hat value `prod_i phi_{k_i, s_i}(x_i)`.
pub fn tensor_hat_eval(idx: &FaberIndex, x: &[f64]) -> Result<f64> {
    if x.len() != idx.dim() {
        return Err(Error::DimensionMismatch {
            expected: idx.dim(),
            got: x.len(),
        });
    }
    for &xi in x {
        check_unit_interval(xi)?;
    }
    let mut prod = 1.0;
    for ((&k, &s), &xi) in idx
        .level
        .levels()
        .iter()
        .zip(idx.position.positions())
        .zip(x)
    {
        prod *= hat_value_unchecked(k, s, xi);
    }
    Ok(prod)
}

/// Gradient of the tensor-product hat; entry `j` is
/// `phi'_{k_j,s_j}(x_j) * prod_{i != j} phi_{k_i,s_i}(x_i)`.
pub fn tensor_hat_grad(idx: &FaberIndex, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != idx.dim() {
        return Err(Error::DimensionMismatch {
            expected: idx.dim(),
            got: x.len(),
        });
    }
    let d = idx.dim();
    let mut values = vec![0.0; d];
    let mut derivs = vec![0.0; d];
    for (i, ((&k, &s), &xi)) in idx
        .level
        .levels()
        .iter()
        .zip(idx.position.positions())
        .zip(x)
        .enumerate()
    {
        check_unit_interval(xi)?;
        values[i] = hat_value_unchecked(k, s, xi);
        derivs[i] = hat_deriv_unchecked(k, s, xi);
    }
    let mut out = vec![0.0; d];
    for j in 0..d {
        let mut prod = derivs[j];
        for i in 0..d {
            if i != j {
                prod *= values[i];
            }
        }
        out[j] = prod;
    }
    Ok(out)
}

/// The hierarchical-surplus functional: per axis a centered second difference
/// `-1/2 (f(. ) - 2 f(. + h) + f(. + 2h))` with `h = 2^{-k-1}` anchored at
/// `2^{-k} s` for `k >= 0`, and plain point evaluation at `s` for `k = -1`.
///
/// All stencil coordinates are exact dyadic rationals, so coarse-level
/// coefficients carry no cancellation noise beyond the oracle's own rounding.
pub fn lambda(f: &dyn Function, idx: &FaberIndex) -> Result<f64> {
    let d = idx.dim();
    if f.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: f.dim(),
        });
    }
    let levels = idx.level.levels();
    let positions = idx.position.positions();
    // Per-axis stencil: offsets t in {0,1,2} with weights (-1/2, 1, -1/2) for
    // k >= 0; the single point s with weight 1 for k = -1.
    let stencil_len: Vec<usize> = levels.iter().map(|&k| if k >= 0 { 3 } else { 1 }).collect();
    let mut t = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        for i in 0..d {
            let (k, s) = (levels[i], positions[i]);
            if k >= 0 {
                x[i] = (2 * s + t[i] as u64) as f64 / ((k + 1) as f64).exp2();
                weight *= if t[i] == 1 { 1.0 } else { -0.5 };
            } else {
                x[i] = s as f64;
            }
        }
        let v = f.value(&x);
        if !v.is_finite() {
            return Err(Error::Oracle(format!("non-finite value at {x:?}")));
        }
        total += weight * v;
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(total);
            }
            axis -= 1;
            if t[axis] + 1 < stencil_len[axis] {
                t[axis] += 1;
                for v in &mut t[axis + 1..] {
                    *v = 0;
                }
                break;
            }
        }
    }
}

/// Per-level coefficient storage.
#[derive(Debug, Clone)]
enum Store {
    /// Every position of the level present, in mixed-radix (lexicographic) order.
    Dense(Vec<f64>),
    Sparse(BTreeMap<Vec<u64>, f64>),
}

#[derive(Debug, Clone)]
struct LevelBlock {
    level: MultiLevel,
    /// Per-axis position count: `2^{k_i}` for `k_i >= 0`, 2 for `k_i = -1`.
    radix: Vec<u64>,
    has_boundary_level: bool,
    store: Store,
}

impl LevelBlock {
    fn coefficient(&self, s: &[u64]) -> Option<f64> {
        match &self.store {
            Store::Dense(v) => {
                let mut idx = 0usize;
                for (i, &si) in s.iter().enumerate() {
                    idx = idx * self.radix[i] as usize + si as usize;
                }
                Some(v[idx])
            }
            Store::Sparse(map) => map.get(s).copied(),
        }
    }
}

/// A finite hat-function expansion `sum lambda_{k,s} phi_{k,s}`.
///
/// Immutable after construction; evaluation walks one active position per
/// level (two per boundary-level axis), so the cost per point is proportional
/// to the number of levels rather than the number of terms.
#[derive(Debug, Clone)]
pub struct FaberExpansion {
    dim: usize,
    blocks: Vec<LevelBlock>,
    num_terms: usize,
}

impl FaberExpansion {
    pub fn empty(dim: usize) -> Self {
        FaberExpansion {
            dim,
            blocks: Vec::new(),
            num_terms: 0,
        }
    }

    /// Builds an expansion from `(index, coefficient)` terms.
    ///
    /// Duplicate indices and non-finite coefficients are rejected. Zero
    /// coefficients are kept: truncated recovery operators store their full
    /// term set so decay tests see raw values.
    pub fn from_terms(
        dim: usize,
        terms: impl IntoIterator<Item = (FaberIndex, f64)>,
    ) -> Result<Self> {
        let mut by_level: BTreeMap<MultiLevel, BTreeMap<Vec<u64>, f64>> = BTreeMap::new();
        let mut num_terms = 0usize;
        for (idx, c) in terms {
            if idx.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: idx.dim(),
                });
            }
            if !c.is_finite() {
                return Err(Error::invalid("non-finite coefficient"));
            }
            let level = idx.level.clone();
            let old = by_level
                .entry(level)
                .or_default()
                .insert(idx.position.positions().to_vec(), c);
            if old.is_some() {
                return Err(Error::invalid(format!("duplicate index {idx:?}")));
            }
            num_terms += 1;
        }
        let mut blocks = Vec::with_capacity(by_level.len());
        for (level, coeffs) in by_level {
            let radix: Vec<u64> = level
                .levels()
                .iter()
                .map(|&k| if k >= 0 { 1u64 << k } else { 2 })
                .collect();
            let full: u128 = radix.iter().map(|&r| r as u128).product();
            let has_boundary_level = level.levels().iter().any(|&k| k == -1);
            let store = if coeffs.len() as u128 == full {
                let mut dense = Vec::with_capacity(coeffs.len());
                // BTreeMap iterates positions lexicographically, which matches
                // mixed-radix order.
                dense.extend(coeffs.values().copied());
                Store::Dense(dense)
            } else {
                Store::Sparse(coeffs)
            };
            blocks.push(LevelBlock {
                level,
                radix,
                has_boundary_level,
                store,
            });
        }
        Ok(FaberExpansion {
            dim,
            blocks,
            num_terms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    /// Copy without the terms of magnitude below `tol`. The default pipeline
    /// never prunes (decay tests need the raw values); this backs the
    /// opt-in CLI flag.
    pub fn pruned(&self, tol: f64) -> Self {
        let terms: Vec<(FaberIndex, f64)> =
            self.terms().filter(|(_, c)| c.abs() >= tol).collect();
        FaberExpansion::from_terms(self.dim, terms).expect("pruning keeps terms valid")
    }

    pub fn num_levels(&self) -> usize {
        self.blocks.len()
    }

    /// Terms in canonical order: levels lexicographic, positions lexicographic.
    pub fn terms(&self) -> impl Iterator<Item = (FaberIndex, f64)> + '_ {
        self.blocks.iter().flat_map(|block| {
            let level = block.level.clone();
            let positions: Vec<(Vec<u64>, f64)> = match &block.store {
                Store::Dense(v) => {
                    let mut out = Vec::with_capacity(v.len());
                    let d = block.radix.len();
                    let mut s = vec![0u64; d];
                    for &c in v {
                        out.push((s.clone(), c));
                        let mut axis = d;
                        loop {
                            if axis == 0 {
                                break;
                            }
                            axis -= 1;
                            if s[axis] + 1 < block.radix[axis] {
                                s[axis] += 1;
                                for v in &mut s[axis + 1..] {
                                    *v = 0;
                                }
                                break;
                            }
                        }
                    }
                    out
                }
                Store::Sparse(map) => map.iter().map(|(s, &c)| (s.clone(), c)).collect(),
            };
            positions.into_iter().map(move |(s, c)| {
                let idx = FaberIndex::from_parts(level.levels().to_vec(), s)
                    .expect("stored index is valid");
                (idx, c)
            })
        })
    }

    pub fn coefficient(&self, idx: &FaberIndex) -> Option<f64> {
        let block = self
            .blocks
            .iter()
            .find(|b| b.level.levels() == idx.level.levels())?;
        block.coefficient(idx.position.positions())
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut s_buf = vec![0u64; self.dim];
        for block in &self.blocks {
            total += self.block_value(block, x, &mut s_buf);
        }
        total
    }

    /// Contribution of one level to the value at `x`.
    fn block_value(&self, block: &LevelBlock, x: &[f64], s_buf: &mut [u64]) -> f64 {
        let levels = block.level.levels();
        if !block.has_boundary_level {
            let mut prod = 1.0;
            for i in 0..self.dim {
                let k = levels[i];
                let s = active_position(k, x[i]);
                let v = hat_value_unchecked(k, s, x[i]);
                if v == 0.0 {
                    return 0.0;
                }
                prod *= v;
                s_buf[i] = s;
            }
            match block.coefficient(s_buf) {
                Some(c) => c * prod,
                None => 0.0,
            }
        } else {
            // Boundary-level axes have both positions active at any x; sum over
            // the combinations.
            let mut total = 0.0;
            let neg_axes: Vec<usize> = (0..self.dim).filter(|&i| levels[i] == -1).collect();
            let combos = 1u32 << neg_axes.len();
            for combo in 0..combos {
                let mut prod = 1.0;
                let mut neg_i = 0;
                for i in 0..self.dim {
                    let k = levels[i];
                    let s = if k == -1 {
                        let s = (combo >> neg_i) & 1;
                        neg_i += 1;
                        s as u64
                    } else {
                        active_position(k, x[i])
                    };
                    prod *= hat_value_unchecked(k, s, x[i]);
                    s_buf[i] = s;
                }
                if prod != 0.0 {
                    if let Some(c) = block.coefficient(s_buf) {
                        total += c * prod;
                    }
                }
            }
            total
        }
    }

    fn grad_unchecked(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let d = self.dim;
        let mut s_buf = vec![0u64; d];
        let mut vals = vec![0.0; d];
        let mut ders = vec![0.0; d];
        let mut suffix = vec![0.0; d + 1];
        for block in &self.blocks {
            let levels = block.level.levels();
            let neg_axes: Vec<usize> = (0..d).filter(|&i| levels[i] == -1).collect();
            let combos = 1u32 << neg_axes.len();
            for combo in 0..combos {
                let mut neg_i = 0;
                for i in 0..d {
                    let k = levels[i];
                    let s = if k == -1 {
                        let s = (combo >> neg_i) & 1;
                        neg_i += 1;
                        s as u64
                    } else {
                        active_position(k, x[i])
                    };
                    s_buf[i] = s;
                    vals[i] = hat_value_unchecked(k, s, x[i]);
                    ders[i] = hat_deriv_unchecked(k, s, x[i]);
                }
                let c = match block.coefficient(&s_buf) {
                    Some(c) if c != 0.0 => c,
                    _ => continue,
                };
                // prefix/suffix products of the values to form prod_{i != j}.
                suffix[d] = 1.0;
                for i in (0..d).rev() {
                    suffix[i] = suffix[i + 1] * vals[i];
                }
                let mut prefix = 1.0;
                for j in 0..d {
                    out[j] += c * prefix * ders[j] * suffix[j + 1];
                    prefix *= vals[j];
                }
            }
        }
    }
}

/// The unique position whose support contains `x` at level `k >= 0`.
#[inline]
fn active_position(k: i32, x: f64) -> u64 {
    let scaled = (k as f64).exp2() * x;
    let max = (1u64 << k) - 1;
    (scaled.floor() as u64).min(max)
}

impl Function for FaberExpansion {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        self.eval_unchecked(x)
    }
}

impl Differentiable for FaberExpansion {
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        self.grad_unchecked(x, out);
    }
}

/// Prints a float with 17 significant digits, enough to round-trip f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x:.16e}").unwrap();
    s
}

/// Writes the expansion as text lines `k_1 .. k_d | s_1 .. s_d | coefficient`.
pub fn write_expansion(e: &FaberExpansion, mut w: impl Write) -> Result<()> {
    for (idx, c) in e.terms() {
        writeln!(w, "{} | {} | {}", idx.level(), idx.position(), fmt_f64(c))?;
    }
    Ok(())
}

/// Reads an expansion written by [`write_expansion`], inferring the dimension
/// from the first line.
pub fn read_expansion(r: impl BufRead) -> Result<FaberExpansion> {
    let mut terms = Vec::new();
    let mut dim = None;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse = |msg: &str| Error::Parse {
            line: lineno + 1,
            msg: msg.to_string(),
        };
        let mut parts = line.split('|');
        let ks = parts.next().ok_or_else(|| parse("missing level field"))?;
        let ss = parts.next().ok_or_else(|| parse("missing position field"))?;
        let cs = parts.next().ok_or_else(|| parse("missing coefficient"))?;
        if parts.next().is_some() {
            return Err(parse("too many fields"));
        }
        let levels: Vec<i32> = ks
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse("bad level")))
            .collect::<Result<_>>()?;
        let positions: Vec<u64> = ss
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse("bad position")))
            .collect::<Result<_>>()?;
        let c: f64 = cs.trim().parse().map_err(|_| parse("bad coefficient"))?;
        let d = *dim.get_or_insert(levels.len());
        if levels.len() != d {
            return Err(parse("inconsistent dimension"));
        }
        terms.push((FaberIndex::from_parts(levels, positions)?, c));
    }
    let dim = dim.ok_or_else(|| Error::invalid("empty expansion file"))?;
    FaberExpansion::from_terms(dim, terms)
}
