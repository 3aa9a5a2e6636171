//! The sparse-grid sampling operator and its closed-form error budget.
//!
//! `build_r` assembles the truncated hierarchical expansion over the notched
//! index set; the result interpolates the target on the associated sparse grid
//! and its homogeneous-Sobolev error obeys the closed form in
//! [`recovery_error_bound`].

use crate::error::{Error, Result};
use crate::faber::{FaberExpansion, FaberIndex};
use crate::function::Function;
use crate::index::{enumerate_notched, DyadicCoord, MultiLevel};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

/// Integrability exponent `p` in `[1, inf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lp {
    P(f64),
    Inf,
}

impl Lp {
    pub fn validate(self) -> Result<Self> {
        match self {
            Lp::P(p) if p >= 1.0 && p.is_finite() => Ok(self),
            Lp::Inf => Ok(self),
            Lp::P(p) => Err(Error::invalid(format!("p must be in [1, inf], got {p}"))),
        }
    }

    /// `(p+1)^{t/p}`, with the limit value 1 at `p = inf`.
    pub fn p_plus_one_pow(self, t: f64) -> f64 {
        match self {
            Lp::P(p) => (p + 1.0).powf(t / p),
            Lp::Inf => 1.0,
        }
    }
}

impl fmt::Display for Lp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lp::P(p) => write!(f, "{p}"),
            Lp::Inf => write!(f, "inf"),
        }
    }
}

impl FromStr for Lp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "Inf" | "INF" | "oo" => Ok(Lp::Inf),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::invalid(format!("cannot parse p from '{other}'")))?;
                Lp::P(p).validate()
            }
        }
    }
}

/// Approximation parameters: dimension, mixed smoothness `alpha`, notch
/// exponent `beta`, error norm exponent `p`, and (for compilation) the target
/// accuracy `eps`.
#[derive(Debug, Clone, Copy)]
pub struct ApproxConfig {
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub p: Lp,
    pub eps: Option<f64>,
}

impl ApproxConfig {
    pub fn new(d: usize, alpha: f64, beta: f64, p: Lp, eps: Option<f64>) -> Result<Self> {
        let cfg = ApproxConfig {
            d,
            alpha,
            beta,
            p,
            eps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            return Err(Error::invalid(format!(
                "alpha must be in (1, 2], got {}",
                self.alpha
            )));
        }
        // The error budget degenerates at beta = alpha (zero denominator), so
        // strict inequality is required throughout.
        if !(self.beta > self.alpha) || !self.beta.is_finite() {
            return Err(Error::invalid(format!(
                "beta must be > alpha = {}, got {}",
                self.alpha, self.beta
            )));
        }
        self.p.validate()?;
        if let Some(eps) = self.eps {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Error::invalid(format!("eps must be > 0, got {eps}")));
            }
        }
        Ok(())
    }

    /// The constant `K_1 = 2 (p+1)^{1/p} max{ 2beta/(beta-1), 1/(2^{alpha-1}-1) }`.
    pub fn k1(&self) -> f64 {
        let a = 2.0 * self.beta / (self.beta - 1.0);
        let b = 1.0 / ((self.alpha - 1.0).exp2() - 1.0);
        2.0 * self.p_plus_one_pow(1.0) * a.max(b)
    }

    pub(crate) fn p_plus_one_pow(&self, t: f64) -> f64 {
        self.p.p_plus_one_pow(t)
    }

    /// `(1 - 2^{-(beta-alpha)/(beta-1)})`, the per-axis notch loss factor.
    pub fn notch_factor(&self) -> f64 {
        1.0 - (-(self.beta - self.alpha) / (self.beta - 1.0)).exp2()
    }
}

/// Closed-form error budget of the sampling operator at level `m`:
/// `K_1 d^2 2^{-m(alpha-1)} / ((p+1)^{d/p} 2^{(alpha+1)d} (1 - 2^{-(beta-alpha)/(beta-1)})^d)`.
pub fn recovery_error_bound(cfg: &ApproxConfig, m: u32) -> f64 {
    let d = cfg.d as f64;
    let numerator = cfg.k1() * d * d * (-(m as f64) * (cfg.alpha - 1.0)).exp2();
    let denominator = cfg.p_plus_one_pow(d)
        * ((cfg.alpha + 1.0) * d).exp2()
        * cfg.notch_factor().powi(cfg.d as i32);
    numerator / denominator
}

/// Memoizes oracle values at exact dyadic points; neighboring surplus stencils
/// share most of their sample points.
struct MemoOracle<'a> {
    f: &'a dyn Function,
    cache: HashMap<Vec<DyadicCoord>, f64>,
    evals: usize,
}

impl<'a> MemoOracle<'a> {
    fn new(f: &'a dyn Function) -> Self {
        MemoOracle {
            f,
            cache: HashMap::new(),
            evals: 0,
        }
    }

    fn value_at(&mut self, key: Vec<DyadicCoord>) -> Result<f64> {
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let x: Vec<f64> = key.iter().map(|c| c.as_f64()).collect();
        let v = self.f.value(&x);
        if !v.is_finite() {
            return Err(Error::Oracle(format!("non-finite value at {x:?}")));
        }
        self.evals += 1;
        self.cache.insert(key, v);
        Ok(v)
    }
}

/// Surplus coefficient through the memo cache; stencil coordinates are the
/// exact dyadic rationals `(2s + t) / 2^{k+1}`.
fn lambda_memo(memo: &mut MemoOracle, level: &MultiLevel, positions: &[u64]) -> Result<f64> {
    let d = level.dim();
    let levels = level.levels();
    let mut t = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        let mut key = Vec::with_capacity(d);
        for i in 0..d {
            let k = levels[i] as u32;
            key.push(DyadicCoord::reduced(2 * positions[i] + t[i] as u64, k + 1));
            weight *= if t[i] == 1 { 1.0 } else { -0.5 };
        }
        total += weight * memo.value_at(key)?;
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(total);
            }
            axis -= 1;
            if t[axis] < 2 {
                t[axis] += 1;
                for v in &mut t[axis + 1..] {
                    *v = 0;
                }
                break;
            }
        }
    }
}

/// All positions of one level paired with their surplus coefficients.
fn level_terms(
    memo: &mut MemoOracle,
    level: &MultiLevel,
    out: &mut Vec<(FaberIndex, f64)>,
) -> Result<()> {
    let d = level.dim();
    let radix: Vec<u64> = level.levels().iter().map(|&k| 1u64 << k).collect();
    let mut s = vec![0u64; d];
    loop {
        let c = lambda_memo(memo, level, &s)?;
        out.push((FaberIndex::from_parts(level.levels().to_vec(), s.clone())?, c));
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(());
            }
            axis -= 1;
            if s[axis] + 1 < radix[axis] {
                s[axis] += 1;
                for v in &mut s[axis + 1..] {
                    *v = 0;
                }
                break;
            }
        }
    }
}

/// The sampling operator `R_beta(m, f)`: the truncated hierarchical expansion
/// over the notched index set, with one term per `(k, s)` pair (zero
/// coefficients included).
pub fn build_r(f: &dyn Function, cfg: &ApproxConfig, m: u32) -> Result<FaberExpansion> {
    cfg.validate()?;
    if f.dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            got: f.dim(),
        });
    }
    let set = enumerate_notched(cfg.d, cfg.beta, m)?;
    let mut memo = MemoOracle::new(f);
    let mut terms = Vec::new();
    for level in set.entries() {
        level_terms(&mut memo, level, &mut terms)?;
    }
    FaberExpansion::from_terms(cfg.d, terms)
}

/// One layer of the hierarchical series: all `2^{|k|_1}` surpluses at level `k`.
pub fn qk_layer(f: &dyn Function, level: &MultiLevel) -> Result<FaberExpansion> {
    if f.dim() != level.dim() {
        return Err(Error::DimensionMismatch {
            expected: level.dim(),
            got: f.dim(),
        });
    }
    if !level.is_nonnegative() {
        return Err(Error::invalid("qk layers require levels >= 0"));
    }
    let mut memo = MemoOracle::new(f);
    let mut terms = Vec::new();
    level_terms(&mut memo, level, &mut terms)?;
    FaberExpansion::from_terms(level.dim(), terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faber::{lambda, tensor_hat_eval};
    use crate::function::FnOracle;
    use crate::index::grid_points;
    use approx::assert_abs_diff_eq;

    fn poly_tent2() -> FnOracle<impl Fn(&[f64]) -> f64 + Sync> {
        FnOracle::new(2, |x: &[f64]| {
            0.25 * x.iter().map(|&t| t * (1.0 - t)).product::<f64>()
        })
    }

    #[test]
    fn k1_and_bound_closed_forms() {
        let cfg = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), None).unwrap();
        // K1 = 2 sqrt(3) * max{3, 1} = 6 sqrt(3).
        assert_abs_diff_eq!(cfg.k1(), 6.0 * 3.0f64.sqrt(), epsilon = 1e-12);
        // Independent recomputation of each factor of the bound at m = 4.
        let k1 = 6.0 * 3.0f64.sqrt();
        let expect = k1 * 4.0 * (0.0625) / (3.0 * 64.0 * (1.0 - 0.5f64.sqrt()).powi(2));
        assert_abs_diff_eq!(recovery_error_bound(&cfg, 4), expect, epsilon = 1e-12);
        assert!((recovery_error_bound(&cfg, 4) - 0.1577).abs() < 5e-4);
    }

    #[test]
    fn bound_decreases_at_dyadic_rate() {
        let cfg = ApproxConfig::new(3, 1.5, 2.5, Lp::P(1.0), None).unwrap();
        for m in 0..8 {
            let ratio = recovery_error_bound(&cfg, m + 1) / recovery_error_bound(&cfg, m);
            assert_abs_diff_eq!(ratio, (-0.5f64).exp2(), epsilon = 1e-12);
        }
    }

    #[test]
    fn bound_dimension_ratio() {
        let p = Lp::P(2.0);
        let (alpha, beta, m) = (2.0, 3.0, 3);
        let c2 = ApproxConfig::new(2, alpha, beta, p, None).unwrap();
        let c3 = ApproxConfig::new(3, alpha, beta, p, None).unwrap();
        let got = recovery_error_bound(&c3, m) / recovery_error_bound(&c2, m);
        let expect = (9.0 / 4.0)
            / (c2.p_plus_one_pow(1.0) * (alpha + 1.0).exp2() * c2.notch_factor());
        assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(ApproxConfig::new(2, 2.0, 2.0, Lp::P(2.0), None).is_err());
        assert!(ApproxConfig::new(2, 1.0, 3.0, Lp::P(2.0), None).is_err());
        assert!(ApproxConfig::new(2, 2.5, 3.0, Lp::P(2.0), None).is_err());
        assert!(ApproxConfig::new(2, 2.0, 3.0, Lp::P(0.5), None).is_err());
        assert!(ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), Some(-0.1)).is_err());
        assert!(ApproxConfig::new(2, 2.0, 3.0, Lp::Inf, Some(0.1)).is_ok());
    }

    #[test]
    fn build_r_reproduces_its_own_truncation() {
        // f equal to a single coarse hat is reproduced exactly; all finer
        // coefficients vanish.
        let idx = FaberIndex::from_parts(vec![0, 0], vec![0, 0]).unwrap();
        let probe = idx.clone();
        let f = FnOracle::new(2, move |x: &[f64]| tensor_hat_eval(&probe, x).unwrap());
        let cfg = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), None).unwrap();
        let r = build_r(&f, &cfg, 3).unwrap();
        for (i, c) in r.terms() {
            let expect = if i == idx { 1.0 } else { 0.0 };
            assert_eq!(c, expect, "coefficient mismatch at {i:?}");
        }
        for x in [[0.3, 0.9], [0.77, 0.13]] {
            assert_abs_diff_eq!(r.value(&x), f.value(&x), epsilon = 1e-15);
        }
    }

    #[test]
    fn build_r_term_count_and_interpolation() {
        let f = poly_tent2();
        let cfg = ApproxConfig::new(2, 1.5, 2.0, Lp::P(2.0), None).unwrap();
        let r = build_r(&f, &cfg, 3).unwrap();
        assert_eq!(r.num_terms(), 33);

        let set = enumerate_notched(2, 2.0, 3).unwrap();
        let grid = grid_points(&set).unwrap();
        for i in 0..grid.len() {
            let x = grid.point_f64(i);
            let fx = f.value(&x);
            assert!(
                (r.value(&x) - fx).abs() <= 1e-12 * (1.0 + fx.abs()),
                "interpolation residual at {x:?}"
            );
        }
    }

    #[test]
    fn build_r_coefficients_match_lambda() {
        // R is a restriction of the full expansion: each stored coefficient
        // equals the surplus functional at that index, exactly.
        let f = poly_tent2();
        let cfg = ApproxConfig::new(2, 1.5, 2.0, Lp::P(1.0), None).unwrap();
        let r = build_r(&f, &cfg, 2).unwrap();
        for (idx, c) in r.terms() {
            assert_eq!(c, lambda(&f, &idx).unwrap());
        }
    }

    #[test]
    fn qk_layer_term_counts() {
        let f = poly_tent2();
        let level = MultiLevel::new(vec![0, 0]).unwrap();
        assert_eq!(qk_layer(&f, &level).unwrap().num_terms(), 1);
        let level = MultiLevel::new(vec![2, 1]).unwrap();
        assert_eq!(qk_layer(&f, &level).unwrap().num_terms(), 8);
    }

    #[test]
    fn qk_layer_norm_bound_for_unit_ball_members() {
        // Per-layer seminorm bound:
        // |q_k(f)|_{W1p} <= 2^{-alpha|k|_1 + 1} / ((p+1)^{(d-1)/p} 2^{(alpha+1)d}) |2^k|_p.
        use crate::function::Zero;
        use crate::metrics::{w1p_error, QuadratureSpec};
        let zero = Zero(2);
        for alpha in [1.5f64, 2.0] {
            let f = crate::corpus::poly_tent(2).unwrap();
            for levels in [vec![0, 0], vec![1, 0], vec![1, 2], vec![3, 1]] {
                let level = MultiLevel::new(levels.clone()).unwrap();
                let qk = qk_layer(&f, &level).unwrap();
                for p in [Lp::P(1.0), Lp::P(2.0), Lp::Inf] {
                    let norm_2k = match p {
                        Lp::Inf => (level.linf_norm() as f64).exp2(),
                        Lp::P(p) => levels
                            .iter()
                            .map(|&k| (p * k as f64).exp2())
                            .sum::<f64>()
                            .powf(1.0 / p),
                    };
                    let d = 2.0f64;
                    let bound = (-alpha * level.l1_norm() as f64 + 1.0).exp2()
                        / (p.p_plus_one_pow(d - 1.0) * ((alpha + 1.0) * d).exp2())
                        * norm_2k;
                    let spec = QuadratureSpec::tensor(256, p);
                    let measured = w1p_error(&qk, &zero, &spec).unwrap().value;
                    assert!(
                        measured <= bound * 1.01,
                        "layer norm bound violated at alpha={alpha} k={levels:?} p={p}: \
                         {measured} > {bound}"
                    );
                }
            }
        }
    }

    #[test]
    fn recovery_error_is_monotone_in_m() {
        use crate::function::Differentiable;
        use crate::metrics::{w1p_error, QuadratureSpec};
        let f = crate::corpus::poly_tent(2).unwrap();
        let cfg = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), None).unwrap();
        let mut prev = f64::INFINITY;
        for m in 1..=5u32 {
            let r = build_r(&f, &cfg, m).unwrap();
            let spec = QuadratureSpec::tensor(1 << (m + 2), Lp::P(2.0));
            let err = w1p_error(&f as &dyn Differentiable, &r, &spec).unwrap().value;
            assert!(
                err <= prev * 1.05,
                "error grew from {prev} to {err} at m={m}"
            );
            prev = err;
        }
    }
}
