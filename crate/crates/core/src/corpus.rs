//! Test functions on the unit cube with homogeneous boundary values and, where
//! certified, membership in the mixed Hölder-Zygmund unit ball.

use crate::error::{Error, Result};
use crate::faber::{FaberExpansion, FaberIndex};
use crate::function::{Differentiable, Function};
use crate::index::enumerate_smolyak;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The quadratic B-spline with knots 0, 1, 2, 3.
pub fn m3(x: f64) -> f64 {
    if !(0.0..3.0).contains(&x) {
        0.0
    } else if x < 1.0 {
        0.5 * x * x
    } else if x < 2.0 {
        0.5 * (-2.0 * x * x + 6.0 * x - 3.0)
    } else {
        0.5 * (3.0 - x) * (3.0 - x)
    }
}

pub fn m3_deriv(x: f64) -> f64 {
    if !(0.0..3.0).contains(&x) {
        0.0
    } else if x < 1.0 {
        x
    } else if x < 2.0 {
        3.0 - 2.0 * x
    } else {
        x - 3.0
    }
}

/// `psi(x) = M_3(3x)`, a smooth bump supported on [0, 1].
pub fn psi(x: f64) -> f64 {
    m3(3.0 * x)
}

pub fn psi_deriv(x: f64) -> f64 {
    3.0 * m3_deriv(3.0 * x)
}

#[derive(Debug, Clone)]
enum Kind {
    PolyTent,
    BsplineBump {
        alpha: f64,
        level: u32,
        bits: Vec<bool>,
    },
    TruncatedSeries {
        alpha: f64,
        level: u32,
        seed: u64,
        expansion: FaberExpansion,
    },
}

/// A registered corpus member: an evaluator with analytic gradient, its
/// declared smoothness range, and whether unit-ball membership is certified.
#[derive(Debug, Clone)]
pub struct CorpusFunction {
    id: String,
    dim: usize,
    kind: Kind,
    certified: bool,
}

impl CorpusFunction {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn certified_unit_ball(&self) -> bool {
        self.certified
    }

    /// Construction parameters, for report provenance.
    pub fn describe(&self) -> String {
        match &self.kind {
            Kind::PolyTent => format!("poly_tent(d={})", self.dim),
            Kind::BsplineBump { alpha, level, bits } => {
                let ones: usize = bits.iter().filter(|&&b| b).count();
                format!(
                    "bspline_bump(d={}, alpha={alpha}, m_b={level}, |y|={ones})",
                    self.dim
                )
            }
            Kind::TruncatedSeries {
                alpha, level, seed, ..
            } => format!(
                "truncated_series(d={}, alpha={alpha}, m_t={level}, seed={seed})",
                self.dim
            ),
        }
    }

    /// Whether the unit-ball certificate applies at the given smoothness.
    pub fn certified_for(&self, alpha: f64) -> bool {
        if !self.certified {
            return false;
        }
        match &self.kind {
            Kind::PolyTent => (1.0..=2.0).contains(&alpha) && alpha > 1.0,
            Kind::BsplineBump { alpha: a, .. } => (a - alpha).abs() < 1e-12,
            Kind::TruncatedSeries { .. } => false,
        }
    }

    /// The smoothness order the member saturates: the decay rate of its
    /// recovery error is `2^{-m(order - 1)}`.
    pub fn saturation_order(&self) -> f64 {
        match &self.kind {
            // Both piecewise-quadratic families have bounded second
            // derivatives, so their effective order is 2 regardless of the
            // normalization alpha.
            Kind::PolyTent => 2.0,
            Kind::BsplineBump { .. } => 2.0,
            Kind::TruncatedSeries { alpha, .. } => *alpha,
        }
    }

    /// Closed-form surplus coefficient, where one exists.
    pub fn closed_form_lambda(&self, idx: &FaberIndex) -> Option<f64> {
        match &self.kind {
            Kind::PolyTent => {
                let mut prod = 1.0;
                for &k in idx.level().levels() {
                    if k < 0 {
                        return Some(0.0); // boundary values of the tent vanish
                    }
                    prod *= (-(2 * k + 3) as f64).exp2();
                }
                Some(prod)
            }
            _ => None,
        }
    }
}

impl Function for CorpusFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            Kind::PolyTent => {
                let scale = (-(self.dim as f64)).exp2();
                scale * x.iter().map(|&t| t * (1.0 - t)).product::<f64>()
            }
            Kind::BsplineBump { alpha, level, bits } => {
                bump_value(self.dim, *alpha, *level, bits, x)
            }
            Kind::TruncatedSeries { expansion, .. } => expansion.value(x),
        }
    }
}

impl Differentiable for CorpusFunction {
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            Kind::PolyTent => {
                let scale = (-(self.dim as f64)).exp2();
                let vals: Vec<f64> = x.iter().map(|&t| t * (1.0 - t)).collect();
                for j in 0..self.dim {
                    let mut prod = scale * (1.0 - 2.0 * x[j]);
                    for (i, &v) in vals.iter().enumerate() {
                        if i != j {
                            prod *= v;
                        }
                    }
                    out[j] = prod;
                }
            }
            Kind::BsplineBump { alpha, level, bits } => {
                bump_gradient(self.dim, *alpha, *level, bits, x, out)
            }
            Kind::TruncatedSeries { expansion, .. } => expansion.gradient_into(x, out),
        }
    }
}

/// Sum `sum_j y_j psi_{m,j}(x)` exploiting the disjoint supports: at most one
/// bump is active at any `x`.
fn bump_axis(level: u32, bits: &[bool], x: f64) -> (f64, f64) {
    let cells = 1u64 << level;
    let j = ((x * cells as f64).floor() as u64).min(cells - 1); // 0-based cell
    if !bits[j as usize] {
        return (0.0, 0.0);
    }
    let t = cells as f64 * x - j as f64;
    (psi(t), cells as f64 * psi_deriv(t))
}

fn bump_scale(d: usize, alpha: f64, level: u32) -> f64 {
    18.0f64.powi(-(d as i32)) * (-alpha * level as f64).exp2()
}

fn bump_value(d: usize, alpha: f64, level: u32, bits: &[bool], x: &[f64]) -> f64 {
    let (axis1, _) = bump_axis(level, bits, x[0]);
    let mut prod = bump_scale(d, alpha, level) * axis1;
    for &xl in &x[1..] {
        prod *= psi(xl);
    }
    prod
}

fn bump_gradient(d: usize, alpha: f64, level: u32, bits: &[bool], x: &[f64], out: &mut [f64]) {
    let scale = bump_scale(d, alpha, level);
    let (v1, d1) = bump_axis(level, bits, x[0]);
    let tail: Vec<f64> = x[1..].iter().map(|&xl| psi(xl)).collect();
    for j in 0..d {
        let mut prod = scale;
        prod *= if j == 0 { d1 } else { v1 };
        for (i, &v) in tail.iter().enumerate() {
            if i + 1 == j {
                prod *= psi_deriv(x[j]);
            } else {
                prod *= v;
            }
        }
        out[j] = prod;
    }
}

/// `2^{-d} prod x_i (1 - x_i)`: a unit-ball member for every `alpha` in (1, 2],
/// with closed-form surpluses `prod 2^{-2 k_i - 3}`.
pub fn poly_tent(d: usize) -> Result<CorpusFunction> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    Ok(CorpusFunction {
        id: "poly_tent".into(),
        dim: d,
        kind: Kind::PolyTent,
        certified: true,
    })
}

/// The anisotropic quadratic B-spline bump
/// `18^{-d} 2^{-alpha m} (sum_j y_j psi_{m,j}(x_1)) prod_{l >= 2} psi(x_l)`;
/// unit-ball membership holds for the `alpha` it is built with.
pub fn bspline_bump(d: usize, alpha: f64, level: u32, bits: Vec<bool>) -> Result<CorpusFunction> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::invalid("alpha must be in (1, 2]"));
    }
    if bits.len() != (1usize << level) {
        return Err(Error::invalid(format!(
            "bit vector must have length 2^{level}, got {}",
            bits.len()
        )));
    }
    Ok(CorpusFunction {
        id: "bspline_bump".into(),
        dim: d,
        kind: Kind::BsplineBump { alpha, level, bits },
        certified: true,
    })
}

/// A random finite expansion whose coefficients saturate the decay envelope
/// `2^{-(alpha+1)d} 2^{-alpha |k|_1}` over the Smolyak set of level `m_t`.
/// Used for exactness and rate experiments; membership is not certified.
pub fn truncated_series(d: usize, alpha: f64, m_t: u32, seed: u64) -> Result<CorpusFunction> {
    if d == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    if !(alpha > 1.0 && alpha <= 2.0) {
        return Err(Error::invalid("alpha must be in (1, 2]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = enumerate_smolyak(d, m_t)?;
    let mut terms = Vec::new();
    for level in set.entries() {
        let envelope =
            (-(alpha + 1.0) * d as f64).exp2() * (-alpha * level.l1_norm() as f64).exp2();
        let radix: Vec<u64> = level.levels().iter().map(|&k| 1u64 << k).collect();
        let mut s = vec![0u64; d];
        let mut done = false;
        while !done {
            let c = rng.gen_range(-1.0..1.0) * envelope;
            terms.push((
                FaberIndex::from_parts(level.levels().to_vec(), s.clone())?,
                c,
            ));
            done = true;
            let mut axis = d;
            while axis > 0 {
                axis -= 1;
                if s[axis] + 1 < radix[axis] {
                    s[axis] += 1;
                    s[axis + 1..].fill(0);
                    done = false;
                    break;
                }
                s[axis] = 0;
            }
        }
    }
    let expansion = FaberExpansion::from_terms(d, terms)?;
    Ok(CorpusFunction {
        id: "truncated_series".into(),
        dim: d,
        kind: Kind::TruncatedSeries {
            alpha,
            level: m_t,
            seed,
            expansion,
        },
        certified: false,
    })
}

/// Default "alternating" bit vector: cells 0, 2, 4, ... carry a bump.
pub fn alternating_bits(level: u32) -> Vec<bool> {
    (0..(1usize << level)).map(|j| j % 2 == 0).collect()
}

/// Catalog row for `corpus list`.
pub struct CorpusEntry {
    pub id: &'static str,
    pub d_range: &'static str,
    pub alpha_range: &'static str,
    pub certified: &'static str,
}

pub fn list() -> Vec<CorpusEntry> {
    vec![
        CorpusEntry {
            id: "poly_tent",
            d_range: "1..",
            alpha_range: "(1,2]",
            certified: "unit-ball certified for all alpha in (1,2]",
        },
        CorpusEntry {
            id: "bspline_bump",
            d_range: "1..",
            alpha_range: "(1,2]",
            certified: "unit-ball certified at its construction alpha (defaults: m_b=3, alternating bits)",
        },
        CorpusEntry {
            id: "truncated_series",
            d_range: "1..",
            alpha_range: "(1,2]",
            certified: "not certified (random saturating coefficients; defaults: m_t=5, seed=42)",
        },
    ]
}

/// Resolves a corpus id at the given dimension and smoothness, applying the
/// documented defaults for the parametric families.
pub fn resolve(id: &str, d: usize, alpha: f64) -> Result<CorpusFunction> {
    match id {
        "poly_tent" => poly_tent(d),
        "bspline_bump" => bspline_bump(d, alpha, 3, alternating_bits(3)),
        "truncated_series" => truncated_series(d, alpha, 5, 42),
        other => Err(Error::invalid(format!(
            "unknown corpus id '{other}' (try: poly_tent, bspline_bump, truncated_series)"
        ))),
    }
}
