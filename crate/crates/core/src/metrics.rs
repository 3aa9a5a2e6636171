//! Quadrature estimates of L_p and homogeneous W^1_p distances, and an
//! empirical lower estimate of the mixed Hölder-Zygmund seminorm.
//!
//! Deterministic schemes place nodes at cell midpoints so the dyadic kink
//! hyperplanes of piecewise-linear integrands are never sampled; Monte-Carlo
//! schemes stream independent ChaCha blocks so the reduction order (and hence
//! the result) is independent of the thread schedule.

use crate::error::{Error, Result};
use crate::function::{Differentiable, Function};
use crate::sampling::Lp;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Quadrature node layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// `n` midpoints per axis, exact for piecewise-polynomial integrands on
    /// dyadic meshes coarser than the node spacing (p = 1, 2).
    TensorMidpoint { n: u32 },
    /// `n` uniform points from the given seed.
    MonteCarlo { n: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub p: Lp,
}

impl QuadratureSpec {
    pub fn tensor(n: u32, p: Lp) -> Self {
        QuadratureSpec {
            scheme: Scheme::TensorMidpoint { n },
            p,
        }
    }

    pub fn monte_carlo(n: u64, seed: u64, p: Lp) -> Self {
        QuadratureSpec {
            scheme: Scheme::MonteCarlo { n, seed },
            p,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.p.validate()?;
        match self.scheme {
            Scheme::TensorMidpoint { n } => {
                if n < 2 {
                    return Err(Error::invalid("tensor scheme needs n >= 2"));
                }
                if d > 3 {
                    return Err(Error::invalid(
                        "tensor scheme rejected for d > 3; use Monte-Carlo",
                    ));
                }
                Ok(())
            }
            Scheme::MonteCarlo { n, .. } => {
                if n < 1000 {
                    return Err(Error::invalid("Monte-Carlo scheme needs n >= 1000"));
                }
                Ok(())
            }
        }
    }

    pub fn describe(&self) -> String {
        match self.scheme {
            Scheme::TensorMidpoint { n } => format!("tensor(n={n})"),
            Scheme::MonteCarlo { n, seed } => format!("mc(N={n},seed={seed})"),
        }
    }
}

/// Default scheme for the given dimension and level: exact tensor midpoints
/// where affordable, seeded Monte-Carlo beyond.
pub fn default_spec(d: usize, m: u32, p: Lp) -> QuadratureSpec {
    if d <= 2 {
        QuadratureSpec::tensor(1u32 << (m + 2).min(12), p)
    } else {
        QuadratureSpec::monte_carlo(1_000_000, 42, p)
    }
}

/// One quadrature result.
#[derive(Debug, Clone, Copy)]
pub struct Measurement {
    pub value: f64,
    /// Standard error of `value` (Monte-Carlo with finite p only).
    pub std_error: Option<f64>,
    pub nodes: u64,
}

impl Measurement {
    /// Slack to add on the right-hand side when comparing against a bound:
    /// three standard errors for Monte-Carlo, a 1% proportional allowance for
    /// deterministic schemes.
    pub fn comparison_slack(&self, bound: f64) -> f64 {
        match self.std_error {
            Some(se) => 3.0 * se,
            None => 0.01 * bound,
        }
    }
}

const BLOCK: u64 = 8192;

/// Per-point batch of statistics fed to the accumulators; one output slot per
/// tracked quantity, so several norms can share one sweep over the nodes.
trait PointStat: Sync {
    fn arity(&self) -> usize;
    /// Writes the per-point integrands (p-th powers for finite p, sup
    /// candidates for p = inf) into `out`.
    fn eval(&self, x: &[f64], scratch: &mut StatScratch, out: &mut [f64]);
}

struct StatScratch {
    grads: Vec<Vec<f64>>,
}

/// Gradient-difference statistics for several `(pair, p)` combinations over a
/// shared set of functions; each function's gradient is evaluated once per
/// node.
struct GradDiffStat<'a> {
    items: &'a [&'a dyn Differentiable],
    pairs: &'a [(usize, usize)],
    ps: &'a [Lp],
}

impl PointStat for GradDiffStat<'_> {
    fn arity(&self) -> usize {
        self.pairs.len() * self.ps.len()
    }

    fn eval(&self, x: &[f64], scratch: &mut StatScratch, out: &mut [f64]) {
        for (item, g) in self.items.iter().zip(scratch.grads.iter_mut()) {
            item.gradient_into(x, g);
        }
        let mut slot = 0;
        for &(a, b) in self.pairs {
            for &p in self.ps {
                let ga = &scratch.grads[a];
                let gb = &scratch.grads[b];
                out[slot] = match p {
                    Lp::P(p) => ga
                        .iter()
                        .zip(gb)
                        .map(|(&u, &v)| (u - v).abs().powf(p))
                        .sum(),
                    Lp::Inf => ga
                        .iter()
                        .zip(gb)
                        .map(|(&u, &v)| (u - v).abs())
                        .fold(0.0, f64::max),
                };
                slot += 1;
            }
        }
    }
}

struct ValueDiffStat<'a> {
    a: &'a dyn Function,
    b: &'a dyn Function,
    p: Lp,
}

impl PointStat for ValueDiffStat<'_> {
    fn arity(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64], _scratch: &mut StatScratch, out: &mut [f64]) {
        let diff = (self.a.value(x) - self.b.value(x)).abs();
        out[0] = match self.p {
            Lp::P(p) => diff.powf(p),
            Lp::Inf => diff,
        };
    }
}

#[derive(Clone, Default)]
struct BlockSum {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    max: Vec<f64>,
    count: u64,
}

impl BlockSum {
    fn zeros(k: usize) -> Self {
        BlockSum {
            sum: vec![0.0; k],
            sum_sq: vec![0.0; k],
            max: vec![0.0; k],
            count: 0,
        }
    }

    fn add(&mut self, vals: &[f64]) {
        for (i, &v) in vals.iter().enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
            self.max[i] = self.max[i].max(v);
        }
        self.count += 1;
    }

    fn merge(&mut self, other: &BlockSum) {
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
            self.max[i] = self.max[i].max(other.max[i]);
        }
        self.count += other.count;
    }
}

fn run_quadrature(
    d: usize,
    n_items: usize,
    scheme: Scheme,
    ps: &[Lp],
    stat: &dyn PointStat,
) -> Vec<Measurement> {
    let k = stat.arity();
    debug_assert_eq!(k % ps.len(), 0);
    let make_scratch = || StatScratch {
        grads: (0..n_items).map(|_| vec![0.0; d]).collect(),
    };
    let blocks: Vec<BlockSum> = match scheme {
        Scheme::TensorMidpoint { n } => {
            let total: u64 = (n as u64).pow(d as u32);
            let nblocks = total.div_ceil(BLOCK);
            (0..nblocks)
                .into_par_iter()
                .map(|b| {
                    let mut acc = BlockSum::zeros(k);
                    let mut x = vec![0.0; d];
                    let mut vals = vec![0.0; k];
                    let mut scratch = make_scratch();
                    let start = b * BLOCK;
                    let end = (start + BLOCK).min(total);
                    for lin in start..end {
                        let mut rest = lin;
                        for xi in x.iter_mut().rev() {
                            let digit = rest % n as u64;
                            rest /= n as u64;
                            *xi = (digit as f64 + 0.5) / n as f64;
                        }
                        stat.eval(&x, &mut scratch, &mut vals);
                        acc.add(&vals);
                    }
                    acc
                })
                .collect()
        }
        Scheme::MonteCarlo { n, seed } => {
            let nblocks = n.div_ceil(BLOCK);
            (0..nblocks)
                .into_par_iter()
                .map(|b| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(b + 1);
                    let mut acc = BlockSum::zeros(k);
                    let mut x = vec![0.0; d];
                    let mut vals = vec![0.0; k];
                    let mut scratch = make_scratch();
                    let start = b * BLOCK;
                    let end = (start + BLOCK).min(n);
                    for _ in start..end {
                        for xi in x.iter_mut() {
                            *xi = rng.gen::<f64>();
                        }
                        stat.eval(&x, &mut scratch, &mut vals);
                        acc.add(&vals);
                    }
                    acc
                })
                .collect()
        }
    };

    // Sequential combination in block order keeps the result bit-reproducible.
    let mut total = BlockSum::zeros(k);
    for b in &blocks {
        total.merge(b);
    }

    let n = total.count as f64;
    (0..k)
        .map(|slot| {
            let p = ps[slot % ps.len()];
            match p {
                Lp::Inf => Measurement {
                    value: total.max[slot],
                    std_error: None,
                    nodes: total.count,
                },
                Lp::P(p) => {
                    let mean = total.sum[slot] / n;
                    let value = mean.powf(1.0 / p);
                    let std_error = match scheme {
                        Scheme::MonteCarlo { .. } => {
                            let var = (total.sum_sq[slot] / n - mean * mean).max(0.0) / n;
                            let se_mean = var.sqrt();
                            // Delta method through t -> t^{1/p}.
                            let se = if mean > 0.0 {
                                se_mean / p * mean.powf(1.0 / p - 1.0)
                            } else {
                                0.0
                            };
                            Some(se)
                        }
                        Scheme::TensorMidpoint { .. } => None,
                    };
                    Measurement {
                        value,
                        std_error,
                        nodes: total.count,
                    }
                }
            }
        })
        .collect()
}

/// Homogeneous Sobolev seminorm distance: the L_p norm (over axes and the cube)
/// of the gradient difference; `max_i esssup |.|` at p = inf.
pub fn w1p_error(
    a: &dyn Differentiable,
    b: &dyn Differentiable,
    spec: &QuadratureSpec,
) -> Result<Measurement> {
    Ok(w1p_table(&[a, b], &[(0, 1)], &[spec.p], spec.scheme)?.remove(0))
}

/// Batched seminorm distances: one quadrature sweep measuring every requested
/// `(pair, p)` combination, evaluating each function's gradient once per node.
/// Returns measurements in `pairs x ps` row-major order.
pub fn w1p_table(
    items: &[&dyn Differentiable],
    pairs: &[(usize, usize)],
    ps: &[Lp],
    scheme: Scheme,
) -> Result<Vec<Measurement>> {
    if items.is_empty() || pairs.is_empty() || ps.is_empty() {
        return Err(Error::invalid("empty quadrature request"));
    }
    let d = items[0].dim();
    for it in items {
        if it.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: it.dim(),
            });
        }
    }
    for &(a, b) in pairs {
        if a >= items.len() || b >= items.len() {
            return Err(Error::invalid("pair index out of range"));
        }
    }
    for &p in ps {
        QuadratureSpec { scheme, p }.validate(d)?;
    }
    let stat = GradDiffStat { items, pairs, ps };
    Ok(run_quadrature(d, items.len(), scheme, ps, &stat))
}

/// Plain L_p distance of values.
pub fn lp_error(a: &dyn Function, b: &dyn Function, spec: &QuadratureSpec) -> Result<Measurement> {
    let d = a.dim();
    if b.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: b.dim(),
        });
    }
    spec.validate(d)?;
    let stat = ValueDiffStat { a, b, p: spec.p };
    Ok(run_quadrature(d, 0, spec.scheme, &[spec.p], &stat).remove(0))
}

/// Aggregated distances between a pair of objects, with quadrature metadata.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub value_lp: Measurement,
    pub value_w1p: Measurement,
    pub value_sup: Measurement,
    pub quadrature: String,
}

/// Measures the L_p, homogeneous W^1_p, and sup distances between two objects
/// under one quadrature layout.
pub fn error_report(
    a: &dyn Differentiable,
    b: &dyn Differentiable,
    spec: &QuadratureSpec,
) -> Result<ErrorReport> {
    let sup_spec = QuadratureSpec {
        scheme: spec.scheme,
        p: Lp::Inf,
    };
    Ok(ErrorReport {
        value_lp: lp_error(a, b, spec)?,
        value_w1p: w1p_error(a, b, spec)?,
        value_sup: lp_error(a, b, &sup_spec)?,
        quadrature: spec.describe(),
    })
}

/// Lower estimate of the mixed Hölder-Zygmund seminorm
/// `max_u sup prod_{i in u} h_i^{-alpha} |Delta^{2,u}_h f(x)|`
/// by maximizing over sampled axis subsets, anchors, and steps.
///
/// The search mixes a dyadic sweep (steps `2^{-k-1}` at dyadic anchors, where
/// the hierarchical structure concentrates extrema) with seeded uniform
/// sampling; roughly `budget` oracle evaluations are spent in total.
pub fn mixed_holder_seminorm_lb(f: &dyn Function, alpha: f64, budget: u64) -> f64 {
    let d = f.dim();
    let mut best: f64 = 0.0;
    let mut x = vec![0.0; d];

    // u = empty set contributes the sup norm.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let sup_samples = (budget / 8).max(64);
    for _ in 0..sup_samples {
        for xi in x.iter_mut() {
            *xi = rng.gen::<f64>();
        }
        best = best.max(f.value(&x).abs());
    }

    // Second-difference statistic for a fixed subset u, anchor and step.
    let diff_stat = |u: &[usize], x0: &[f64], h: &[f64], buf: &mut Vec<f64>| -> f64 {
        let mut t = vec![0u8; u.len()];
        let mut total = 0.0;
        loop {
            buf.clear();
            buf.extend_from_slice(x0);
            let mut w = 1.0;
            for (ui, &axis) in u.iter().enumerate() {
                buf[axis] += t[ui] as f64 * h[ui];
                if t[ui] == 1 {
                    w *= -2.0;
                }
            }
            total += w * f.value(buf);
            let mut i = u.len();
            loop {
                if i == 0 {
                    let scale: f64 = u
                        .iter()
                        .enumerate()
                        .map(|(ui, _)| h[ui].powf(-alpha))
                        .product();
                    return total.abs() * scale;
                }
                i -= 1;
                if t[i] < 2 {
                    t[i] += 1;
                    for v in &mut t[i + 1..] {
                        *v = 0;
                    }
                    break;
                }
            }
        }
    };

    let subsets: Vec<Vec<usize>> = if d <= 4 {
        (1..(1u32 << d))
            .map(|mask| (0..d).filter(|&i| mask >> i & 1 == 1).collect())
            .collect()
    } else {
        let mut subs: Vec<Vec<usize>> = (0..d).map(|i| vec![i]).collect();
        subs.push((0..d).collect());
        for _ in 0..2 * d {
            let sub: Vec<usize> = (0..d).filter(|_| rng.gen::<bool>()).collect();
            if !sub.is_empty() {
                subs.push(sub);
            }
        }
        subs
    };

    let mut buf = Vec::with_capacity(d);

    // Dyadic sweep: steps 2^{-k-1}, anchors spread over the level-k grid.
    let levels = 6u32;
    for u in &subsets {
        for k in 0..levels {
            let cells = 1u64 << k;
            let h_val = 0.5 / cells as f64;
            let h = vec![h_val; u.len()];
            let anchors_per_axis = cells.min(8);
            let stride = cells / anchors_per_axis;
            let mut anchor = vec![0u64; u.len()];
            let mut done = false;
            while !done {
                x.iter_mut().for_each(|v| *v = 0.5);
                for (ui, &axis) in u.iter().enumerate() {
                    x[axis] = (anchor[ui] * stride) as f64 / cells as f64;
                }
                best = best.max(diff_stat(u, &x, &h, &mut buf));
                done = true;
                let mut i = u.len();
                while i > 0 {
                    i -= 1;
                    if anchor[i] + 1 < anchors_per_axis {
                        anchor[i] += 1;
                        anchor[i + 1..].fill(0);
                        done = false;
                        break;
                    }
                    anchor[i] = 0;
                }
            }
        }
    }

    // Random search over anchors and steps.
    let probes = (budget / 9).max(256);
    for _ in 0..probes {
        let u = &subsets[rng.gen_range(0..subsets.len())];
        let mut h = Vec::with_capacity(u.len());
        for _ in 0..u.len() {
            // Log-uniform steps; below ~2^{-6.5} the second difference sinks
            // into f64 cancellation noise and the ratio estimate turns junk.
            let k: f64 = rng.gen_range(0.0..5.5);
            h.push(0.5 * 0.5f64.powf(k));
        }
        for i in 0..d {
            x[i] = rng.gen::<f64>();
        }
        for (ui, &axis) in u.iter().enumerate() {
            x[axis] = rng.gen::<f64>() * (1.0 - 2.0 * h[ui]);
        }
        best = best.max(diff_stat(u, &x, &h, &mut buf));
    }

    best
}
