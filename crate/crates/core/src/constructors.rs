//! Explicit approximating networks: the dyadic squaring net, zero-preserving
//! pairwise and d-ary product nets, hat-function nets, and the compiler that
//! turns a sampling-operator expansion into one deep ReLU network.
//!
//! The pairwise product uses `xy = ((x+y)/2)^2 - (|x-y|/2)^2` with a shared
//! squaring subnet on both arguments. When an input is 0 the two subnets see
//! bitwise-identical arguments and their outputs cancel exactly, which is what
//! gives hat nets exact support containment.

use crate::error::{Error, Result};
use crate::faber::{FaberExpansion, FaberIndex};
use crate::function::Function;
use crate::relunet::{chain_with_collation, parallelize, Layer, ReluNetwork, SpecialNetwork};
use crate::sampling::{build_r, ApproxConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Piecewise-linear interpolant of `x^2` at the dyadic points `j 2^{-m}`,
/// realized as a sawtooth cascade. Exact at the nodes; value error at most
/// `2^{-2m-2}`, derivative error at most `2^{-m}` a.e.
pub fn build_square_net(m_sq: u32) -> ReluNetwork {
    assert!(m_sq >= 1, "squaring net needs at least one level");
    let m = m_sq as usize;
    let mut layers = Vec::with_capacity(m + 1);
    // Layer 1: A_1 = relu(x), B_1 = relu(x - 1/2).
    layers.push(
        Layer::new(1, 2, vec![(0, 0, 1.0), (1, 0, 1.0)], vec![(1, -0.5)]).unwrap(),
    );
    if m == 1 {
        // f_1 = A/2 + B.
        layers.push(Layer::new(2, 1, vec![(0, 0, 0.5), (0, 1, 1.0)], vec![]).unwrap());
        return ReluNetwork::new(layers).unwrap();
    }
    // Layer 2: A_2, B_2 from the sawtooth g_1 = 2A - 4B; P_2 = f_1 = A/2 + B.
    layers.push(
        Layer::new(
            2,
            3,
            vec![
                (0, 0, 2.0),
                (0, 1, -4.0),
                (1, 0, 2.0),
                (1, 1, -4.0),
                (2, 0, 0.5),
                (2, 1, 1.0),
            ],
            vec![(1, -0.5)],
        )
        .unwrap(),
    );
    for j in 3..=m {
        // P_j = P_{j-1} - 4^{-(j-1)} (2 A_{j-1} - 4 B_{j-1}).
        let a_c = -(2.0f64) * (2.0f64).powi(2 - 2 * j as i32); // -2 * 4^{1-j}
        let b_c = (2.0f64).powi(4 - 2 * j as i32);
        layers.push(
            Layer::new(
                3,
                3,
                vec![
                    (0, 0, 2.0),
                    (0, 1, -4.0),
                    (1, 0, 2.0),
                    (1, 1, -4.0),
                    (2, 0, a_c),
                    (2, 1, b_c),
                    (2, 2, 1.0),
                ],
                vec![(1, -0.5)],
            )
            .unwrap(),
        );
    }
    // Output: f_m = P_m - 4^{-m} (2 A_m - 4 B_m).
    let a_c = -(2.0f64).powi(1 - 2 * m as i32);
    let b_c = (2.0f64).powi(2 - 2 * m as i32);
    layers.push(
        Layer::new(3, 1, vec![(0, 0, a_c), (0, 1, b_c), (0, 2, 1.0)], vec![]).unwrap(),
    );
    ReluNetwork::new(layers).unwrap()
}

/// Smallest sawtooth depth whose worst-case value and derivative errors
/// `max(2^{-2m}, 2^{-m+1})` fall below the node accuracy.
fn m_sq_for(delta_node: f64) -> u32 {
    let mut m = 1u32;
    while (1.0 - m as f64).exp2() > delta_node && m < 50 {
        m += 1;
    }
    m
}

/// Two-input product net with the given sawtooth depth: layers
/// `[c, e1, e2] -> [A1u, B1u, A1v, B1v] -> ([Aj, Bj, Pj] x 2)* -> [Su, Sv] -> out`.
/// The `u` and `v` squaring chains are structurally identical, so equal
/// arguments produce bitwise-equal chain values and the output cancels to an
/// exact 0.
fn pair_net(m_sq: u32) -> ReluNetwork {
    let m = m_sq as usize;
    let mut layers = Vec::with_capacity(m + 3);
    // [c, e1, e2]: c = relu((x+y)/2), e1 = relu(x-y), e2 = relu(y-x).
    layers.push(
        Layer::new(
            2,
            3,
            vec![
                (0, 0, 0.5),
                (0, 1, 0.5),
                (1, 0, 1.0),
                (1, 1, -1.0),
                (2, 0, -1.0),
                (2, 1, 1.0),
            ],
            vec![],
        )
        .unwrap(),
    );
    // [A1u, B1u, A1v, B1v]: the u-chain reads c, the v-chain reads (e1+e2)/2.
    layers.push(
        Layer::new(
            3,
            4,
            vec![
                (0, 0, 1.0),
                (1, 0, 1.0),
                (2, 1, 0.5),
                (2, 2, 0.5),
                (3, 1, 0.5),
                (3, 2, 0.5),
            ],
            vec![(1, -0.5), (3, -0.5)],
        )
        .unwrap(),
    );
    for j in 2..=m {
        let in_dim = if j == 2 { 4 } else { 6 };
        let mut w = Vec::new();
        let mut b = Vec::new();
        for (side, row0) in [(0u32, 0u32), (1, 3)] {
            // Columns of (A, B, P) for this side in the previous layer.
            let (ca, cb, cp) = if j == 2 {
                (2 * side, 2 * side + 1, u32::MAX)
            } else {
                (3 * side, 3 * side + 1, 3 * side + 2)
            };
            w.push((row0, ca, 2.0));
            w.push((row0, cb, -4.0));
            w.push((row0 + 1, ca, 2.0));
            w.push((row0 + 1, cb, -4.0));
            b.push((row0 + 1, -0.5));
            if j == 2 {
                // P_2 = f_1 = A_1 / 2 + B_1.
                w.push((row0 + 2, ca, 0.5));
                w.push((row0 + 2, cb, 1.0));
            } else {
                let a_c = -(2.0f64) * (2.0f64).powi(2 - 2 * j as i32);
                let b_c = (2.0f64).powi(4 - 2 * j as i32);
                w.push((row0 + 2, ca, a_c));
                w.push((row0 + 2, cb, b_c));
                w.push((row0 + 2, cp, 1.0));
            }
        }
        layers.push(Layer::new(in_dim, 6, w, b).unwrap());
    }
    // [Su, Sv]: the finished squares f_m(u), f_m(v), nonnegative by
    // monotonicity of the interpolant.
    let (in_dim, mut w) = if m == 1 {
        // Read [A1u, B1u, A1v, B1v].
        (
            4usize,
            vec![
                (0u32, 0u32, 0.5),
                (0, 1, 1.0),
                (1, 2, 0.5),
                (1, 3, 1.0),
            ],
        )
    } else {
        let a_c = -(2.0f64).powi(1 - 2 * m as i32);
        let b_c = (2.0f64).powi(2 - 2 * m as i32);
        (
            6usize,
            vec![
                (0u32, 0u32, a_c),
                (0, 1, b_c),
                (0, 2, 1.0),
                (1, 3, a_c),
                (1, 4, b_c),
                (1, 5, 1.0),
            ],
        )
    };
    w.sort_unstable_by_key(|&(r, c, _)| (r, c));
    layers.push(Layer::new(in_dim, 2, w, vec![]).unwrap());
    // Output: Su - Sv = f_m(u) - f_m(v) ~ xy.
    layers.push(Layer::new(2, 1, vec![(0, 0, 1.0), (0, 1, -1.0)], vec![]).unwrap());
    ReluNetwork::new(layers).unwrap()
}

/// Deterministic off-kink sample points for construction-time verification.
fn verification_points(d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

/// Tracks the realized construction parameters of a product net.
#[derive(Debug, Clone, Copy)]
pub struct ProductNetSpec {
    pub arity: usize,
    pub delta: f64,
    pub delta_node: f64,
    pub m_sq: u32,
}

/// Two-input zero-preserving product net meeting value and derivative accuracy
/// `delta_node` on the unit square, with `P(0, y) = P(x, 0) = 0` exactly.
pub fn build_pair_product_net(delta_node: f64) -> Result<ReluNetwork> {
    if !(delta_node > 0.0 && delta_node < 1.0) {
        return Err(Error::invalid("node accuracy must be in (0, 1)"));
    }
    let mut m = m_sq_for(delta_node);
    for _ in 0..4 {
        let net = pair_net(m);
        if product_net_ok(&net, 2, delta_node) {
            return Ok(net);
        }
        m += 1; // empirical bump; the analytic choice already carries 2x slack
    }
    Err(Error::invalid(
        "pairwise product verification failed after depth bumps",
    ))
}

fn product_net_ok(net: &ReluNetwork, d: usize, delta: f64) -> bool {
    let pts = verification_points(d, 2048.max(512 * d), 0xfab);
    let mut grad = vec![0.0; d];
    for x in &pts {
        let prod: f64 = x.iter().product();
        if (net.value(x) - prod).abs() > delta {
            return false;
        }
        crate::function::Differentiable::gradient_into(net, x, &mut grad);
        for j in 0..d {
            let mut dj = 1.0;
            for (i, &xi) in x.iter().enumerate() {
                if i != j {
                    dj *= xi;
                }
            }
            if (grad[j] - dj).abs() > delta {
                return false;
            }
        }
    }
    true
}

/// `d`-ary product net: a balanced binary tree of pairwise nodes, each with
/// node accuracy `delta / (3d)`. Output is within `delta` of the product in
/// value and a.e. derivative, and exactly 0 whenever a coordinate is 0.
pub fn build_product_net(d: usize, delta: f64) -> Result<(ReluNetwork, ProductNetSpec)> {
    if d < 2 {
        return Err(Error::invalid("product net needs arity >= 2"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("accuracy must be in (0, 1)"));
    }
    let delta_node = delta / (3.0 * d as f64);
    let mut m = m_sq_for(delta_node);
    for _ in 0..4 {
        let pair = pair_net(m);
        let net = product_tree(d, &pair)?;
        if product_net_ok(&net, d, delta) {
            let spec = ProductNetSpec {
                arity: d,
                delta,
                delta_node,
                m_sq: m,
            };
            return Ok((net, spec));
        }
        m += 1;
    }
    Err(Error::invalid(
        "product net verification failed after depth bumps",
    ))
}

/// Stacks pairwise nodes into a tree; unpaired channels ride through identity
/// rows (their values stay in [0,1], so the activation is transparent).
fn product_tree(d: usize, pair: &ReluNetwork) -> Result<ReluNetwork> {
    let pair_layers = pair.layers();
    let depth_pair = pair_layers.len();
    let mut layers: Vec<Layer> = Vec::new();
    let mut width = d;
    while width > 1 {
        let pairs = width / 2;
        let pass = width % 2;
        let last_stage = width <= 2;
        for (li, pl) in pair_layers.iter().enumerate() {
            let emit = li == depth_pair - 1;
            let block_out = pl.out_dim();
            let block_in = pl.in_dim();
            let out_dim = if emit {
                pairs + pass
            } else {
                pairs * block_out + pass
            };
            let in_dim = if li == 0 {
                width
            } else {
                pairs * block_in + pass
            };
            let mut w = Vec::new();
            let mut b = Vec::new();
            for p in 0..pairs as u32 {
                let row_off = if emit { p } else { p * block_out as u32 };
                for &(r, c, v) in pl.weights() {
                    let col = if li == 0 {
                        2 * p + c
                    } else {
                        p * block_in as u32 + c
                    };
                    w.push((row_off + r, col, v));
                }
                for &(r, v) in pl.bias() {
                    b.push((row_off + r, v));
                }
            }
            for t in 0..pass as u32 {
                let row = if emit {
                    pairs as u32 + t
                } else {
                    (pairs * block_out) as u32 + t
                };
                let col = if li == 0 {
                    (2 * pairs) as u32 + t
                } else {
                    (pairs * block_in) as u32 + t
                };
                w.push((row, col, 1.0));
            }
            let _ = last_stage;
            layers.push(Layer::new(in_dim, out_dim, w, b)?);
        }
        width = pairs + pass;
    }
    ReluNetwork::new(layers)
}

/// Hat-function net: a two-layer gadget computes each axis tent
/// `y_i = relu(1 - relu(2^{k_i+1} x_i - 2 s_i - 1) - relu(2 s_i + 1 - 2^{k_i+1} x_i))`,
/// then a product net multiplies the tents. Output support is contained in the
/// hat's support exactly, values are within `delta`, and the axis-`j`
/// derivative within `2^{k_j+1} delta` a.e.
pub fn build_hat_net(idx: &FaberIndex, delta: f64) -> Result<ReluNetwork> {
    let d = idx.dim();
    if d == 1 {
        return hat_net_with(idx, None);
    }
    let (product, _) = build_product_net(d, delta)?;
    hat_net_with(idx, Some(&product))
}

/// Hat net sharing a prebuilt product net (the compiler builds it once per
/// configuration; every hat at the same configuration has the same shape).
pub fn hat_net_with(idx: &FaberIndex, product: Option<&ReluNetwork>) -> Result<ReluNetwork> {
    let d = idx.dim();
    if !idx.level().is_nonnegative() {
        return Err(Error::invalid("hat nets require levels >= 0"));
    }
    let levels = idx.level().levels();
    let positions = idx.position().positions();
    let mut w1 = Vec::with_capacity(2 * d);
    let mut b1 = Vec::with_capacity(2 * d);
    for i in 0..d {
        let scale = ((levels[i] + 1) as f64).exp2();
        let shift = 2.0 * positions[i] as f64 + 1.0;
        let (ra, rb) = (2 * i as u32, 2 * i as u32 + 1);
        w1.push((ra, i as u32, scale));
        b1.push((ra, -shift));
        w1.push((rb, i as u32, -scale));
        b1.push((rb, shift));
    }
    let gadget1 = Layer::new(d, 2 * d, w1, b1)?;
    let mut w2 = Vec::with_capacity(2 * d);
    let mut b2 = Vec::with_capacity(d);
    for i in 0..d as u32 {
        w2.push((i, 2 * i, -1.0));
        w2.push((i, 2 * i + 1, -1.0));
        b2.push((i, 1.0));
    }
    let gadget2 = Layer::new(2 * d, d, w2, b2)?;

    let mut layers = vec![gadget1, gadget2];
    match product {
        None => {
            if d != 1 {
                return Err(Error::invalid("multivariate hat needs a product net"));
            }
            layers.push(Layer::new(1, 1, vec![(0, 0, 1.0)], vec![])?);
        }
        Some(p) => {
            if p.input_dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: p.input_dim(),
                });
            }
            layers.extend(p.layers().iter().cloned());
        }
    }
    ReluNetwork::new(layers)
}

/// Derived compilation parameters for a target accuracy.
#[derive(Debug, Clone, Copy)]
pub struct CompilerPlan {
    pub cfg: ApproxConfig,
    /// Truncation level of the sampling operator.
    pub m: u32,
    /// Hat-net accuracy allocated from the network half of the budget.
    pub delta: f64,
    /// Admissible accuracy threshold; plans exist for eps below it.
    pub eps0: f64,
    /// Base of the dimension factor B^{-d} in the size bound.
    pub b: f64,
    pub k1: f64,
}

/// The admissible accuracy threshold.
pub fn eps0(cfg: &ApproxConfig) -> f64 {
    let d = cfg.d as f64;
    let second = d / ((cfg.alpha * d).exp2() * (1.0 - (1.0 - cfg.alpha).exp2()));
    let third = cfg.k1() * d * d
        / (cfg.p_plus_one_pow(d)
            * ((cfg.alpha + 1.0) * d).exp2()
            * cfg.notch_factor().powi(cfg.d as i32));
    1.0f64.min(second).min(third)
}

/// Splits the accuracy budget: picks the truncation level `m` so the sampling
/// error is at most `eps/2` and the hat accuracy `delta` so the network
/// replacement error is at most `eps/2`. Base-2 logarithms throughout.
pub fn plan(cfg: &ApproxConfig) -> Result<CompilerPlan> {
    cfg.validate()?;
    let eps = cfg
        .eps
        .ok_or_else(|| Error::invalid("plan requires a target accuracy eps"))?;
    let eps0 = eps0(cfg);
    if eps >= eps0 {
        return Err(Error::EpsilonTooLarge { eps, eps0 });
    }
    let d = cfg.d as f64;
    let inner = 2.0 * cfg.k1() * d * d / eps
        / (cfg.p_plus_one_pow(d)
            * ((cfg.alpha + 1.0) * d).exp2()
            * cfg.notch_factor().powi(cfg.d as i32));
    let m = (inner.log2() / (cfg.alpha - 1.0)).ceil().max(0.0) as u32;
    let delta = (1.0 - (1.0 - cfg.alpha).exp2()) * (cfg.alpha * d).exp2() * eps / (2.0 * d);
    debug_assert!(delta < 1.0, "eps < eps0 forces delta < 1");
    let b = (1.0 - (-1.0 / (cfg.beta - 1.0)).exp2())
        * (cfg.p_plus_one_pow(1.0) * (cfg.alpha + 1.0).exp2() * cfg.notch_factor()
            / d.powf(2.0 * cfg.alpha / d))
        .powf(1.0 / (cfg.alpha - 1.0));
    Ok(CompilerPlan {
        cfg: *cfg,
        m,
        delta,
        eps0,
        b,
        k1: cfg.k1(),
    })
}

/// A compiled network together with the expansion it realizes and the plan.
pub struct Compiled {
    pub plan: CompilerPlan,
    pub expansion: FaberExpansion,
    pub net: ReluNetwork,
    pub product_spec: Option<ProductNetSpec>,
}

fn degenerate_zero_net(d: usize) -> ReluNetwork {
    ReluNetwork::new(vec![
        Layer::new(d, 1, vec![], vec![]).unwrap(),
        Layer::new(1, 1, vec![], vec![]).unwrap(),
    ])
    .unwrap()
}

fn compile_parts(
    f: &dyn Function,
    cfg: &ApproxConfig,
) -> Result<(
    CompilerPlan,
    FaberExpansion,
    Vec<ReluNetwork>,
    Vec<f64>,
    Option<ProductNetSpec>,
)> {
    if f.dim() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            got: f.dim(),
        });
    }
    let plan = plan(cfg)?;
    let expansion = build_r(f, cfg, plan.m)?;
    let (product, spec) = if cfg.d >= 2 {
        let (p, s) = build_product_net(cfg.d, plan.delta)?;
        (Some(p), Some(s))
    } else {
        (None, None)
    };
    let mut nets = Vec::with_capacity(expansion.num_terms());
    let mut coeffs = Vec::with_capacity(expansion.num_terms());
    for (idx, c) in expansion.terms() {
        nets.push(hat_net_with(&idx, product.as_ref())?);
        coeffs.push(c);
    }
    Ok((plan, expansion, nets, coeffs, spec))
}

/// Compiles `f` into a wide parallel network whose output approximates `f`
/// within `cfg.eps` in the homogeneous Sobolev norm.
pub fn compile(f: &dyn Function, cfg: &ApproxConfig) -> Result<Compiled> {
    let (plan, expansion, nets, coeffs, product_spec) = compile_parts(f, cfg)?;
    let net = if coeffs.iter().all(|&c| c == 0.0) {
        degenerate_zero_net(cfg.d)
    } else {
        let bounds: Vec<f64> = nets.iter().map(ReluNetwork::output_bound).collect();
        parallelize(&nets, &coeffs, &bounds)?
    };
    Ok(Compiled {
        plan,
        expansion,
        net,
        product_spec,
    })
}

/// The narrow-deep variant: chains the hat nets through source and collation
/// channels, then converts the special network to standard form. Output equals
/// the wide compilation up to floating-point reassociation; width stays
/// proportional to the dimension.
pub struct CompiledNarrow {
    pub plan: CompilerPlan,
    pub expansion: FaberExpansion,
    pub special: SpecialNetwork,
    pub net: ReluNetwork,
    pub product_spec: Option<ProductNetSpec>,
}

pub fn compile_narrow(f: &dyn Function, cfg: &ApproxConfig) -> Result<CompiledNarrow> {
    let (plan, expansion, nets, coeffs, product_spec) = compile_parts(f, cfg)?;
    if coeffs.iter().all(|&c| c == 0.0) {
        let net = degenerate_zero_net(cfg.d);
        let special = chain_with_collation(&[net.clone()], &[0.0])?;
        return Ok(CompiledNarrow {
            plan,
            expansion,
            special,
            net,
            product_spec,
        });
    }
    let special = chain_with_collation(&nets, &coeffs)?;
    let net = special.to_standard()?;
    Ok(CompiledNarrow {
        plan,
        expansion,
        special,
        net,
        product_spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faber::tensor_hat_eval;
    use crate::function::Differentiable;
    use crate::sampling::Lp;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_net_nodes_are_exact() {
        for m in [1u32, 2, 3, 5] {
            let net = build_square_net(m);
            assert_eq!(net.depth() as u32, m + 1);
            assert_eq!(net.eval(&[0.0]).unwrap(), 0.0);
            assert_eq!(net.eval(&[1.0]).unwrap(), 1.0);
            assert_eq!(net.eval(&[0.5]).unwrap(), 0.25);
            // Every dyadic node of level m interpolates exactly.
            for j in 0..=(1u64 << m) {
                let x = j as f64 / (1u64 << m) as f64;
                assert_abs_diff_eq!(net.eval(&[x]).unwrap(), x * x, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn square_net_error_bounds() {
        for m in [2u32, 3, 4] {
            let net = build_square_net(m);
            let vbound = (-2.0 * m as f64 - 2.0).exp2();
            let dbound = (-(m as f64)).exp2();
            let mut max_v = 0.0f64;
            let mut max_d = 0.0f64;
            for i in 0..20_000 {
                let x = (i as f64 + 0.5) / 20_000.0;
                max_v = max_v.max((net.value(&[x]) - x * x).abs());
                max_d = max_d.max((net.gradient(&[x])[0] - 2.0 * x).abs());
            }
            assert!(max_v <= vbound + 1e-15, "value error {max_v} > {vbound}");
            assert!(max_d <= dbound + 1e-12, "deriv error {max_d} > {dbound}");
            // The midpoint of the first cell realizes the worst case.
            let x = 0.5 / (1u64 << m) as f64;
            assert_abs_diff_eq!((net.value(&[x]) - x * x).abs(), vbound, epsilon = 1e-15);
        }
    }

    #[test]
    fn pair_product_zero_preservation_is_exact() {
        let net = build_pair_product_net(0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let y: f64 = rng.gen();
            assert_eq!(net.value(&[0.0, y]), 0.0);
            assert_eq!(net.value(&[y, 0.0]), 0.0);
        }
    }

    #[test]
    fn pair_product_accuracy() {
        for delta in [0.1, 0.01, 0.001] {
            let net = build_pair_product_net(delta).unwrap();
            assert!((net.value(&[1.0, 1.0]) - 1.0).abs() <= delta);
            let n = 512;
            let mut max_err = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let x = (i as f64 + 0.5) / n as f64;
                    let y = (j as f64 + 0.5) / n as f64;
                    max_err = max_err.max((net.value(&[x, y]) - x * y).abs());
                }
            }
            assert!(max_err <= delta, "pair error {max_err} > {delta}");
        }
    }

    #[test]
    fn product_net_contracts() {
        for d in [2usize, 3, 4] {
            let delta = 0.01;
            let (net, spec) = build_product_net(d, delta).unwrap();
            assert_eq!(spec.arity, d);
            // Zero coordinate forces an exact zero output.
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..2000 {
                let mut x: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
                x[rng.gen_range(0..d)] = 0.0;
                assert_eq!(net.value(&x), 0.0, "zero preservation failed at {x:?}");
            }
            // Monte-Carlo accuracy check against the exact product.
            let mut max_err = 0.0f64;
            let mut grad = vec![0.0; d];
            for _ in 0..20_000 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen()).collect();
                let prod: f64 = x.iter().product();
                max_err = max_err.max((net.value(&x) - prod).abs());
                net.gradient_into(&x, &mut grad);
                for j in 0..d {
                    let mut dj = 1.0;
                    for (i, &xi) in x.iter().enumerate() {
                        if i != j {
                            dj *= xi;
                        }
                    }
                    assert!(
                        (grad[j] - dj).abs() <= delta,
                        "derivative error at {x:?} axis {j}"
                    );
                }
            }
            assert!(max_err <= delta);
            // Width bound from the underlying construction.
            assert!(net.stats().width <= 12 * d);
        }
    }

    #[test]
    fn hat_net_contracts() {
        let delta = 0.01;
        let (product, _) = build_product_net(2, delta).unwrap();
        let idx = FaberIndex::from_parts(vec![1, 2], vec![1, 3]).unwrap();
        let net = hat_net_with(&idx, Some(&product)).unwrap();

        // Accounting: exactly 7d gadget entries on top of the product net.
        assert_eq!(net.stats().size, product.stats().size + 7 * 2);
        assert_eq!(net.depth(), product.depth() + 2);

        // Support containment is exact.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut inside_max = 0.0f64;
        for _ in 0..20_000 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen()).collect();
            let phi = tensor_hat_eval(&idx, &x).unwrap();
            let v = net.value(&x);
            if phi == 0.0 {
                let support = (0.5..=0.75).contains(&x[0]) && (0.375..=0.5).contains(&x[1]);
                if !support {
                    assert_eq!(v, 0.0, "support leak at {x:?}");
                }
            }
            inside_max = inside_max.max((v - phi).abs());
        }
        assert!(inside_max <= delta, "hat value error {inside_max}");

        // Peak value within delta of 1.
        assert!((net.value(&idx.peak()) - 1.0).abs() <= delta);

        // Derivative error scales with the axis level.
        let mut grad = vec![0.0; 2];
        for _ in 0..5000 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen()).collect();
            let g = crate::faber::tensor_hat_grad(&idx, &x).unwrap();
            net.gradient_into(&x, &mut grad);
            for j in 0..2 {
                let bound = ((idx.level().levels()[j] + 1) as f64).exp2() * delta;
                let err = (grad[j] - g[j]).abs();
                // Skip kink-straddling samples: exact gradients jump there.
                if err > bound {
                    let mut xp = x.clone();
                    xp[j] += 1e-9;
                    let g2 = crate::faber::tensor_hat_grad(&idx, &xp).unwrap();
                    assert!(
                        (g2[j] - g[j]).abs() > 0.0 || err <= bound,
                        "derivative error {err} > {bound} at {x:?} axis {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn hat_net_univariate_is_exact() {
        let idx = FaberIndex::from_parts(vec![2], vec![1]).unwrap();
        let net = build_hat_net(&idx, 0.5).unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert_abs_diff_eq!(
                net.value(&[x]),
                tensor_hat_eval(&idx, &[x]).unwrap(),
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn plan_matches_closed_forms() {
        let cfg = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), Some(0.1)).unwrap();
        let p = plan(&cfg).unwrap();
        assert_abs_diff_eq!(p.eps0, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p.delta, 0.2, epsilon = 1e-12);
        assert_eq!(p.m, 6);
        // Independent recomputation of B.
        let notch = 1.0 - (-0.5f64).exp2();
        let b = (1.0 - (-0.5f64).exp2())
            * (3.0f64.sqrt() * 8.0 * notch / 2.0f64.powf(2.0)).powf(1.0);
        assert_abs_diff_eq!(p.b, b, epsilon = 1e-12);

        let too_big = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), Some(0.3)).unwrap();
        match plan(&too_big) {
            Err(Error::EpsilonTooLarge { eps0, .. }) => {
                assert_abs_diff_eq!(eps0, 0.25, epsilon = 1e-12)
            }
            other => panic!("expected EpsilonTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn compile_zero_function_degenerates() {
        let zero = crate::function::Zero(2);
        let cfg = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), Some(0.1)).unwrap();
        let out = compile(&zero, &cfg).unwrap();
        let stats = out.net.stats();
        assert_eq!(stats.size, 0);
        assert_eq!(stats.depth, 2);
        assert_eq!(out.net.value(&[0.3, 0.7]), 0.0);
    }

    #[test]
    fn compile_matches_expansion_within_delta_budget() {
        // The compiled net is the expansion with hats replaced by delta-accurate
        // gadgets; pointwise they stay within sum |lambda| * delta.
        let f = crate::corpus::poly_tent(2).unwrap();
        let cfg = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), Some(0.2)).unwrap();
        let out = compile(&f, &cfg).unwrap();
        let lambda_sum: f64 = out.expansion.terms().map(|(_, c)| c.abs()).sum();
        let budget = lambda_sum * out.plan.delta + 1e-12;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen()).collect();
            let diff = (out.net.value(&x) - out.expansion.value(&x)).abs();
            assert!(diff <= budget, "pointwise gap {diff} over budget {budget}");
        }
    }

    #[test]
    fn compile_architecture_is_function_independent() {
        let cfg = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), Some(0.2)).unwrap();
        let f = crate::corpus::poly_tent(2).unwrap();
        // The series must reach beyond the compile level: surpluses of a
        // function that is already piecewise linear at the stencil scale are
        // structurally zero and would change the sparsity pattern.
        let g = crate::corpus::truncated_series(2, 2.0, 6, 77).unwrap();
        let a = compile(&f, &cfg).unwrap().net;
        let b = compile(&g, &cfg).unwrap().net;
        assert_eq!(a.stats().dims, b.stats().dims);
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            let pa: Vec<(u32, u32)> = la.weights().iter().map(|&(r, c, _)| (r, c)).collect();
            let pb: Vec<(u32, u32)> = lb.weights().iter().map(|&(r, c, _)| (r, c)).collect();
            assert_eq!(pa, pb, "sparsity patterns differ");
            let ba: Vec<u32> = la.bias().iter().map(|&(r, _)| r).collect();
            let bb: Vec<u32> = lb.bias().iter().map(|&(r, _)| r).collect();
            assert_eq!(ba, bb);
        }
    }

    #[test]
    fn compile_narrow_matches_wide_output() {
        let f = crate::corpus::poly_tent(2).unwrap();
        let cfg = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), Some(0.24)).unwrap();
        let wide = compile(&f, &cfg).unwrap();
        let narrow = compile_narrow(&f, &cfg).unwrap();
        assert!(narrow.net.stats().width <= wide.net.stats().width);
        assert!(narrow.net.depth() >= wide.net.depth());
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let x: Vec<f64> = (0..2).map(|_| rng.gen()).collect();
            let a = wide.net.value(&x);
            let b = narrow.net.value(&x);
            assert!(
                (a - b).abs() <= 1e-9 * (1.0 + a.abs()),
                "narrow/wide mismatch at {x:?}: {a} vs {b}"
            );
        }
    }
}
