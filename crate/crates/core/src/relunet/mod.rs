//! Sparse feed-forward ReLU network intermediate representation.
//!
//! Layers store only nonzero weights as coordinate triplets, so the stored
//! entry count is the network size `W`. Combinators (parallelization with
//! depth padding, collation chaining, special-to-standard conversion) produce
//! new immutable networks with explicit size and depth accounting.

mod serialize;

pub use serialize::{read_network, write_network};

use crate::error::{Error, Result};
use crate::function::{Differentiable, Function};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One affine layer: `y = W z + b` with `W` sparse and `b` sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    /// `(row, col, weight)` sorted by `(row, col)`; weights are finite and nonzero.
    weights: Vec<(u32, u32, f64)>,
    /// `(row, bias)` sorted by row; biases are finite and nonzero.
    bias: Vec<(u32, f64)>,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        mut weights: Vec<(u32, u32, f64)>,
        mut bias: Vec<(u32, f64)>,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        weights.sort_unstable_by_key(|&(r, c, _)| (r, c));
        bias.sort_unstable_by_key(|&(r, _)| r);
        for w in weights.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::invalid("duplicate weight entry"));
            }
        }
        for b in bias.windows(2) {
            if b[0].0 == b[1].0 {
                return Err(Error::invalid("duplicate bias entry"));
            }
        }
        for &(r, c, w) in &weights {
            if r as usize >= out_dim || c as usize >= in_dim {
                return Err(Error::invalid("weight index out of range"));
            }
            if w == 0.0 || !w.is_finite() {
                return Err(Error::invalid(
                    "explicit zero or non-finite weights are not stored",
                ));
            }
        }
        for &(r, b) in &bias {
            if r as usize >= out_dim {
                return Err(Error::invalid("bias index out of range"));
            }
            if b == 0.0 || !b.is_finite() {
                return Err(Error::invalid(
                    "explicit zero or non-finite biases are not stored",
                ));
            }
        }
        Ok(Layer {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[(u32, u32, f64)] {
        &self.weights
    }

    pub fn bias(&self) -> &[(u32, f64)] {
        &self.bias
    }

    pub fn nnz(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// `out = W z + b`; `out` is overwritten.
    fn apply(&self, z: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.out_dim, 0.0);
        for &(r, b) in &self.bias {
            out[r as usize] = b;
        }
        for &(r, c, w) in &self.weights {
            out[r as usize] += w * z[c as usize];
        }
    }
}

/// Depth, size, width, and layer dimensions of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStats {
    pub depth: usize,
    pub size: usize,
    pub width: usize,
    pub dims: Vec<usize>,
}

fn stats_of_layers(input_dim: usize, layers: &[Layer]) -> NetworkStats {
    let mut dims = Vec::with_capacity(layers.len() + 1);
    dims.push(input_dim);
    for l in layers {
        dims.push(l.out_dim);
    }
    NetworkStats {
        depth: layers.len(),
        size: layers.iter().map(Layer::nnz).sum(),
        width: dims.iter().copied().max().unwrap_or(0),
        dims,
    }
}

/// A deep ReLU network with scalar output: hidden layers apply the ReLU
/// componentwise, the final layer is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    layers: Vec<Layer>,
}

impl ReluNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::invalid("a network needs at least 2 layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::invalid("layer dimensions do not chain"));
            }
        }
        if layers.last().unwrap().out_dim != 1 {
            return Err(Error::invalid("output dimension must be 1"));
        }
        Ok(ReluNetwork { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn stats(&self) -> NetworkStats {
        stats_of_layers(self.input_dim(), &self.layers)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Exact forward pass.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.value(x))
    }

    /// Almost-everywhere gradient by reverse accumulation with the convention
    /// `relu'(0) = 0`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.gradient(x))
    }

    fn forward(&self, x: &[f64], keep_activations: bool) -> (f64, Vec<Vec<f64>>) {
        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(if keep_activations { last } else { 0 });
        let mut z = x.to_vec();
        let mut buf = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&z, &mut buf);
            if i < last {
                for v in buf.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut z, &mut buf);
            if keep_activations && i < last {
                acts.push(z.clone());
            }
        }
        (z[0], acts)
    }

    /// Guaranteed bound on `sup_{x in [0,1]^d} |output|` by layerwise interval
    /// propagation.
    pub fn output_bound(&self) -> f64 {
        let d = self.input_dim();
        let mut lo = vec![0.0f64; d];
        let mut hi = vec![1.0f64; d];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (nlo, nhi) = interval_apply(layer, &lo, &hi, i < last);
            lo = nlo;
            hi = nhi;
        }
        lo[0].abs().max(hi[0].abs())
    }
}

fn interval_apply(layer: &Layer, lo: &[f64], hi: &[f64], relu: bool) -> (Vec<f64>, Vec<f64>) {
    let mut nlo = vec![0.0f64; layer.out_dim];
    let mut nhi = vec![0.0f64; layer.out_dim];
    for &(r, b) in &layer.bias {
        nlo[r as usize] = b;
        nhi[r as usize] = b;
    }
    for &(r, c, w) in &layer.weights {
        let (a, b) = (w * lo[c as usize], w * hi[c as usize]);
        nlo[r as usize] += a.min(b);
        nhi[r as usize] += a.max(b);
    }
    if relu {
        for v in nlo.iter_mut() {
            *v = v.max(0.0);
        }
        for v in nhi.iter_mut() {
            *v = v.max(0.0);
        }
    }
    (nlo, nhi)
}

impl Function for ReluNetwork {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim());
        self.forward(x, false).0
    }
}

impl Differentiable for ReluNetwork {
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input_dim());
        let last = self.layers.len() - 1;
        let (_, acts) = self.forward(x, true);
        // Reverse pass: adjoint of the scalar output is 1.
        let mut adj = vec![1.0f64];
        let mut prev = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            prev.clear();
            prev.resize(layer.in_dim, 0.0);
            for &(r, c, w) in &layer.weights {
                let mut a = adj[r as usize];
                if a == 0.0 {
                    continue;
                }
                if i < last && acts[i][r as usize] <= 0.0 {
                    continue; // inactive unit: relu'(t) = 0 for t <= 0
                }
                a *= w;
                prev[c as usize] += a;
            }
            std::mem::swap(&mut adj, &mut prev);
        }
        out.copy_from_slice(&adj);
    }
}

/// Upper bound of the parallelization accounting:
/// `sum_j W_j + sum_{j: L_j < L} (L - L_j + 2)`.
pub fn parallelize_size_bound(nets: &[ReluNetwork]) -> usize {
    let depth = nets.iter().map(ReluNetwork::depth).max().unwrap_or(0);
    nets.iter()
        .map(|n| {
            let w = n.stats().size;
            if n.depth() < depth {
                w + depth - n.depth() + 2
            } else {
                w
            }
        })
        .sum()
}

/// Pads a network to `target` layers without changing its output on the input
/// domain: the old output layer is shifted up by `bound` (making it
/// nonnegative, hence transparent to the ReLU), carried through identity
/// layers, and shifted back down in the new output layer.
fn pad_to_depth(net: &ReluNetwork, target: usize, bound: f64) -> Result<ReluNetwork> {
    let depth = net.depth();
    if depth == target {
        return Ok(net.clone());
    }
    let mut layers = net.layers[..depth - 1].to_vec();
    let old_out = &net.layers[depth - 1];
    let mut bias = old_out.bias.to_vec();
    match bias.iter_mut().find(|(r, _)| *r == 0) {
        Some(entry) => entry.1 += bound,
        None => bias.push((0, bound)),
    }
    bias.retain(|&(_, b)| b != 0.0);
    layers.push(Layer::new(
        old_out.in_dim,
        1,
        old_out.weights.clone(),
        bias,
    )?);
    for _ in 0..(target - depth - 1) {
        layers.push(Layer::new(1, 1, vec![(0, 0, 1.0)], vec![])?);
    }
    let final_bias = if bound == 0.0 {
        vec![]
    } else {
        vec![(0, -bound)]
    };
    layers.push(Layer::new(1, 1, vec![(0, 0, 1.0)], final_bias)?);
    ReluNetwork::new(layers)
}

/// Deterministic probe points used to sanity-check claimed output bounds.
fn probe_points(d: usize) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    if d <= 10 {
        for mask in 0..(1u32 << d) {
            pts.push((0..d).map(|i| ((mask >> i) & 1) as f64).collect());
        }
    }
    pts.push(vec![0.5; d]);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b9);
    for _ in 0..32 {
        pts.push((0..d).map(|_| rng.gen()).collect());
    }
    pts
}

/// Combines scalar networks into one with output `sum_j coeff_j N_j(x)` on
/// `[0,1]^d`. Shorter nets are depth-padded using their certified output
/// bounds; equal-depth blocks merge without padding entries.
pub fn parallelize(
    nets: &[ReluNetwork],
    coeffs: &[f64],
    bounds: &[f64],
) -> Result<ReluNetwork> {
    if nets.is_empty() {
        return Err(Error::invalid("parallelize needs at least one network"));
    }
    if nets.len() != coeffs.len() || nets.len() != bounds.len() {
        return Err(Error::invalid(
            "networks, coefficients, and bounds must have equal lengths",
        ));
    }
    let d = nets[0].input_dim();
    for n in nets {
        if n.input_dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: n.input_dim(),
            });
        }
    }
    let probes = probe_points(d);
    for (j, (&m, net)) in bounds.iter().zip(nets).enumerate() {
        if !(m.is_finite() && m >= 0.0) {
            return Err(Error::invalid(format!("bound {m} for net {j} invalid")));
        }
        for x in &probes {
            let v = net.value(x).abs();
            if v > m * (1.0 + 1e-12) + 1e-12 {
                return Err(Error::invalid(format!(
                    "bound {m} for net {j} is below a sampled output {v}"
                )));
            }
        }
    }

    let depth = nets.iter().map(ReluNetwork::depth).max().unwrap();
    let padded: Vec<ReluNetwork> = nets
        .iter()
        .zip(bounds)
        .map(|(n, &m)| pad_to_depth(n, depth, m))
        .collect::<Result<_>>()?;

    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let mut weights = Vec::new();
        let mut bias = Vec::new();
        let last = l + 1 == depth;
        let mut row_off = 0u32;
        let mut col_off = 0u32;
        let (mut in_dim, mut out_dim) = (0usize, 0usize);
        let mut out_bias = 0.0;
        for (net, &lambda) in padded.iter().zip(coeffs) {
            let layer = &net.layers[l];
            if last {
                for &(_, c, w) in &layer.weights {
                    let w = lambda * w;
                    if w != 0.0 {
                        weights.push((0, col_off + c, w));
                    }
                }
                for &(_, b) in &layer.bias {
                    out_bias += lambda * b;
                }
                in_dim += layer.in_dim;
                out_dim = 1;
            } else {
                for &(r, c, w) in &layer.weights {
                    // The first layer reads the shared input.
                    let c = if l == 0 { c } else { col_off + c };
                    weights.push((row_off + r, c, w));
                }
                for &(r, b) in &layer.bias {
                    bias.push((row_off + r, b));
                }
                in_dim = if l == 0 { d } else { in_dim + layer.in_dim };
                out_dim += layer.out_dim;
            }
            row_off += layer.out_dim as u32;
            col_off += layer.in_dim as u32;
        }
        if last && out_bias != 0.0 {
            bias.push((0, out_bias));
        }
        layers.push(Layer::new(in_dim, out_dim, weights, bias)?);
    }
    ReluNetwork::new(layers)
}

/// A network with `d` activation-free source rows (copying the input) and one
/// activation-free collation row (accumulating partial sums) in every hidden
/// layer. Row layout per hidden layer: `[0..d)` source, middle compute, last
/// collation.
#[derive(Debug, Clone)]
pub struct SpecialNetwork {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl SpecialNetwork {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let net = SpecialNetwork { input_dim, layers };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let d = self.input_dim;
        if self.layers.len() < 2 {
            return Err(Error::invalid("a network needs at least 2 layers"));
        }
        if self.layers[0].in_dim != d {
            return Err(Error::invalid("first layer must read the input"));
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::invalid("layer dimensions do not chain"));
            }
        }
        let last = self.layers.len() - 1;
        if self.layers[last].out_dim != 1 {
            return Err(Error::invalid("output dimension must be 1"));
        }
        for (i, layer) in self.layers[..last].iter().enumerate() {
            if layer.out_dim < d + 1 {
                return Err(Error::invalid(
                    "hidden layers need source rows plus a collation row",
                ));
            }
            let col_row = (layer.out_dim - 1) as u32;
            // Source rows copy the input forward.
            for row in 0..d as u32 {
                let entries: Vec<_> = layer
                    .weights
                    .iter()
                    .filter(|&&(r, _, _)| r == row)
                    .collect();
                let has_bias = layer.bias.iter().any(|&(r, _)| r == row);
                if entries.len() != 1 || has_bias {
                    return Err(Error::invalid("source rows must copy one input"));
                }
                let &&(_, c, w) = entries.first().unwrap();
                if c != row || w != 1.0 {
                    return Err(Error::invalid("source rows must copy with weight 1"));
                }
            }
            // The collation channel never feeds forward into non-collation rows.
            if i > 0 {
                let prev_col = (layer.in_dim - 1) as u32;
                for &(r, c, _) in &layer.weights {
                    if c == prev_col && r != col_row {
                        return Err(Error::invalid(
                            "collation channel feeds a non-collation row",
                        ));
                    }
                }
                // Accumulation: if the collation row reads the previous
                // collation, it must do so with weight 1.
                if let Some(&(_, _, w)) = layer
                    .weights
                    .iter()
                    .find(|&&(r, c, _)| r == col_row && c == prev_col)
                {
                    if w != 1.0 {
                        return Err(Error::invalid("collation chain weight must be 1"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn stats(&self) -> NetworkStats {
        stats_of_layers(self.input_dim, &self.layers)
    }

    fn is_plain_row(&self, layer_idx: usize, row: usize) -> bool {
        // Rows with the activation: everything except sources and collation.
        let layer = &self.layers[layer_idx];
        row >= self.input_dim && row + 1 < layer.out_dim
    }

    /// Forward pass under the special semantics: the activation is applied to
    /// compute rows only.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut z = x.to_vec();
        let mut buf = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&z, &mut buf);
            if i < last {
                for (row, v) in buf.iter_mut().enumerate() {
                    if self.is_plain_row(i, row) && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            std::mem::swap(&mut z, &mut buf);
        }
        Ok(z[0])
    }

    /// Interval lower bounds of each hidden layer's collation row.
    fn collation_lower_bounds(&self) -> Vec<f64> {
        let d = self.input_dim;
        let mut lo = vec![0.0f64; d];
        let mut hi = vec![1.0f64; d];
        let last = self.layers.len() - 1;
        let mut out = Vec::with_capacity(last);
        for (i, layer) in self.layers[..last].iter().enumerate() {
            let (mut nlo, mut nhi) = interval_apply(layer, &lo, &hi, false);
            for row in 0..layer.out_dim {
                if self.is_plain_row(i, row) {
                    nlo[row] = nlo[row].max(0.0);
                    nhi[row] = nhi[row].max(0.0);
                }
            }
            out.push(nlo[layer.out_dim - 1]);
            lo = nlo;
            hi = nhi;
        }
        out
    }

    /// Converts to a standard ReLU network with identical output on `[0,1]^d`,
    /// preserving depth and width exactly.
    ///
    /// Source rows are nonnegative on the cube, so the activation is
    /// transparent there; the collation channel is shifted up by certified
    /// constants `c_l` (from interval propagation) and shifted back at the
    /// output.
    pub fn to_standard(&self) -> Result<ReluNetwork> {
        let lows = self.collation_lower_bounds();
        let last = self.layers.len() - 1;
        // Per-layer shifts: within a chained run the shift is carried forward
        // and may only grow, so every shifted collation value stays
        // nonnegative and the activation is transparent on it.
        let mut shifts = Vec::with_capacity(lows.len());
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let weights = layer.weights.clone();
            let mut bias = layer.bias.to_vec();
            if i < last {
                let lo = lows[i];
                if !lo.is_finite() {
                    return Err(Error::invalid(
                        "collation shift could not be certified (unbounded interval)",
                    ));
                }
                let col_row = (layer.out_dim - 1) as u32;
                let chained = i > 0
                    && layer
                        .weights
                        .iter()
                        .any(|&(r, c, _)| r == col_row && c == (layer.in_dim - 1) as u32);
                let carried: f64 = if chained { shifts[i - 1] } else { 0.0 };
                let shift = carried.max(-lo).max(0.0);
                shifts.push(shift);
                let delta = shift - carried;
                if delta != 0.0 {
                    match bias.iter_mut().find(|(r, _)| *r == col_row) {
                        Some(entry) => entry.1 += delta,
                        None => bias.push((col_row, delta)),
                    }
                    bias.retain(|&(_, b)| b != 0.0);
                }
            } else if !shifts.is_empty() {
                // Undo the accumulated shift where the output reads the collation.
                let prev_col = (layer.in_dim - 1) as u32;
                let w_col: f64 = layer
                    .weights
                    .iter()
                    .filter(|&&(_, c, _)| c == prev_col)
                    .map(|&(_, _, w)| w)
                    .sum();
                let correction = w_col * shifts[last - 1];
                if correction != 0.0 {
                    match bias.iter_mut().find(|(r, _)| *r == 0) {
                        Some(entry) => entry.1 -= correction,
                        None => bias.push((0, -correction)),
                    }
                    bias.retain(|&(_, b)| b != 0.0);
                }
            }
            layers.push(Layer::new(layer.in_dim, layer.out_dim, weights, bias)?);
        }
        ReluNetwork::new(layers)
    }
}

/// Chains scalar networks through a special network: source channels carry the
/// input to every unit, the collation channel accumulates
/// `sum_j coeff_j N_j(x)`. Depth is `1 + sum_j (L_j - 1)`, width is
/// `d + 1 + max_j` unit width.
pub fn chain_with_collation(nets: &[ReluNetwork], coeffs: &[f64]) -> Result<SpecialNetwork> {
    if nets.is_empty() {
        return Err(Error::invalid("chain needs at least one network"));
    }
    if nets.len() != coeffs.len() {
        return Err(Error::invalid("networks and coefficients must pair up"));
    }
    let d = nets[0].input_dim();
    for n in nets {
        if n.input_dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: n.input_dim(),
            });
        }
    }

    // Hidden layer g hosts: source rows 0..d, the compute rows of one unit's
    // local layer, and the collation row. Unit j's output is folded into the
    // collation row of the layer right after its last hidden layer.
    struct Slot {
        unit: usize,
        local_layer: usize, // 1-based layer index inside the unit
    }
    let mut slots = Vec::new();
    for (j, net) in nets.iter().enumerate() {
        for l in 1..net.depth() {
            slots.push(Slot {
                unit: j,
                local_layer: l,
            });
        }
    }
    let hidden = slots.len();
    let mut layers: Vec<Layer> = Vec::with_capacity(hidden + 1);

    let unit_layer = |j: usize, l: usize| -> &Layer { &nets[j].layers[l - 1] };

    for (g, slot) in slots.iter().enumerate() {
        let local = unit_layer(slot.unit, slot.local_layer);
        let in_dim = if g == 0 {
            d
        } else {
            layers[g - 1].out_dim
        };
        let out_dim = d + local.out_dim + 1;
        let col_row = (out_dim - 1) as u32;
        let mut weights = Vec::new();
        let mut bias = Vec::new();
        // Source rows copy the input (the actual input at g = 0).
        for i in 0..d as u32 {
            weights.push((i, i, 1.0));
        }
        // Compute rows: the unit's layer, reading either the source rows (its
        // first layer) or the previous compute rows (offset d).
        let col_base = if slot.local_layer == 1 { 0 } else { d as u32 };
        for &(r, c, w) in &local.weights {
            weights.push((d as u32 + r, col_base + c, w));
        }
        for &(r, b) in &local.bias {
            bias.push((d as u32 + r, b));
        }
        // Collation row: chain the previous partial sum and, at a unit
        // boundary, fold in the finished unit's output layer.
        if g > 0 {
            weights.push((col_row, (in_dim - 1) as u32, 1.0));
        }
        if slot.local_layer == 1 && slot.unit > 0 {
            let prev_unit = slot.unit - 1;
            let lambda = coeffs[prev_unit];
            let out_layer = &nets[prev_unit].layers[nets[prev_unit].depth() - 1];
            let mut b_acc = 0.0;
            for &(_, c, w) in &out_layer.weights {
                let w = lambda * w;
                if w != 0.0 {
                    weights.push((col_row, d as u32 + c, w));
                }
            }
            for &(_, b) in &out_layer.bias {
                b_acc += lambda * b;
            }
            if b_acc != 0.0 {
                bias.push((col_row, b_acc));
            }
        }
        layers.push(Layer::new(in_dim, out_dim, weights, bias)?);
    }

    // Output layer: previous collation plus the last unit's output.
    let last_unit = nets.len() - 1;
    let lambda = coeffs[last_unit];
    let out_layer = &nets[last_unit].layers[nets[last_unit].depth() - 1];
    let in_dim = layers[hidden - 1].out_dim;
    let mut weights = vec![(0u32, (in_dim - 1) as u32, 1.0)];
    let mut bias = Vec::new();
    let mut b_acc = 0.0;
    for &(_, c, w) in &out_layer.weights {
        let w = lambda * w;
        if w != 0.0 {
            weights.push((0, d as u32 + c, w));
        }
    }
    for &(_, b) in &out_layer.bias {
        b_acc += lambda * b;
    }
    if b_acc != 0.0 {
        bias.push((0, b_acc));
    }
    layers.push(Layer::new(in_dim, 1, weights, bias)?);

    SpecialNetwork::new(d, layers)
}

/// Test support: seeded generators for small random networks.
#[doc(hidden)]
pub mod testing {
    use super::*;

    /// A random sparse network with the given input dimension.
    pub fn random_network(seed: u64, d: usize) -> ReluNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.gen_range(2..=5usize);
        let mut dims = vec![d];
        for _ in 1..depth {
            dims.push(rng.gen_range(1..=5usize));
        }
        dims.push(1);
        let mut layers = Vec::new();
        for l in 0..depth {
            let (nin, nout) = (dims[l], dims[l + 1]);
            let mut weights = Vec::new();
            let mut bias = Vec::new();
            for r in 0..nout as u32 {
                let mut any = false;
                for c in 0..nin as u32 {
                    if rng.gen::<f64>() < 0.7 {
                        let w = loop {
                            let w: f64 = rng.gen_range(-2.0..2.0);
                            if w != 0.0 {
                                break w;
                            }
                        };
                        weights.push((r, c, w));
                        any = true;
                    }
                }
                if !any {
                    // Keep every row connected so the net is not trivially cut.
                    weights.push((r, rng.gen_range(0..nin as u32), 1.0));
                }
                if rng.gen::<f64>() < 0.5 {
                    bias.push((r, rng.gen_range(-1.0..1.0f64)));
                }
            }
            bias.retain(|&(_, b)| b != 0.0);
            layers.push(Layer::new(nin, nout, weights, bias).unwrap());
        }
        ReluNetwork::new(layers).unwrap()
    }
}
