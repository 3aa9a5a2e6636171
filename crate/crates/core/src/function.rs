//! Scalar function oracles on the unit cube.

/// A real-valued function on `[0,1]^d` that can be sampled pointwise.
///
/// Implementors must be `Sync` so quadrature can fan evaluations out over a
/// thread pool.
pub trait Function: Sync {
    fn dim(&self) -> usize;

    /// Value at `x`; `x.len()` must equal `dim()`.
    fn value(&self, x: &[f64]) -> f64;
}

/// A function that also exposes an (almost-everywhere) gradient.
pub trait Differentiable: Function {
    /// Writes the gradient at `x` into `out` (`out.len() == dim()`).
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.gradient_into(x, &mut out);
        out
    }
}

/// Adapter turning a closure (plus, optionally, a gradient closure) into an oracle.
pub struct FnOracle<F, G = fn(&[f64], &mut [f64])> {
    dim: usize,
    value: F,
    gradient: Option<G>,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnOracle<F> {
    pub fn new(dim: usize, value: F) -> Self {
        FnOracle {
            dim,
            value,
            gradient: None,
        }
    }
}

impl<F, G> FnOracle<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn with_gradient(dim: usize, value: F, gradient: G) -> Self {
        FnOracle {
            dim,
            value,
            gradient: Some(gradient),
        }
    }
}

impl<F, G> Function for FnOracle<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        (self.value)(x)
    }
}

impl<F, G> Differentiable for FnOracle<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let g = self
            .gradient
            .as_ref()
            .expect("FnOracle built without a gradient");
        g(x, out);
    }
}

/// The zero function, handy as the reference side of norm measurements.
pub struct Zero(pub usize);

impl Function for Zero {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }
}

impl Differentiable for Zero {
    fn gradient_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

impl<T: Function + ?Sized> Function for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
}

impl<T: Differentiable + ?Sized> Differentiable for &T {
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient_into(x, out)
    }
}
