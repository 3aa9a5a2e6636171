//! Python bindings: expose the index sets, expansions, networks, and the
//! compiler so experiments can be scripted from Python.

use fabernet::constructors;
use fabernet::corpus;
use fabernet::faber::{read_expansion, write_expansion, FaberExpansion};
use fabernet::function::Differentiable;
use fabernet::index;
use fabernet::metrics::{self, QuadratureSpec, Scheme};
use fabernet::relunet::{read_network, write_network, ReluNetwork};
use fabernet::sampling::{self, ApproxConfig, Lp};
use fabernet::Function;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::fs::File;
use std::io::{BufReader, BufWriter};

fn err(e: fabernet::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_p(p: &str) -> PyResult<Lp> {
    p.parse::<Lp>().map_err(err)
}

fn scheme_from(scheme: &str, n: u32, samples: u64, seed: u64) -> PyResult<Scheme> {
    match scheme {
        "tensor" => Ok(Scheme::TensorMidpoint { n }),
        "mc" => Ok(Scheme::MonteCarlo { n: samples, seed }),
        other => Err(PyValueError::new_err(format!(
            "unknown scheme '{other}' (tensor|mc)"
        ))),
    }
}

/// A registered test function with an analytic gradient.
#[pyclass(name = "CorpusFunction")]
struct PyCorpusFunction {
    inner: corpus::CorpusFunction,
}

#[pymethods]
impl PyCorpusFunction {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id().to_string()
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check(&x)?;
        Ok(self.inner.value(&x))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.gradient(&x))
    }

    /// Empirical lower estimate of the mixed Hölder-Zygmund seminorm.
    #[pyo3(signature = (alpha, budget = 100_000))]
    fn seminorm_lower_bound(&self, alpha: f64, budget: u64) -> f64 {
        metrics::mixed_holder_seminorm_lb(&self.inner, alpha, budget)
    }
}

impl PyCorpusFunction {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!(
                "expected {} coordinates, got {}",
                self.inner.dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

/// A finite hat-function expansion.
#[pyclass(name = "Expansion")]
struct PyExpansion {
    inner: FaberExpansion,
}

#[pymethods]
impl PyExpansion {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_terms(&self) -> usize {
        self.inner.num_terms()
    }

    fn value(&self, x: Vec<f64>) -> f64 {
        self.inner.value(&x)
    }

    fn gradient(&self, x: Vec<f64>) -> Vec<f64> {
        self.inner.gradient(&x)
    }

    /// Terms as (levels, positions, coefficient) triples in canonical order.
    fn terms(&self) -> Vec<(Vec<i32>, Vec<u64>, f64)> {
        self.inner
            .terms()
            .map(|(idx, c)| {
                (
                    idx.level().levels().to_vec(),
                    idx.position().positions().to_vec(),
                    c,
                )
            })
            .collect()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let f = BufWriter::new(File::create(path)?);
        write_expansion(&self.inner, f).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = BufReader::new(File::open(path)?);
        Ok(PyExpansion {
            inner: read_expansion(f).map_err(err)?,
        })
    }
}

/// A sparse deep ReLU network.
#[pyclass(name = "Network")]
struct PyNetwork {
    inner: ReluNetwork,
}

#[pymethods]
impl PyNetwork {
    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&x).map_err(err)
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad(&x).map_err(err)
    }

    /// {"W": size, "L": depth, "Nw": width, "dims": [...]}.
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.stats();
        let dict = pyo3::types::PyDict::new_bound(py);
        dict.set_item("W", s.size)?;
        dict.set_item("L", s.depth)?;
        dict.set_item("Nw", s.width)?;
        dict.set_item("dims", s.dims)?;
        Ok(dict.into_any())
    }

    /// Certified upper bound on |output| over the unit cube.
    fn output_bound(&self) -> f64 {
        self.inner.output_bound()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let f = BufWriter::new(File::create(path)?);
        write_network(&self.inner, f).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = BufReader::new(File::open(path)?);
        Ok(PyNetwork {
            inner: read_network(f).map_err(err)?,
        })
    }
}

/// Corpus ids known to `corpus_fn()`.
#[pyfunction]
fn corpus_ids() -> Vec<String> {
    corpus::list().iter().map(|e| e.id.to_string()).collect()
}

/// Resolve a corpus function at the given dimension and smoothness.
#[pyfunction]
#[pyo3(signature = (id, dim, alpha = 2.0))]
fn corpus_fn(id: &str, dim: usize, alpha: f64) -> PyResult<PyCorpusFunction> {
    Ok(PyCorpusFunction {
        inner: corpus::resolve(id, dim, alpha).map_err(err)?,
    })
}

/// Level multi-indices of the notched sparse-grid set.
#[pyfunction]
fn notched_indices(dim: usize, beta: f64, m: u32) -> PyResult<Vec<Vec<i32>>> {
    let set = index::enumerate_notched(dim, beta, m).map_err(err)?;
    Ok(set.entries().iter().map(|k| k.levels().to_vec()).collect())
}

/// Dyadic grid points of the notched set, as floats.
#[pyfunction]
fn notched_grid(dim: usize, beta: f64, m: u32) -> PyResult<Vec<Vec<f64>>> {
    let set = index::enumerate_notched(dim, beta, m).map_err(err)?;
    let grid = index::grid_points(&set).map_err(err)?;
    Ok((0..grid.len()).map(|i| grid.point_f64(i)).collect())
}

/// The sampling operator as an expansion.
#[pyfunction]
#[pyo3(signature = (func, dim, alpha, beta, m, p = "2"))]
fn sample(func: &str, dim: usize, alpha: f64, beta: f64, m: u32, p: &str) -> PyResult<PyExpansion> {
    let cfg = ApproxConfig::new(dim, alpha, beta, parse_p(p)?, None).map_err(err)?;
    let f = corpus::resolve(func, dim, alpha).map_err(err)?;
    Ok(PyExpansion {
        inner: sampling::build_r(&f, &cfg, m).map_err(err)?,
    })
}

/// Closed-form error budget of the sampling operator.
#[pyfunction]
#[pyo3(signature = (dim, alpha, beta, m, p = "2"))]
fn recovery_error_bound(dim: usize, alpha: f64, beta: f64, m: u32, p: &str) -> PyResult<f64> {
    let cfg = ApproxConfig::new(dim, alpha, beta, parse_p(p)?, None).map_err(err)?;
    Ok(sampling::recovery_error_bound(&cfg, m))
}

/// Derived compilation parameters as a dict.
#[pyfunction]
#[pyo3(signature = (dim, alpha, beta, eps, p = "2"))]
fn plan<'py>(
    py: Python<'py>,
    dim: usize,
    alpha: f64,
    beta: f64,
    eps: f64,
    p: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ApproxConfig::new(dim, alpha, beta, parse_p(p)?, Some(eps)).map_err(err)?;
    let plan = constructors::plan(&cfg).map_err(err)?;
    let dict = pyo3::types::PyDict::new_bound(py);
    dict.set_item("m", plan.m)?;
    dict.set_item("delta", plan.delta)?;
    dict.set_item("eps0", plan.eps0)?;
    dict.set_item("B", plan.b)?;
    dict.set_item("K1", plan.k1)?;
    Ok(dict.into_any())
}

/// Compile a corpus function into a deep ReLU network.
#[pyfunction]
#[pyo3(signature = (func, dim, alpha, beta, eps, p = "2", narrow = false))]
fn compile(
    func: &str,
    dim: usize,
    alpha: f64,
    beta: f64,
    eps: f64,
    p: &str,
    narrow: bool,
) -> PyResult<PyNetwork> {
    let cfg = ApproxConfig::new(dim, alpha, beta, parse_p(p)?, Some(eps)).map_err(err)?;
    let f = corpus::resolve(func, dim, alpha).map_err(err)?;
    let net = if narrow {
        constructors::compile_narrow(&f, &cfg).map_err(err)?.net
    } else {
        constructors::compile(&f, &cfg).map_err(err)?.net
    };
    Ok(PyNetwork { inner: net })
}

/// Dispatches a Python object to its differentiable view.
fn with_diff<R>(
    obj: &Bound<'_, PyAny>,
    f: &dyn Fn(&dyn Differentiable) -> PyResult<R>,
) -> PyResult<R> {
    if let Ok(func) = obj.downcast::<PyCorpusFunction>() {
        let guard = func.borrow();
        return f(&guard.inner);
    }
    if let Ok(exp) = obj.downcast::<PyExpansion>() {
        let guard = exp.borrow();
        return f(&guard.inner);
    }
    if let Ok(net) = obj.downcast::<PyNetwork>() {
        let guard = net.borrow();
        return f(&guard.inner);
    }
    Err(PyValueError::new_err(
        "expected a CorpusFunction, Expansion, or Network",
    ))
}

/// Homogeneous Sobolev seminorm distance between two objects (corpus
/// functions, expansions, or networks). Returns (value, std_error).
#[pyfunction]
#[pyo3(signature = (lhs, rhs, p = "2", scheme = "tensor", n = 64, samples = 1_000_000, seed = 42))]
#[allow(clippy::too_many_arguments)]
fn w1p_error(
    lhs: &Bound<'_, PyAny>,
    rhs: &Bound<'_, PyAny>,
    p: &str,
    scheme: &str,
    n: u32,
    samples: u64,
    seed: u64,
) -> PyResult<(f64, Option<f64>)> {
    let spec = QuadratureSpec {
        scheme: scheme_from(scheme, n, samples, seed)?,
        p: parse_p(p)?,
    };
    with_diff(lhs, &|a| {
        with_diff(rhs, &|b| {
            let m = metrics::w1p_error(a, b, &spec).map_err(err)?;
            Ok((m.value, m.std_error))
        })
    })
}

/// All three distances (L_p, homogeneous W^1_p, sup) between two objects,
/// as a dict.
#[pyfunction]
#[pyo3(signature = (lhs, rhs, p = "2", scheme = "tensor", n = 64, samples = 1_000_000, seed = 42))]
#[allow(clippy::too_many_arguments)]
fn error_report<'py>(
    py: Python<'py>,
    lhs: &Bound<'_, PyAny>,
    rhs: &Bound<'_, PyAny>,
    p: &str,
    scheme: &str,
    n: u32,
    samples: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = QuadratureSpec {
        scheme: scheme_from(scheme, n, samples, seed)?,
        p: parse_p(p)?,
    };
    let report = with_diff(lhs, &|a| {
        with_diff(rhs, &|b| metrics::error_report(a, b, &spec).map_err(err))
    })?;
    let dict = pyo3::types::PyDict::new_bound(py);
    dict.set_item("lp", report.value_lp.value)?;
    dict.set_item("w1p", report.value_w1p.value)?;
    dict.set_item("sup", report.value_sup.value)?;
    dict.set_item("std_error", report.value_w1p.std_error)?;
    dict.set_item("quadrature", report.quadrature)?;
    Ok(dict.into_any())
}

#[pymodule]
fn fabernet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpusFunction>()?;
    m.add_class::<PyExpansion>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(corpus_ids, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_fn, m)?)?;
    m.add_function(wrap_pyfunction!(notched_indices, m)?)?;
    m.add_function(wrap_pyfunction!(notched_grid, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_error_bound, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    m.add_function(wrap_pyfunction!(w1p_error, m)?)?;
    m.add_function(wrap_pyfunction!(error_report, m)?)?;
    Ok(())
}
