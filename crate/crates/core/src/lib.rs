//! Sparse-grid Faber interpolation and explicit deep ReLU network compilation.
//!
//! The crate recovers multivariate functions of Hölder-Zygmund mixed smoothness
//! on the unit cube from their values on "notched" sparse grids, and compiles the
//! resulting hierarchical hat-function expansion into an explicit deep ReLU
//! network whose output approximates the function in the homogeneous Sobolev
//! seminorm. The pipeline is
//!
//! ```text
//! index      enumerate notched/Smolyak multi-index sets and dyadic sparse grids
//! faber      hat basis functions, hierarchical-surplus coefficients
//! sampling   the interpolatory sampling operator R_beta(m, f) and its error budget
//! relunet    sparse network IR: evaluation, gradients, combinators, accounting
//! constructors  squaring / product / hat gadgets and the network compiler
//! metrics    L_p and homogeneous W^1_p quadrature, mixed-seminorm estimation
//! corpus     test functions with certified unit-ball membership
//! cli        experiment sweeps and the bound-verification harness
//! ```
//!
//! See the `fabernet` binary for the command-line front end.
//!
//! # Example
//!
//! Compile a test function into a network and measure the achieved error:
//!
//! ```
//! use fabernet::constructors::compile;
//! use fabernet::corpus::poly_tent;
//! use fabernet::metrics::{w1p_error, QuadratureSpec};
//! use fabernet::{ApproxConfig, Lp};
//!
//! let f = poly_tent(2)?;
//! let cfg = ApproxConfig::new(2, 2.0, 3.0, Lp::P(2.0), Some(0.2))?;
//! let out = compile(&f, &cfg)?;
//! let spec = QuadratureSpec::tensor(128, Lp::P(2.0));
//! let err = w1p_error(&f, &out.net, &spec)?.value;
//! assert!(err <= 0.2);
//! # Ok::<(), fabernet::Error>(())
//! ```

pub mod cli;
pub mod constructors;
pub mod corpus;
pub mod error;
pub mod faber;
pub mod function;
pub mod index;
pub mod metrics;
pub mod relunet;
pub mod sampling;

pub use error::{Error, Result};
pub use function::{Differentiable, FnOracle, Function};
pub use sampling::{ApproxConfig, Lp};
