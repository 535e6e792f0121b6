//! Solver toolkit for assortment optimization and joint assortment-pricing
//! under generalized nested logit (GNL) demand and finite mixtures thereof.
//!
//! The crate is organized in layers:
//!
//! * [`choice_core`] - model data and all forward evaluation formulas
//!   (inclusive values, choice probabilities, expected revenue, the
//!   transformed minimization objective, and the set-function forms used
//!   by the cut machinery).
//! * [`reformulate`] - transformed objective constants, auxiliary variable
//!   bounds, and the linear cut families (outer approximation, submodular /
//!   supermodular, McCormick).
//! * [`milp_kernel`] - a self-contained bounded-variable simplex and a
//!   branch-and-bound engine with a lazy cut callback.
//! * [`assort_solver`] - the exact assortment algorithms built on the
//!   kernel: bisection over the fractional objective, the log-transform
//!   convex branch-and-cut, the multi-segment extension, and the
//!   zero-opt-out variant.
//! * [`pricing`] - discrete-price expansion, adaptive piecewise-linear
//!   approximation of the exponential, and the continuous-price pipeline.
//! * [`oracle`] - brute-force ground truth at desk scale.
//! * [`instances`] - seeded instance generation and JSON interchange.

pub mod assort_solver;
pub mod choice_core;
pub mod instances;
pub mod milp_kernel;
pub mod oracle;
pub mod pricing;
pub mod reformulate;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid model: {0:?}")]
    InvalidModel(Vec<String>),
    #[error("degenerate nest {nest}: inclusive value {value:e} is too small to exponentiate")]
    DegenerateNest { nest: usize, value: f64 },
    #[error("beta {beta} does not strictly exceed the maximum revenue {max_r}")]
    BetaTooSmall { beta: f64, max_r: f64 },
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),
    #[error("unsupported constraint: {0}")]
    UnsupportedConstraint(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
