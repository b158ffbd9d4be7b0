//! Excursion set estimation with Gaussian process models.
//!
//! The crate covers the full pipeline for estimating `{x : f(x) in T}` for an
//! expensive function `f` observed at a few design points:
//!
//! * [`gp`]: Matérn tensor-product kernels, exact posterior conditioning, rank-q
//!   kriging updates and maximum-likelihood hyperparameter fitting.
//! * [`randfield`]: conditional simulation, Latin hypercube and Sobol designs.
//! * [`excursion`]: coverage probabilities, Vorob'ev quantiles and the
//!   associated uncertainty functionals on a weighted discretization.
//! * [`conservative`]: conservative estimates built from Vorob'ev quantiles via
//!   Monte Carlo orthant probabilities.
//! * [`criteria`]: closed-form one-step lookahead SUR criteria and baselines.
//! * [`optimizer`]: multistart Nelder–Mead batch selection.
//! * [`harness`]: strategy loops, benchmarks, reports and the CLI plumbing.

pub mod cli;
pub mod conservative;
pub mod criteria;
pub mod domain;
pub mod error;
pub mod excursion;
pub mod gp;
pub mod harness;
mod linalg;
pub mod normal;
pub mod optimizer;
pub mod randfield;

pub use domain::BoxDomain;
pub use error::{Error, Result};
