//! Gaussian process prior and posterior machinery.

mod kernel;
mod mle;
mod posterior;

pub use kernel::{KernelSpec, MaternNu};
pub use mle::{log_marginal_likelihood, mle_fit, MeanModel, MleConfig, MleFit, NoiseModel};
pub use posterior::{Design, GpPosterior};
