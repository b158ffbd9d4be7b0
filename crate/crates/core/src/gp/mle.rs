//! Maximum-likelihood estimation of the kernel hyperparameters.
//!
//! The process variance is profiled out whenever the noise is either zero or
//! expressed as a ratio to the process variance, so the search runs over log
//! lengthscales (and the log nugget ratio when noise is estimated).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::kernel::{KernelSpec, MaternNu};
use super::posterior::Design;
use crate::error::{Error, Result};
use crate::linalg::cholesky_jittered;
use crate::optimizer::{nelder_mead, NelderMeadOptions};
use crate::randfield::lhs_maximin;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Known homogeneous noise variance.
    Fixed(f64),
    /// Noise variance estimated as `ratio * sigma^2` with `ratio` in the bounds.
    Estimate { min_ratio: f64, max_ratio: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanModel {
    Fixed(f64),
    /// Generalized least squares estimate of the constant mean.
    Gls,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MleConfig {
    pub nu: MaternNu,
    pub lengthscale_lower: Vec<f64>,
    pub lengthscale_upper: Vec<f64>,
    /// Bounds for the process variance, used only when it cannot be profiled
    /// (fixed nonzero noise).
    pub variance_bounds: (f64, f64),
    pub noise: NoiseModel,
    pub mean: MeanModel,
    pub starts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl MleConfig {
    /// Lengthscale bounds `[0.02, 3] x width` per dimension, noise-free, GLS mean.
    pub fn for_widths(nu: MaternNu, widths: &[f64]) -> Self {
        Self {
            nu,
            lengthscale_lower: widths.iter().map(|w| 0.02 * w).collect(),
            lengthscale_upper: widths.iter().map(|w| 3.0 * w).collect(),
            variance_bounds: (1e-6, 1e6),
            noise: NoiseModel::Fixed(0.0),
            mean: MeanModel::Gls,
            starts: 5,
            max_iter: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MleFit {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub prior_mean: f64,
    pub log_likelihood: f64,
    /// False when no local search improved on its starting point; the best
    /// start is returned in that case.
    pub improved: bool,
}

/// Gaussian log marginal likelihood of the design under `kernel` and a constant prior mean.
pub fn log_marginal_likelihood(kernel: &KernelSpec, design: &Design, prior_mean: f64) -> Result<f64> {
    kernel.validate()?;
    if design.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim(),
            got: design.dim(),
        });
    }
    let n = design.len();
    let mut k = kernel.gram(&design.points);
    for i in 0..n {
        k[(i, i)] += design.noise_variance;
    }
    let (chol, _) = cholesky_jittered(&k, kernel.variance).ok_or(Error::NotFactorizable { size: n })?;
    let r = design.observations.map(|y| y - prior_mean);
    let z = chol.l_dirty().solve_lower_triangular(&r).expect("positive diagonal");
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (z.norm_squared() + logdet + n as f64 * LN_2PI))
}

struct Evaluated {
    log_lik: f64,
    variance: f64,
    noise_variance: f64,
    mean: f64,
}

/// Profiled or full likelihood at the log-parameter vector `theta`.
fn evaluate(cfg: &MleConfig, design: &Design, params: &[f64]) -> Option<Evaluated> {
    let d = design.dim();
    let n = design.len();
    let ls: Vec<f64> = params[..d].iter().map(|v| v.exp()).collect();
    let profiled = !matches!(cfg.noise, NoiseModel::Fixed(t) if t > 0.0);
    let (corr_noise, variance_fixed) = match cfg.noise {
        NoiseModel::Estimate { .. } => (params[d].exp(), None),
        NoiseModel::Fixed(t) if t > 0.0 => (t, Some(params[d].exp())),
        NoiseModel::Fixed(_) => (0.0, None),
    };
    let scale = variance_fixed.unwrap_or(1.0);
    let kernel = KernelSpec::new(cfg.nu, ls, scale).ok()?;
    let mut k = kernel.gram(&design.points);
    for i in 0..n {
        k[(i, i)] += corr_noise;
    }
    let (chol, _) = cholesky_jittered(&k, scale)?;
    let l = chol.l_dirty();
    let solve = |b: &DVector<f64>| l.solve_lower_triangular(b).expect("positive diagonal");
    let zy = solve(&design.observations);
    let mean = match cfg.mean {
        MeanModel::Fixed(m) => m,
        MeanModel::Gls => {
            let z1 = solve(&DVector::from_element(n, 1.0));
            zy.dot(&z1) / z1.norm_squared()
        }
    };
    let zr = solve(&design.observations.map(|y| y - mean));
    let logdet: f64 = l.diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let quad = zr.norm_squared();
    let nf = n as f64;
    if profiled {
        let s2 = (quad / nf).max(1e-300);
        let ll = -0.5 * (nf * (LN_2PI + s2.ln()) + logdet + nf);
        Some(Evaluated {
            log_lik: ll,
            variance: s2,
            noise_variance: corr_noise * s2,
            mean,
        })
    } else {
        let ll = -0.5 * (quad + logdet + nf * LN_2PI);
        Some(Evaluated {
            log_lik: ll,
            variance: scale,
            noise_variance: corr_noise,
            mean,
        })
    }
}

/// Multistart Nelder–Mead maximization of the log marginal likelihood.
pub fn mle_fit(design: &Design, cfg: &MleConfig) -> Result<MleFit> {
    let d = design.dim();
    if design.len() < 2 {
        return Err(Error::InvalidArgument("maximum likelihood needs at least two observations".into()));
    }
    if cfg.lengthscale_lower.len() != d || cfg.lengthscale_upper.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: cfg.lengthscale_lower.len(),
        });
    }
    let mut lower: Vec<f64> = cfg.lengthscale_lower.iter().map(|v| v.ln()).collect();
    let mut upper: Vec<f64> = cfg.lengthscale_upper.iter().map(|v| v.ln()).collect();
    match cfg.noise {
        NoiseModel::Estimate { min_ratio, max_ratio } => {
            lower.push(min_ratio.max(1e-12).ln());
            upper.push(max_ratio.ln());
        }
        NoiseModel::Fixed(t) if t > 0.0 => {
            lower.push(cfg.variance_bounds.0.ln());
            upper.push(cfg.variance_bounds.1.ln());
        }
        NoiseModel::Fixed(_) => {}
    }
    if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
        return Err(Error::Config("empty hyperparameter bounds".into()));
    }
    let p = lower.len();
    let starts = cfg.starts.max(1);
    let unit = lhs_maximin(starts, p, cfg.seed);
    let mut start_points: Vec<Vec<f64>> = vec![(0..p).map(|i| 0.5 * (lower[i] + upper[i])).collect()];
    for s in 1..starts {
        start_points.push((0..p).map(|i| lower[i] + unit[(s, i)] * (upper[i] - lower[i])).collect());
    }

    let objective = |x: &[f64]| -> Result<f64> {
        Ok(evaluate(cfg, design, x).map_or(f64::INFINITY, |e| -e.log_lik))
    };
    let opts = NelderMeadOptions {
        max_iter: cfg.max_iter,
        ftol: 1e-9,
        xtol: 1e-6,
        initial_step: 0.1,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut improved = false;
    for x0 in &start_points {
        let r = nelder_mead(objective, x0, &lower, &upper, &opts)?;
        improved |= r.improved;
        if best.as_ref().is_none_or(|(_, v)| r.value < *v) {
            best = Some((r.x, r.value));
        }
    }
    let (x, value) = best.expect("at least one start");
    if !value.is_finite() {
        return Err(Error::NotFactorizable { size: design.len() });
    }
    if !improved {
        log::warn!("maximum likelihood search did not improve on any start");
    }
    let e = evaluate(cfg, design, &x).ok_or(Error::NotFactorizable { size: design.len() })?;
    let kernel = KernelSpec::new(cfg.nu, x[..d].iter().map(|v| v.exp()).collect(), e.variance)?;
    Ok(MleFit {
        kernel,
        noise_variance: e.noise_variance,
        prior_mean: e.mean,
        log_likelihood: e.log_lik,
        improved,
    })
}
