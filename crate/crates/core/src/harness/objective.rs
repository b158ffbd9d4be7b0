//! Objective functions driven by the strategy loop.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::gp::{GpPosterior, KernelSpec};
use crate::linalg::cholesky_jittered;

/// Evaluation contract: a scalar response at any point of the domain.
pub trait Objective {
    fn domain(&self) -> &BoxDomain;

    fn evaluate(&self, x: &[f64]) -> Result<f64>;

    fn name(&self) -> String;

    /// Values at every row of `points`.
    fn evaluate_rows(&self, points: &DMatrix<f64>) -> Result<Vec<f64>> {
        (0..points.nrows())
            .map(|i| {
                let x: Vec<f64> = points.row(i).iter().copied().collect();
                self.evaluate(&x)
            })
            .collect()
    }
}

/// Wraps a closure.
pub struct FnObjective<F> {
    domain: BoxDomain,
    name: String,
    f: F,
}

impl<F: Fn(&[f64]) -> Result<f64>> FnObjective<F> {
    pub fn new(name: impl Into<String>, domain: BoxDomain, f: F) -> Self {
        Self {
            domain,
            name: name.into(),
            f,
        }
    }
}

impl<F: Fn(&[f64]) -> Result<f64>> Objective for FnObjective<F> {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        (self.f)(x)
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Smooth two-parameter response on `[0.2, 5.2] x [0, 5]` shaped like a
/// criticality factor: increasing in the first input (material density),
/// peaked in the second (moderator thickness). About 88% of the domain lies
/// below 0.92.
#[derive(Clone, Debug)]
pub struct CriticalityFunction {
    domain: BoxDomain,
}

impl Default for CriticalityFunction {
    fn default() -> Self {
        Self {
            domain: BoxDomain {
                lower: vec![0.2, 0.0],
                upper: vec![5.2, 5.0],
            },
        }
    }
}

impl CriticalityFunction {
    pub const THRESHOLD: f64 = 0.92;

    pub fn value(x1: f64, x2: f64) -> f64 {
        let moderation = 1.0 + 0.6 * (-((x2 - 1.8) / 1.3).powi(2)).exp();
        0.35 + 0.18 * x1.powf(0.6) * moderation - 0.02 * x2
    }
}

impl Objective for CriticalityFunction {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: x.len() });
        }
        Ok(Self::value(x[0], x[1]))
    }

    fn name(&self) -> String {
        "criticality".into()
    }
}

/// Posterior mean of a fitted model, used for tabulated responses.
pub struct SurrogateObjective {
    posterior: GpPosterior,
    domain: BoxDomain,
}

impl SurrogateObjective {
    pub fn new(posterior: GpPosterior, domain: BoxDomain) -> Self {
        Self { posterior, domain }
    }
}

impl Objective for SurrogateObjective {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.posterior.mean(x)
    }

    fn name(&self) -> String {
        format!("surrogate:{}", self.posterior.id())
    }
}

/// A Gaussian process sample path realized on a regular tensor grid and
/// extended to the whole domain by its conditional mean given the grid values.
///
/// The tensor-product kernel makes the grid covariance a Kronecker product,
/// so sampling and interpolation act one axis at a time.
#[derive(Clone, Debug)]
pub struct GpSamplePath {
    kernel: KernelSpec,
    domain: BoxDomain,
    axes: Vec<Vec<f64>>,
    /// Grid values, last axis fastest.
    values: Vec<f64>,
    /// `(K_1^{-1} x ... x K_d^{-1}) values`
    coef: Vec<f64>,
}

/// Applies `m` (`g x g`) along `axis` of a `[g; d]` tensor stored with the last axis fastest.
fn mode_product(t: &[f64], g: usize, d: usize, axis: usize, m: &DMatrix<f64>) -> Vec<f64> {
    let stride = g.pow((d - 1 - axis) as u32);
    let outer = t.len() / (g * stride);
    let mut out = vec![0.0; t.len()];
    let mut buf = vec![0.0; g];
    for o in 0..outer {
        let base = o * g * stride;
        for inner in 0..stride {
            for (b, v) in buf.iter_mut().enumerate() {
                *v = t[base + b * stride + inner];
            }
            for a in 0..g {
                let mut s = 0.0;
                for b in 0..g {
                    s += m[(a, b)] * buf[b];
                }
                out[base + a * stride + inner] = s;
            }
        }
    }
    out
}

impl GpSamplePath {
    /// Draws a path of the centered process with covariance `kernel` on a grid
    /// with `per_axis` nodes per axis (endpoints included).
    pub fn sample(kernel: &KernelSpec, domain: &BoxDomain, per_axis: usize, seed: u64) -> Result<Self> {
        kernel.validate()?;
        let d = domain.dim();
        if kernel.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: kernel.dim(),
            });
        }
        if per_axis < 2 {
            return Err(Error::InvalidArgument("sample path grid needs at least 2 nodes per axis".into()));
        }
        let total = per_axis
            .checked_pow(d as u32)
            .filter(|t| *t <= 1 << 24)
            .ok_or_else(|| Error::InvalidArgument(format!("{per_axis}^{d} grid is too large")))?;
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                let (l, u) = (domain.lower[j], domain.upper[j]);
                (0..per_axis).map(|i| l + (u - l) * i as f64 / (per_axis - 1) as f64).collect()
            })
            .collect();
        let mut factors = Vec::with_capacity(d);
        let mut inverses = Vec::with_capacity(d);
        for j in 0..d {
            let a = &axes[j];
            let corr = DMatrix::from_fn(per_axis, per_axis, |p, q| {
                kernel.nu.correlation((a[p] - a[q]).abs() / kernel.lengthscales[j])
            });
            let (chol, _) = cholesky_jittered(&corr, 1.0).ok_or(Error::NotFactorizable { size: per_axis })?;
            inverses.push(chol.inverse());
            factors.push(chol.unpack());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<f64> = (0..total).map(|_| StandardNormal.sample(&mut rng)).collect();
        for (j, l) in factors.iter().enumerate() {
            values = mode_product(&values, per_axis, d, j, l);
        }
        let sd = kernel.variance.sqrt();
        values.iter_mut().for_each(|v| *v *= sd);
        let mut coef = values.clone();
        for (j, inv) in inverses.iter().enumerate() {
            coef = mode_product(&coef, per_axis, d, j, inv);
        }
        Ok(Self {
            kernel: kernel.clone(),
            domain: domain.clone(),
            axes,
            values,
            coef,
        })
    }

    pub fn per_axis(&self) -> usize {
        self.axes[0].len()
    }

    /// Grid nodes, one per row, last axis fastest.
    pub fn grid_points(&self) -> DMatrix<f64> {
        let g = self.per_axis();
        let d = self.axes.len();
        DMatrix::from_fn(self.values.len(), d, |i, j| {
            let idx = (i / g.pow((d - 1 - j) as u32)) % g;
            self.axes[j][idx]
        })
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.values
    }

    fn interpolate(&self, x: &[f64]) -> f64 {
        let g = self.per_axis();
        let d = self.axes.len();
        // contract the coefficient tensor with k_j(x_j) from the last axis inwards
        let mut t = self.coef.clone();
        for j in (0..d).rev() {
            let k: Vec<f64> = self.axes[j]
                .iter()
                .map(|a| self.kernel.nu.correlation((x[j] - a).abs() / self.kernel.lengthscales[j]))
                .collect();
            let next: Vec<f64> = t.chunks(g).map(|c| c.iter().zip(&k).map(|(a, b)| a * b).sum()).collect();
            t = next;
        }
        t[0]
    }
}

impl Objective for GpSamplePath {
    fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.axes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.axes.len(),
                got: x.len(),
            });
        }
        Ok(self.interpolate(x))
    }

    fn name(&self) -> String {
        format!("gp_path_{}d", self.axes.len())
    }
}

/// Observation vector of an objective at the rows of `points`.
pub fn observe(objective: &dyn Objective, points: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(objective.evaluate_rows(points)?))
}
