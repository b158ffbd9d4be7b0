//! Python bindings: Gaussian process fitting, excursion set estimates,
//! conservative estimates and sampling criteria.
//!
//! Point sets cross the boundary as lists of rows (`list[list[float]]`).

use excursion_core::conservative::{conservative_level, ConservativeConfig};
use excursion_core::criteria::{self, CriterionContext, CriterionKind, CriterionSpec};
use excursion_core::domain::points_from_rows;
use excursion_core::excursion::{
    self as exc, expected_measure, quantile, type1_expected, type2_uncertainty, vorobev_level, vorobev_uncertainty,
    EstimateKind, ExcursionProblem, IntegrationGrid, Orientation,
};
use excursion_core::gp::{mle_fit, Design, GpPosterior, KernelSpec, MaternNu, MleConfig, NoiseModel};
use excursion_core::harness::{parse_toml, run_strategy, RunConfig, RunLabel};
use excursion_core::optimizer::{optimize_batch, OptimizerConfig};
use excursion_core::{randfield, BoxDomain, Error};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        3 => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], dim: usize) -> PyResult<DMatrix<f64>> {
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(PyValueError::new_err(format!("expected rows of length {dim}, got {}", r.len())));
    }
    Ok(points_from_rows(rows, dim))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Tensor-product Matérn covariance.
#[pyclass(name = "Kernel", module = "excursion", from_py_object)]
#[derive(Clone)]
pub struct PyKernel {
    inner: KernelSpec,
}

#[pymethods]
impl PyKernel {
    #[new]
    #[pyo3(signature = (lengthscales, variance, nu = "5/2"))]
    fn new(lengthscales: Vec<f64>, variance: f64, nu: &str) -> PyResult<Self> {
        let nu: MaternNu = nu.parse().map_err(to_py)?;
        Ok(Self {
            inner: KernelSpec::new(nu, lengthscales, variance).map_err(to_py)?,
        })
    }

    #[getter]
    fn lengthscales(&self) -> Vec<f64> {
        self.inner.lengthscales.clone()
    }

    #[getter]
    fn variance(&self) -> f64 {
        self.inner.variance
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        format!("Kernel(lengthscales={:?}, variance={})", self.inner.lengthscales, self.inner.variance)
    }
}

/// Gaussian process conditioned on a design.
#[pyclass(name = "GaussianProcess", module = "excursion", from_py_object)]
#[derive(Clone)]
pub struct PyGp {
    inner: GpPosterior,
}

#[pymethods]
impl PyGp {
    /// Exact conditioning with fixed hyperparameters.
    #[new]
    #[pyo3(signature = (kernel, points, values, noise_variance = 0.0, prior_mean = 0.0))]
    fn new(kernel: &PyKernel, points: Vec<Vec<f64>>, values: Vec<f64>, noise_variance: f64, prior_mean: f64) -> PyResult<Self> {
        let x = matrix(&points, kernel.inner.dim())?;
        let design = Design::new(x, DVector::from_vec(values), noise_variance).map_err(to_py)?;
        Ok(Self {
            inner: GpPosterior::fit(kernel.inner.clone(), design, prior_mean).map_err(to_py)?,
        })
    }

    /// Maximum likelihood fit with a constant trend.
    #[staticmethod]
    #[pyo3(signature = (points, values, lower, upper, nu = "5/2", noise_variance = 0.0, estimate_noise = false, starts = 5, seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        points: Vec<Vec<f64>>,
        values: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        nu: &str,
        noise_variance: f64,
        estimate_noise: bool,
        starts: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let domain = BoxDomain::new(lower, upper).map_err(to_py)?;
        let x = matrix(&points, domain.dim())?;
        let design = Design::new(x, DVector::from_vec(values), noise_variance).map_err(to_py)?;
        let mut cfg = MleConfig::for_widths(nu.parse().map_err(to_py)?, &domain.widths());
        cfg.noise = if estimate_noise {
            NoiseModel::Estimate {
                min_ratio: 1e-8,
                max_ratio: 1.0,
            }
        } else {
            NoiseModel::Fixed(noise_variance)
        };
        cfg.starts = starts;
        cfg.seed = seed;
        let fit = mle_fit(&design, &cfg).map_err(to_py)?;
        let design = Design::new(design.points, design.observations, fit.noise_variance).map_err(to_py)?;
        Ok(Self {
            inner: GpPosterior::fit(fit.kernel, design, fit.prior_mean).map_err(to_py)?,
        })
    }

    /// Posterior means and variances at `points`.
    fn predict(&self, points: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let x = matrix(&points, self.inner.dim())?;
        let (m, v) = self.inner.predict(&x).map_err(to_py)?;
        Ok((m.iter().copied().collect(), v.iter().copied().collect()))
    }

    /// Posterior covariance matrix at `points`.
    fn covariance(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(&points, self.inner.dim())?;
        Ok(rows(&self.inner.covariance(&x).map_err(to_py)?))
    }

    /// New model with additional observations (rank-q update).
    fn update(&self, points: Vec<Vec<f64>>, values: Vec<f64>) -> PyResult<Self> {
        let x = matrix(&points, self.inner.dim())?;
        Ok(Self {
            inner: self.inner.update(&x, &DVector::from_vec(values)).map_err(to_py)?,
        })
    }

    /// `n` joint conditional draws at `points`, one list per draw.
    #[pyo3(signature = (points, n, seed = 0))]
    fn simulate(&self, points: Vec<Vec<f64>>, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(&points, self.inner.dim())?;
        Ok(rows(&randfield::simulate(&self.inner, &x, n, seed).map_err(to_py)?.values))
    }

    #[getter]
    fn kernel(&self) -> PyKernel {
        PyKernel {
            inner: self.inner.kernel().clone(),
        }
    }

    #[getter]
    fn prior_mean(&self) -> f64 {
        self.inner.prior_mean()
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise_variance()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.design().len()
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    fn __len__(&self) -> usize {
        self.inner.design().len()
    }
}

/// Threshold, orientation, confidence level and integration grid.
#[pyclass(name = "Problem", module = "excursion", from_py_object)]
#[derive(Clone)]
pub struct PyProblem {
    inner: ExcursionProblem,
}

#[pymethods]
impl PyProblem {
    /// `grid` is "sobol", "uniform" or "full"; for "full", `grid_size` is the
    /// number of nodes per axis.
    #[new]
    #[pyo3(signature = (threshold, lower, upper, orientation = "above", alpha = 0.95, grid = "sobol", grid_size = 2000, grid_seed = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        threshold: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
        orientation: &str,
        alpha: f64,
        grid: &str,
        grid_size: usize,
        grid_seed: Option<u64>,
    ) -> PyResult<Self> {
        let domain = BoxDomain::new(lower, upper).map_err(to_py)?;
        let orientation = match orientation {
            "above" => Orientation::Above,
            "below" => Orientation::Below,
            o => return Err(PyValueError::new_err(format!("unknown orientation {o:?}"))),
        };
        let grid = match grid {
            "sobol" => IntegrationGrid::sobol(&domain, grid_size, grid_seed),
            "uniform" => Ok(IntegrationGrid::uniform_random(&domain, grid_size, grid_seed.unwrap_or(0))),
            "full" => IntegrationGrid::full_grid(&domain, &vec![grid_size; domain.dim()]),
            g => return Err(PyValueError::new_err(format!("unknown grid kind {g:?}"))),
        }
        .map_err(to_py)?;
        Ok(Self {
            inner: ExcursionProblem::new(threshold, orientation, alpha, domain, grid).map_err(to_py)?,
        })
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn grid_points(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.grid.points)
    }

    #[getter]
    fn grid_weights(&self) -> Vec<f64> {
        self.inner.grid.weights.iter().copied().collect()
    }

    fn __len__(&self) -> usize {
        self.inner.grid.len()
    }
}

/// Coverage probabilities on the problem grid.
#[pyfunction]
fn coverage(gp: &PyGp, problem: &PyProblem) -> PyResult<Vec<f64>> {
    Ok(exc::coverage(&gp.inner, &problem.inner).map_err(to_py)?.values)
}

/// Median, Vorob'ev and conservative estimates with their uncertainties.
#[pyclass(name = "Estimates", module = "excursion", get_all, from_py_object)]
#[derive(Clone)]
pub struct PyEstimates {
    coverage: Vec<f64>,
    expected_measure: f64,
    rho_vorobev: f64,
    vorobev_members: Vec<bool>,
    vorobev_measure: f64,
    vorobev_uncertainty: f64,
    median_members: Vec<bool>,
    rho_alpha: f64,
    conservative_members: Vec<bool>,
    conservative_measure: f64,
    inclusion_probability: f64,
    inclusion_std_error: f64,
    empty_fallback: bool,
    expected_type1: f64,
    expected_type2: f64,
}

#[pyfunction]
#[pyo3(signature = (gp, problem, samples = 10_000, max_points = 100, seed = 0))]
fn estimate(gp: &PyGp, problem: &PyProblem, samples: usize, max_points: usize, seed: u64) -> PyResult<PyEstimates> {
    let prob = &problem.inner;
    let field = exc::coverage(&gp.inner, prob).map_err(to_py)?;
    let rho_v = vorobev_level(&field, &prob.grid);
    let vorobev = quantile(&field, &prob.grid, rho_v, EstimateKind::VorobevExpectation);
    let median = quantile(&field, &prob.grid, 0.5, EstimateKind::Median);
    let cfg = ConservativeConfig {
        samples,
        max_points,
        seed,
        ..Default::default()
    };
    let ce = conservative_level(&gp.inner, prob, &field, &prob.grid, &cfg).map_err(to_py)?;
    Ok(PyEstimates {
        expected_measure: expected_measure(&field, &prob.grid),
        rho_vorobev: rho_v,
        vorobev_measure: vorobev.measure,
        vorobev_uncertainty: vorobev_uncertainty(&field, &prob.grid, rho_v),
        vorobev_members: vorobev.members,
        median_members: median.members,
        rho_alpha: ce.level,
        conservative_measure: ce.estimate.measure,
        conservative_members: ce.estimate.members,
        inclusion_probability: ce.inclusion.estimate,
        inclusion_std_error: ce.inclusion.std_error,
        empty_fallback: ce.empty_fallback,
        expected_type1: type1_expected(&field, &prob.grid, ce.level),
        expected_type2: type2_uncertainty(&field, &prob.grid, ce.level),
        coverage: field.values,
    })
}

fn spec(kind: &str, level: Option<f64>) -> PyResult<CriterionSpec> {
    let kind: CriterionKind = kind.parse().map_err(to_py)?;
    let level = match (kind.needs_level(), level) {
        (true, None) => return Err(PyValueError::new_err(format!("criterion {kind:?} needs a level"))),
        (_, l) => l.unwrap_or(f64::NAN),
    };
    CriterionSpec::new(kind, level).map_err(to_py)
}

/// Value of a sampling criterion ("J_n", "J_T2", "IMSE", "tIMSE") for one batch.
#[pyfunction]
#[pyo3(signature = (gp, problem, kind, batch, level = None))]
fn criterion(gp: &PyGp, problem: &PyProblem, kind: &str, batch: Vec<Vec<f64>>, level: Option<f64>) -> PyResult<f64> {
    let spec = spec(kind, level)?;
    let ctx = CriterionContext::new(&gp.inner, &problem.inner).map_err(to_py)?;
    let b = matrix(&batch, gp.inner.dim())?;
    spec.evaluate(&ctx, &b).map_err(to_py)
}

/// Batch of `q` points minimizing a criterion; returns `(batch, value)`.
#[pyfunction]
#[pyo3(signature = (gp, problem, kind, q = 1, level = None, seed = 0, pool_size = 512, starts = 5))]
#[allow(clippy::too_many_arguments)]
fn next_batch(
    gp: &PyGp,
    problem: &PyProblem,
    kind: &str,
    q: usize,
    level: Option<f64>,
    seed: u64,
    pool_size: usize,
    starts: usize,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let spec = spec(kind, level)?;
    let ctx = CriterionContext::new(&gp.inner, &problem.inner).map_err(to_py)?;
    let d = gp.inner.dim();
    let cfg = OptimizerConfig {
        seed,
        pool_size,
        starts,
        ..Default::default()
    };
    let best = optimize_batch(|b| spec.evaluate(&ctx, &points_from_rows(b, d)), &problem.inner.domain, q, &cfg)
        .map_err(to_py)?;
    Ok((best.batch, best.value))
}

/// Standard bivariate normal CDF `P(X <= h, Y <= k)` with correlation `r`.
#[pyfunction]
fn bvn_cdf(h: f64, k: f64, r: f64) -> f64 {
    criteria::bvn_cdf(h, k, r)
}

/// Runs one strategy from a TOML document and returns the record as JSON.
#[pyfunction]
fn run_config(toml: &str) -> PyResult<String> {
    let cfg: RunConfig = parse_toml(toml).map_err(to_py)?;
    let prob = cfg.problem().map_err(to_py)?;
    let objective = cfg.objective().map_err(to_py)?;
    let initial = cfg.initial_design().map_err(to_py)?;
    let record = run_strategy(objective.as_ref(), &cfg.strategy, &cfg.model, &prob, &initial, None, RunLabel::default())
        .map_err(to_py)?;
    serde_json::to_string(&record).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn excursion(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyGp>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyEstimates>()?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(criterion, m)?)?;
    m.add_function(wrap_pyfunction!(next_batch, m)?)?;
    m.add_function(wrap_pyfunction!(bvn_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
