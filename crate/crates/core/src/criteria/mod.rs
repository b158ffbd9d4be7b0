//! One-step lookahead sampling criteria: the conservative Vorob'ev deviation
//! `J_n`, the type II criterion `J^T2`, and the IMSE / tIMSE baselines.
//!
//! All criteria are evaluated through a [`CriterionContext`], which caches the
//! posterior quantities on the integration grid that do not depend on the
//! candidate batch. Below-threshold problems are handled through the signed
//! distance to the threshold, so they coincide exactly with the
//! above-threshold problem on the negated field.

mod bvn;

pub use bvn::{bvn_cdf, phi2};

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excursion::{coverage_probability, ExcursionProblem, IntegrationGrid, Orientation};
use crate::gp::GpPosterior;
use crate::linalg::cholesky_jittered;
use crate::normal;

/// Rows with `delta^2 <= REL_DEGENERATE * s_n^2` carry no information, rows with
/// `s_{n+q}^2 <= REL_DEGENERATE * s_n^2` are resolved by the batch.
const REL_DEGENERATE: f64 = 1e-12;

/// Beyond this many standard deviations from the threshold both quantile
/// integrands are below `1e-16` and are taken as zero.
const FAR_TAIL: f64 = 8.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriterionKind {
    #[serde(rename = "J_n")]
    Jn,
    #[serde(rename = "J_T2")]
    JT2,
    #[serde(rename = "IMSE")]
    Imse,
    #[serde(rename = "tIMSE")]
    Timse,
}

impl CriterionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CriterionKind::Jn => "J_n",
            CriterionKind::JT2 => "J_T2",
            CriterionKind::Imse => "IMSE",
            CriterionKind::Timse => "tIMSE",
        }
    }

    pub fn needs_level(self) -> bool {
        matches!(self, CriterionKind::Jn | CriterionKind::JT2)
    }
}

impl std::str::FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "j_n" | "jn" => Ok(CriterionKind::Jn),
            "j_t2" | "jt2" => Ok(CriterionKind::JT2),
            "imse" => Ok(CriterionKind::Imse),
            "timse" => Ok(CriterionKind::Timse),
            _ => Err(Error::Config(format!("unknown criterion `{s}`"))),
        }
    }
}

/// A criterion together with the level it is evaluated at (ignored by IMSE / tIMSE).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionSpec {
    pub kind: CriterionKind,
    pub level: f64,
}

impl CriterionSpec {
    pub fn new(kind: CriterionKind, level: f64) -> Result<Self> {
        if kind.needs_level() {
            check_level(level)?;
        }
        Ok(Self { kind, level })
    }

    pub fn evaluate(&self, ctx: &CriterionContext, batch: &DMatrix<f64>) -> Result<f64> {
        match self.kind {
            CriterionKind::Jn => ctx.jn(batch, self.level),
            CriterionKind::JT2 => ctx.jt2(batch, self.level),
            CriterionKind::Imse => ctx.imse(batch),
            CriterionKind::Timse => ctx.timse(batch),
        }
    }
}

fn check_level(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("level {rho} outside (0, 1]")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    Regular,
    /// The batch does not inform the grid point (`gamma = 0`).
    Uninformative,
    /// The batch determines the value at the grid point (`s_{n+q} = 0`).
    Resolved,
}

/// Lookahead algebra at one grid point: `p_{n+q}(u) = Phi(a + b^T Y_q)` with
/// `Y_q ~ N(0, K_q)`. Resolved rows have infinite `a` and `gamma`, and `b`
/// holds the unscaled `K_q^{-1} k_n(x_q, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LookaheadRow {
    pub a: f64,
    pub b: DVector<f64>,
    pub gamma: f64,
    pub sd_next: f64,
    pub degeneracy: Degeneracy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lookahead {
    /// `K_q = K_n(x_q, x_q) + tau^2 I` (plus the posterior's jitter when needed).
    pub batch_cov: DMatrix<f64>,
    pub rows: Vec<LookaheadRow>,
}

/// Candidate-independent posterior quantities on the integration grid.
#[derive(Clone, Debug)]
pub struct CriterionContext {
    posterior: GpPosterior,
    grid: IntegrationGrid,
    threshold: f64,
    orientation: Orientation,
    /// `L^{-1} k(X_n, U)`
    whitened: DMatrix<f64>,
    signed: Vec<f64>,
    var: Vec<f64>,
    coverage: Vec<f64>,
}

/// Batch-dependent terms per grid point: `delta^2 = k_n(u, x_q)^T K_q^{-1} k_n(x_q, u)`
/// and `s_{n+q}^2 = s_n^2 - delta^2`.
struct BatchTerms {
    k_q: DMatrix<f64>,
    /// `L_q^{-1} k_n(x_q, U)`, `q x m`
    w: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl CriterionContext {
    pub fn new(posterior: &GpPosterior, problem: &ExcursionProblem) -> Result<Self> {
        Self::with_grid(posterior, problem, &problem.grid)
    }

    /// Context on a grid other than the problem's own.
    pub fn with_grid(posterior: &GpPosterior, problem: &ExcursionProblem, grid: &IntegrationGrid) -> Result<Self> {
        if grid.points.ncols() != posterior.dim() {
            return Err(Error::DimensionMismatch {
                expected: posterior.dim(),
                got: grid.points.ncols(),
            });
        }
        let (mean, var, whitened) = posterior.predict_whitened(&grid.points);
        let signed: Vec<f64> = mean.iter().map(|m| problem.orientation.signed(*m, problem.threshold)).collect();
        let coverage = signed
            .iter()
            .zip(var.iter())
            .map(|(g, v)| coverage_probability(*g, v.sqrt(), 0.0, Orientation::Above))
            .collect();
        Ok(Self {
            posterior: posterior.clone(),
            grid: grid.clone(),
            threshold: problem.threshold,
            orientation: problem.orientation,
            whitened,
            signed,
            var: var.iter().copied().collect(),
            coverage,
        })
    }

    pub fn posterior(&self) -> &GpPosterior {
        &self.posterior
    }

    pub fn grid(&self) -> &IntegrationGrid {
        &self.grid
    }

    /// Current coverage `p_n` on the grid.
    pub fn coverage(&self) -> &[f64] {
        &self.coverage
    }

    /// Current variance `s_n^2` on the grid.
    pub fn variance(&self) -> &[f64] {
        &self.var
    }

    fn batch_terms(&self, batch: &DMatrix<f64>) -> Result<BatchTerms> {
        let p = &self.posterior;
        if batch.ncols() != p.dim() {
            return Err(Error::DimensionMismatch {
                expected: p.dim(),
                got: batch.ncols(),
            });
        }
        if batch.nrows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let kernel = p.kernel();
        let vq = p.whiten(batch);
        // k_n(x_q, U) = k(x_q, U) - V_q^T V_U
        let mut cross = kernel.cross(batch, &self.grid.points);
        if !p.design().is_empty() {
            cross -= vq.transpose() * &self.whitened;
        }
        let mut k_q = kernel.gram(batch);
        if !p.design().is_empty() {
            k_q -= vq.transpose() * &vq;
        }
        let k_q = (&k_q + k_q.transpose()) * 0.5;
        let mut k_q_noisy = k_q.clone();
        for i in 0..batch.nrows() {
            k_q_noisy[(i, i)] += p.noise_variance();
        }
        let (chol, _) = cholesky_jittered(&k_q_noisy, kernel.variance).ok_or(Error::NotFactorizable {
            size: batch.nrows(),
        })?;
        let factor = chol.unpack();
        let w = factor
            .solve_lower_triangular(&cross)
            .ok_or(Error::NotFactorizable { size: batch.nrows() })?;
        Ok(BatchTerms {
            k_q: k_q_noisy,
            w,
            factor,
        })
    }

    /// `(delta^2, s_{n+q}^2)` at every grid point.
    fn variance_split(&self, terms: &BatchTerms) -> (Vec<f64>, Vec<f64>) {
        let m = self.grid.len();
        let mut delta2 = Vec::with_capacity(m);
        let mut next = Vec::with_capacity(m);
        for j in 0..m {
            let d2 = terms.w.column(j).norm_squared().min(self.var[j]);
            delta2.push(d2);
            next.push((self.var[j] - d2).max(0.0));
        }
        (delta2, next)
    }

    /// Full lookahead algebra at every grid point.
    pub fn lookahead(&self, batch: &DMatrix<f64>) -> Result<Lookahead> {
        let terms = self.batch_terms(batch)?;
        let (delta2, next) = self.variance_split(&terms);
        let rows = (0..self.grid.len())
            .map(|j| {
                let degeneracy = classify(self.var[j], delta2[j], next[j]);
                let sd_next = next[j].sqrt();
                // b = K_q^{-1} k_n(x_q, u) / s_{n+q}
                let kinv_k = terms
                    .factor
                    .transpose()
                    .solve_upper_triangular(&terms.w.column(j).into_owned())
                    .expect("factor has positive diagonal");
                match degeneracy {
                    Degeneracy::Resolved => LookaheadRow {
                        a: self.signed[j].signum() * f64::INFINITY,
                        b: kinv_k,
                        gamma: f64::INFINITY,
                        sd_next,
                        degeneracy,
                    },
                    _ => LookaheadRow {
                        a: self.signed[j] / sd_next,
                        b: kinv_k / sd_next,
                        gamma: if degeneracy == Degeneracy::Uninformative {
                            0.0
                        } else {
                            delta2[j] / next[j]
                        },
                        sd_next,
                        degeneracy,
                    },
                }
            })
            .collect();
        Ok(Lookahead {
            batch_cov: terms.k_q,
            rows,
        })
    }

    /// Sum over the grid of `w_j * f(j, jt2_integrand, type1_lookahead)`.
    fn quantile_sum<F: Fn(f64, f64) -> f64>(&self, batch: &DMatrix<f64>, rho: f64, f: F) -> Result<f64> {
        check_level(rho)?;
        let terms = self.batch_terms(batch)?;
        let (delta2, next) = self.variance_split(&terms);
        let c = normal::quantile(rho);
        let mut total = 0.0;
        for j in 0..self.grid.len() {
            let (t2, t1) = integrands(self.signed[j], self.var[j], delta2[j], next[j], self.coverage[j], rho, c);
            total += self.grid.weights[j] * f(t2, t1);
        }
        Ok(total)
    }

    /// Expected Vorob'ev deviation at level `rho` after observing `batch`.
    pub fn jn(&self, batch: &DMatrix<f64>, rho: f64) -> Result<f64> {
        self.quantile_sum(batch, rho, |t2, t1| t2 + t1)
    }

    /// Expected type II error at level `rho` after observing `batch`.
    pub fn jt2(&self, batch: &DMatrix<f64>, rho: f64) -> Result<f64> {
        self.quantile_sum(batch, rho, |t2, _| t2)
    }

    /// Integrated future variance.
    pub fn imse(&self, batch: &DMatrix<f64>) -> Result<f64> {
        let terms = self.batch_terms(batch)?;
        let (_, next) = self.variance_split(&terms);
        Ok(next.iter().zip(self.grid.weights.iter()).map(|(s2, w)| w * s2).sum())
    }

    /// Integrated future variance weighted by the predictive density of the threshold.
    pub fn timse(&self, batch: &DMatrix<f64>) -> Result<f64> {
        let terms = self.batch_terms(batch)?;
        let (_, next) = self.variance_split(&terms);
        let tau2 = self.posterior.noise_variance();
        let mut total = 0.0;
        for j in 0..self.grid.len() {
            if next[j] > 0.0 {
                total += self.grid.weights[j] * next[j] * timse_weight(self.signed[j], self.var[j], tau2);
            }
        }
        Ok(total)
    }

    /// Current Vorob'ev deviation `sum_j w_j [p 1{p<rho} + (1-p) 1{p>=rho}]`.
    pub fn current_deviation(&self, rho: f64) -> f64 {
        self.coverage
            .iter()
            .zip(self.grid.weights.iter())
            .map(|(p, w)| if *p < rho { w * p } else { w * (1.0 - p) })
            .sum()
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }
}

/// Density of the threshold under the predictive distribution `N(m_n, s_n^2 + tau^2)`,
/// expressed through the signed distance.
pub fn timse_weight(signed: f64, var: f64, tau2: f64) -> f64 {
    let s = (var + tau2).sqrt();
    if s > 0.0 {
        normal::pdf(signed / s) / s
    } else {
        0.0
    }
}

fn classify(var: f64, delta2: f64, next: f64) -> Degeneracy {
    if var <= 0.0 || delta2 <= REL_DEGENERATE * var {
        Degeneracy::Uninformative
    } else if next <= REL_DEGENERATE * var {
        Degeneracy::Resolved
    } else {
        Degeneracy::Regular
    }
}

/// Per-point integrands `(E[p' 1{p'<rho}], E[(1-p') 1{p'>=rho}])` where `p'` is
/// the coverage after the batch and `g` the signed distance to the threshold.
///
/// With `h = g/s_n`, `k = (c s_{n+q} - g)/delta`, `r = -delta/s_n` the first is
/// `Phi2(h, k; r)` and the second `Phi(-k) - p + Phi2(h, k; r)`.
fn integrands(g: f64, var: f64, delta2: f64, next: f64, p: f64, rho: f64, c: f64) -> (f64, f64) {
    match classify(var, delta2, next) {
        Degeneracy::Uninformative => {
            if p < rho {
                (p, 0.0)
            } else {
                (0.0, 1.0 - p)
            }
        }
        Degeneracy::Resolved => (0.0, 0.0),
        Degeneracy::Regular => {
            let sn = var.sqrt();
            let h = g / sn;
            if h.abs() > FAR_TAIL {
                return (0.0, 0.0);
            }
            let delta = delta2.sqrt();
            let k = (c * next.sqrt() - g) / delta;
            let t2 = bvn_cdf(h, k, -delta / sn).min(p);
            let t1 = (normal::cdf(-k) - p + t2).max(0.0);
            (t2, t1)
        }
    }
}

/// Evaluates a criterion at each row of `candidates` (single-point batches)
/// and writes `x1..xd,value` as CSV.
pub fn write_landscape_csv<W: Write>(
    ctx: &CriterionContext,
    spec: &CriterionSpec,
    candidates: &DMatrix<f64>,
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let d = candidates.ncols();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("value".into());
    wtr.write_record(&header)?;
    for i in 0..candidates.nrows() {
        let row = candidates.rows(i, 1).into_owned();
        let v = spec.evaluate(ctx, &row)?;
        let mut rec: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        rec.push(v.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
