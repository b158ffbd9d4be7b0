//! Conservative excursion set estimates: the largest Vorob'ev quantile that is
//! contained in the excursion set with posterior probability at least `alpha`.

use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::excursion::{coverage_at, CoverageField, EstimateKind, ExcursionProblem, IntegrationGrid, QuantileEstimate};
use crate::gp::GpPosterior;
use crate::linalg::psd_factor;
use crate::randfield::{sobol_points, SimulationEnsemble};

pub const MIN_SAMPLES: usize = 100;

/// Monte Carlo estimate of `P(Z_q in T for every selected point q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionEstimate {
    pub level: f64,
    /// Selected points, one per row; empty when the quantile is empty.
    pub points: DMatrix<f64>,
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

impl InclusionEstimate {
    pub fn selected(&self) -> usize {
        self.points.nrows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConservativeConfig {
    /// Upper bound on the number of points constraining the orthant probability.
    pub max_points: usize,
    /// Monte Carlo sample count (rounded up to an even number of antithetic pairs).
    pub samples: usize,
    /// Bisection tolerance on the level.
    pub tolerance: f64,
    pub seed: u64,
    /// Optional Sobol discretization, independent of the integration grid, on
    /// which the inclusion probability is evaluated.
    pub psi_grid_size: Option<usize>,
}

impl Default for ConservativeConfig {
    fn default() -> Self {
        Self {
            max_points: 100,
            samples: 10_000,
            tolerance: 1e-4,
            seed: 0,
            psi_grid_size: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchDecision {
    Accept,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub rho: f64,
    pub ell: usize,
    pub psi: f64,
    pub std_error: f64,
    pub decision: SearchDecision,
}

#[derive(Clone, Debug)]
pub struct ConservativeResult {
    pub level: f64,
    pub estimate: QuantileEstimate,
    pub inclusion: InclusionEstimate,
    pub trace: Vec<SearchStep>,
    /// Set when even the smallest nonempty quantile fails the constraint and
    /// the empty set is returned.
    pub empty_fallback: bool,
}

/// Farthest-point selection of `ell` rows of `points` (indices into the rows),
/// started at `first`; distances are measured in unit-cube coordinates.
fn farthest_points(points: &DMatrix<f64>, domain: &BoxDomain, first: usize, ell: usize) -> Vec<usize> {
    let n = points.nrows();
    let widths = domain.widths();
    let unit = |i: usize, j: usize| -> f64 {
        (0..points.ncols())
            .map(|c| ((points[(i, c)] - points[(j, c)]) / widths[c]).powi(2))
            .sum()
    };
    let mut chosen = vec![first];
    let mut dist: Vec<f64> = (0..n).map(|i| unit(i, first)).collect();
    while chosen.len() < ell.min(n) {
        let next = (0..n).fold(first, |best, i| if dist[i] > dist[best] { i } else { best });
        if dist[next] <= 0.0 {
            // remaining points duplicate chosen ones
            break;
        }
        chosen.push(next);
        for i in 0..n {
            dist[i] = dist[i].min(unit(i, next));
        }
    }
    chosen
}

/// Candidate points for the orthant probability: up to `ell` maximin-spread
/// points, started from the highest coverage, returned sorted by decreasing
/// coverage together with their coverage.
fn select_points(points: &DMatrix<f64>, coverage: &[f64], domain: &BoxDomain, ell: usize) -> (DMatrix<f64>, Vec<f64>) {
    if points.nrows() == 0 || ell == 0 {
        return (DMatrix::zeros(0, points.ncols()), Vec::new());
    }
    let first = (0..coverage.len()).fold(0, |b, i| if coverage[i] > coverage[b] { i } else { b });
    let mut idx = farthest_points(points, domain, first, ell);
    idx.sort_by(|a, b| coverage[*b].total_cmp(&coverage[*a]).then(a.cmp(b)));
    let sel = DMatrix::from_fn(idx.len(), points.ncols(), |i, c| points[(idx[i], c)]);
    (sel, idx.iter().map(|i| coverage[*i]).collect())
}

/// For each of `samples` joint draws at `points` (antithetic pairs), the number
/// of leading points that lie in `T`.
fn leading_inside(p: &GpPosterior, prob: &ExcursionProblem, points: &DMatrix<f64>, samples: usize, seed: u64) -> Result<Vec<usize>> {
    let l = points.nrows();
    let pairs = samples.div_ceil(2);
    if l == 0 {
        return Ok(vec![0; 2 * pairs]);
    }
    let (mean, _) = p.predict(points)?;
    let cov = p.covariance(points)?;
    let factor = psd_factor(&cov, p.kernel().variance).ok_or(Error::NotFactorizable { size: l })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = vec![0.0; l];
    let mut out = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        // L is lower triangular, so the i-th value only needs eps[..=i]
        let (mut kp, mut km) = (None, None);
        for i in 0..l {
            let z: f64 = (0..=i).map(|j| factor[(i, j)] * eps[j]).sum();
            if kp.is_none() && !prob.contains(mean[i] + z) {
                kp = Some(i);
            }
            if km.is_none() && !prob.contains(mean[i] - z) {
                km = Some(i);
            }
            if kp.is_some() && km.is_some() {
                break;
            }
        }
        out.push(kp.unwrap_or(l));
        out.push(km.unwrap_or(l));
    }
    Ok(out)
}

fn binomial(hits: usize, n: usize) -> (f64, f64) {
    let psi = hits as f64 / n as f64;
    (psi, (psi * (1.0 - psi) / n as f64).sqrt())
}

/// Estimates the probability that the quantile `members` (a mask over the
/// problem's grid) lies inside the excursion set, using `ell` maximin points.
pub fn inclusion_probability(
    p: &GpPosterior,
    prob: &ExcursionProblem,
    members: &[bool],
    ell: usize,
    samples: usize,
    seed: u64,
) -> Result<InclusionEstimate> {
    if members.len() != prob.grid.len() {
        return Err(Error::DimensionMismatch {
            expected: prob.grid.len(),
            got: members.len(),
        });
    }
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    let idx: Vec<usize> = (0..members.len()).filter(|j| members[*j]).collect();
    if idx.is_empty() {
        return Ok(InclusionEstimate {
            level: f64::NAN,
            points: DMatrix::zeros(0, prob.domain.dim()),
            estimate: 1.0,
            std_error: 0.0,
            samples: 0,
            seed,
        });
    }
    if ell == 0 || ell > idx.len() {
        return Err(Error::InvalidArgument(format!(
            "selected point count {ell} must lie in 1..={}",
            idx.len()
        )));
    }
    let pts = DMatrix::from_fn(idx.len(), prob.domain.dim(), |i, c| prob.grid.points[(idx[i], c)]);
    let cov = coverage_at(p, prob, &pts)?;
    let (sel, sel_cov) = select_points(&pts, &cov.values, &prob.domain, ell);
    let k = leading_inside(p, prob, &sel, samples, seed)?;
    let hits = k.iter().filter(|k| **k >= sel.nrows()).count();
    let (estimate, std_error) = binomial(hits, k.len());
    Ok(InclusionEstimate {
        level: sel_cov.last().copied().unwrap_or(f64::NAN),
        points: sel,
        estimate,
        std_error,
        samples: k.len(),
        seed,
    })
}

/// Finds the conservative level `rho^alpha`: the smallest level, up to the
/// configured tolerance, whose quantile is included in the excursion set with
/// estimated probability at least `alpha`.
///
/// The search runs over `[alpha, max p]` (a quantile at level `rho` can only
/// be included with probability `>= alpha` if all its coverages are, hence
/// `Q_rho` is then contained in `Q_alpha`). The candidate points are a fixed
/// maximin subset of `Q_alpha`, sorted by decreasing coverage, so that the
/// points of `Q_rho` form a prefix; one set of joint draws is shared by every
/// level, which makes the estimate exactly nondecreasing in `rho`.
pub fn conservative_level(
    p: &GpPosterior,
    prob: &ExcursionProblem,
    field: &CoverageField,
    grid: &IntegrationGrid,
    cfg: &ConservativeConfig,
) -> Result<ConservativeResult> {
    if field.values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: field.values.len(),
        });
    }
    if cfg.samples < MIN_SAMPLES || cfg.max_points == 0 || !(cfg.tolerance > 0.0) {
        return Err(Error::Config(format!(
            "conservative search needs samples >= {MIN_SAMPLES}, max_points >= 1 and a positive tolerance"
        )));
    }
    let alpha = prob.alpha;
    // points on which inclusion is evaluated, with their coverage
    let (psi_points, psi_cov) = match cfg.psi_grid_size {
        Some(m) => {
            let pts = prob.domain.map_rows(&sobol_points(m, prob.domain.dim(), Some(cfg.seed))?);
            let c = coverage_at(p, prob, &pts)?;
            (pts, c.values)
        }
        None => (grid.points.clone(), field.values.clone()),
    };
    let idx: Vec<usize> = (0..psi_cov.len()).filter(|j| psi_cov[*j] >= alpha).collect();
    let qa = DMatrix::from_fn(idx.len(), psi_points.ncols(), |i, c| psi_points[(idx[i], c)]);
    let qa_cov: Vec<f64> = idx.iter().map(|j| psi_cov[*j]).collect();
    let (sel, sel_cov) = select_points(&qa, &qa_cov, &prob.domain, cfg.max_points);
    let k = leading_inside(p, prob, &sel, cfg.samples, cfg.seed)?;
    let n = k.len();

    let prefix = |rho: f64| sel_cov.iter().take_while(|c| **c >= rho).count();
    let psi_at = |rho: f64| -> (usize, f64, f64) {
        let ell = prefix(rho);
        let hits = k.iter().filter(|k| **k >= ell).count();
        let (psi, se) = binomial(hits, n);
        (ell, psi, se)
    };
    let mut trace = Vec::new();
    let probe = |rho: f64, trace: &mut Vec<SearchStep>| -> bool {
        let (ell, psi, se) = psi_at(rho);
        let ok = psi >= alpha;
        trace.push(SearchStep {
            rho,
            ell,
            psi,
            std_error: se,
            decision: if ok { SearchDecision::Accept } else { SearchDecision::Reject },
        });
        ok
    };

    let max_p = sel_cov.first().copied().unwrap_or(alpha);
    let mut empty_fallback = false;
    let level = if probe(alpha, &mut trace) {
        alpha
    } else if !probe(max_p, &mut trace) {
        empty_fallback = true;
        max_p + (1e-6f64).min(0.5 * (1.0 - max_p))
    } else {
        let (mut lo, mut hi) = (alpha, max_p);
        while hi - lo > cfg.tolerance {
            let mid = 0.5 * (lo + hi);
            if probe(mid, &mut trace) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };

    let mut estimate = if empty_fallback {
        QuantileEstimate::empty(grid.len(), level, EstimateKind::Conservative)
    } else {
        crate::excursion::quantile(field, grid, level, EstimateKind::Conservative)
    };
    estimate.level = level;
    let (ell, psi, se) = if empty_fallback { (0, 1.0, 0.0) } else { psi_at(level) };
    let inclusion = InclusionEstimate {
        level,
        points: sel.rows(0, ell).into_owned(),
        estimate: psi,
        std_error: se,
        samples: n,
        seed: cfg.seed,
    };
    Ok(ConservativeResult {
        level,
        estimate,
        inclusion,
        trace,
        empty_fallback,
    })
}

/// Writes the bisection trace as CSV (`rho,ell,psi,std_error,decision`).
pub fn write_search_trace_csv<W: Write>(trace: &[SearchStep], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for s in trace {
        wtr.serialize(s)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Simulation check of the type I error bound for a conservative estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Simulated `E[mu(CE \ Gamma)]`.
    pub expected_type1: f64,
    /// `sum_j w_j (1 - p_j)` over CE.
    pub analytic_type1: Option<f64>,
    pub measure: f64,
    /// `expected_type1 / measure`, 0 for an empty estimate.
    pub ratio: f64,
    pub ratio_std_error: f64,
    pub inclusion_frequency: f64,
    pub inclusion_std_error: f64,
    pub bound: f64,
    pub passes: bool,
}

/// Estimates the relative expected type I error of `estimate` and the
/// frequency of `CE` inside the excursion set from an ensemble of posterior
/// draws on the grid points.
pub fn verify_bound(
    estimate: &QuantileEstimate,
    field: Option<&CoverageField>,
    prob: &ExcursionProblem,
    grid: &IntegrationGrid,
    ensemble: &SimulationEnsemble,
) -> Result<BoundReport> {
    if ensemble.values.ncols() != grid.len() || estimate.members.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: ensemble.values.ncols(),
        });
    }
    let r = ensemble.values.nrows();
    let measure = grid.measure(&estimate.members);
    let mut g1 = Vec::with_capacity(r);
    let mut included = 0usize;
    for i in 0..r {
        let mut err = 0.0;
        let mut inside = true;
        for j in 0..grid.len() {
            if estimate.members[j] && !prob.contains(ensemble.values[(i, j)]) {
                err += grid.weights[j];
                inside = false;
            }
        }
        g1.push(err);
        included += inside as usize;
    }
    let mean = g1.iter().sum::<f64>() / r as f64;
    let var = if r > 1 {
        g1.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64
    } else {
        0.0
    };
    let (ratio, ratio_se) = if measure > 0.0 {
        (mean / measure, (var / r as f64).sqrt() / measure)
    } else {
        (0.0, 0.0)
    };
    let (freq, freq_se) = binomial(included, r);
    let analytic_type1 = field.map(|f| {
        f.values
            .iter()
            .zip(grid.weights.iter())
            .zip(&estimate.members)
            .filter(|(_, m)| **m)
            .map(|((p, w), _)| (1.0 - p) * w)
            .sum()
    });
    let bound = 1.0 - prob.alpha;
    Ok(BoundReport {
        expected_type1: mean,
        analytic_type1,
        measure,
        ratio,
        ratio_std_error: ratio_se,
        inclusion_frequency: freq,
        inclusion_std_error: freq_se,
        bound,
        passes: ratio <= bound + 3.0 * ratio_se,
    })
}
