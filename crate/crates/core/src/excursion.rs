//! Coverage probabilities, Vorob'ev quantiles and the uncertainty functionals
//! of a random excursion set, all on a weighted discretization of the domain.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::gp::GpPosterior;
use crate::normal;
use crate::randfield::sobol_points;

/// Which side of the threshold defines the target set `T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `T = [t, +inf)`
    Above,
    /// `T = (-inf, t]`
    Below,
}

impl Orientation {
    /// Whether `value` lies in `T`.
    #[inline]
    pub fn contains(self, value: f64, threshold: f64) -> bool {
        match self {
            Orientation::Above => value >= threshold,
            Orientation::Below => value <= threshold,
        }
    }

    /// Signed distance to the threshold, positive inside `T`.
    #[inline]
    pub fn signed(self, value: f64, threshold: f64) -> f64 {
        match self {
            Orientation::Above => value - threshold,
            Orientation::Below => threshold - value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridProvenance {
    Sobol,
    UniformRandom,
    FullGrid,
    Custom,
}

/// Weighted discretization `(u_j, w_j)` of the measure on the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationGrid {
    pub points: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub provenance: GridProvenance,
}

impl IntegrationGrid {
    fn uniform_weights(domain: &BoxDomain, points: DMatrix<f64>, provenance: GridProvenance) -> Self {
        let m = points.nrows();
        Self {
            weights: DVector::from_element(m, domain.volume() / m as f64),
            points,
            provenance,
        }
    }

    /// First `m` Sobol points (optionally digitally shifted) with uniform weights.
    pub fn sobol(domain: &BoxDomain, m: usize, scramble_seed: Option<u64>) -> Result<Self> {
        let unit = sobol_points(m, domain.dim(), scramble_seed)?;
        Ok(Self::uniform_weights(domain, domain.map_rows(&unit), GridProvenance::Sobol))
    }

    pub fn uniform_random(domain: &BoxDomain, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = DMatrix::from_fn(m, domain.dim(), |_, _| rng.random::<f64>());
        Self::uniform_weights(domain, domain.map_rows(&unit), GridProvenance::UniformRandom)
    }

    /// Cell centers of a regular tensor grid with `counts[i]` cells along axis `i`.
    pub fn full_grid(domain: &BoxDomain, counts: &[usize]) -> Result<Self> {
        if counts.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: counts.len(),
            });
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument("grid counts must be positive".into()));
        }
        let m: usize = counts.iter().product();
        let d = domain.dim();
        let mut unit = DMatrix::zeros(m, d);
        for i in 0..m {
            let mut rest = i;
            for j in (0..d).rev() {
                let k = rest % counts[j];
                rest /= counts[j];
                unit[(i, j)] = (k as f64 + 0.5) / counts[j] as f64;
            }
        }
        Ok(Self::uniform_weights(domain, domain.map_rows(&unit), GridProvenance::FullGrid))
    }

    /// Arbitrary points and nonnegative weights.
    pub fn custom(points: DMatrix<f64>, weights: DVector<f64>) -> Result<Self> {
        if points.nrows() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        Ok(Self {
            points,
            weights,
            provenance: GridProvenance::Custom,
        })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_measure(&self) -> f64 {
        self.weights.sum()
    }

    /// Total weight of the cells selected by `mask`.
    pub fn measure(&self, mask: &[bool]) -> f64 {
        self.weights.iter().zip(mask).filter(|(_, m)| **m).map(|(w, _)| w).sum()
    }
}

/// Target set, confidence level, domain and its discretization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionProblem {
    pub threshold: f64,
    pub orientation: Orientation,
    pub alpha: f64,
    pub domain: BoxDomain,
    pub grid: IntegrationGrid,
}

impl ExcursionProblem {
    pub fn new(
        threshold: f64,
        orientation: Orientation,
        alpha: f64,
        domain: BoxDomain,
        grid: IntegrationGrid,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("confidence level {alpha} outside (0,1)")));
        }
        if !threshold.is_finite() {
            return Err(Error::InvalidArgument("threshold must be finite".into()));
        }
        if grid.points.ncols() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: grid.points.ncols(),
            });
        }
        Ok(Self {
            threshold,
            orientation,
            alpha,
            domain,
            grid,
        })
    }

    pub fn contains(&self, value: f64) -> bool {
        self.orientation.contains(value, self.threshold)
    }
}

/// Coverage probabilities `p_n(u_j)` on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageField {
    pub values: Vec<f64>,
    pub posterior_id: String,
}

/// `P(Z_u in T)` for a Gaussian with the given mean and standard deviation.
/// Zero deviation gives the indicator of the mean position (0.5 on the threshold).
#[inline]
pub fn coverage_probability(mean: f64, sd: f64, threshold: f64, orientation: Orientation) -> f64 {
    let s = orientation.signed(mean, threshold);
    if sd > 0.0 {
        normal::cdf(s / sd)
    } else if s > 0.0 {
        1.0
    } else if s < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Coverage field of the posterior on the problem's integration grid.
pub fn coverage(p: &GpPosterior, prob: &ExcursionProblem) -> Result<CoverageField> {
    coverage_at(p, prob, &prob.grid.points)
}

/// Coverage probabilities at arbitrary points.
pub fn coverage_at(p: &GpPosterior, prob: &ExcursionProblem, points: &DMatrix<f64>) -> Result<CoverageField> {
    let (mean, var) = p.predict(points)?;
    let values = mean
        .iter()
        .zip(var.iter())
        .map(|(m, v)| coverage_probability(*m, v.sqrt(), prob.threshold, prob.orientation))
        .collect();
    Ok(CoverageField {
        values,
        posterior_id: p.id(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Median,
    VorobevExpectation,
    Conservative,
    Quantile,
}

impl EstimateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateKind::Median => "median",
            EstimateKind::VorobevExpectation => "vorobev_expectation",
            EstimateKind::Conservative => "conservative",
            EstimateKind::Quantile => "quantile",
        }
    }
}

/// Vorob'ev quantile `Q_rho = {u_j : p_n(u_j) >= rho}` on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub level: f64,
    pub members: Vec<bool>,
    pub measure: f64,
    pub kind: EstimateKind,
}

impl QuantileEstimate {
    pub fn member_count(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.member_count() == 0
    }

    pub fn empty(grid_len: usize, level: f64, kind: EstimateKind) -> Self {
        Self {
            level,
            members: vec![false; grid_len],
            measure: 0.0,
            kind,
        }
    }
}

pub fn quantile(field: &CoverageField, grid: &IntegrationGrid, rho: f64, kind: EstimateKind) -> QuantileEstimate {
    let members: Vec<bool> = field.values.iter().map(|p| *p >= rho).collect();
    QuantileEstimate {
        level: rho,
        measure: grid.measure(&members),
        members,
        kind,
    }
}

/// Expected measure of the random set, `sum_j w_j p_j`.
pub fn expected_measure(field: &CoverageField, grid: &IntegrationGrid) -> f64 {
    field.values.iter().zip(grid.weights.iter()).map(|(p, w)| p * w).sum()
}

/// Level `rho_V` whose quantile measure is closest to the expected measure.
///
/// `rho -> mu(Q_rho)` is a nonincreasing step function with jumps at the
/// distinct coverage values, so every attainable quantile is enumerated
/// exactly; each is represented by the largest `rho` defining it (the coverage
/// value at its jump), and the empty set by a level just above `max p`. Among
/// equally close quantiles the smallest level wins.
pub fn vorobev_level(field: &CoverageField, grid: &IntegrationGrid) -> f64 {
    let target = expected_measure(field, grid);
    let mut order: Vec<usize> = (0..field.values.len()).collect();
    order.sort_by(|a, b| field.values[*a].total_cmp(&field.values[*b]));
    let total = grid.total_measure();
    let eps = 1e-12 * total.max(f64::MIN_POSITIVE);
    let max_p = order.last().map_or(0.0, |i| field.values[*i]);

    // walk from the largest set (smallest rho) to the smallest
    let mut best_rho = f64::NAN;
    let mut best_gap = f64::INFINITY;
    let mut measure = total;
    let mut k = 0;
    while k < order.len() {
        let level = field.values[order[k]];
        let gap = (measure - target).abs();
        if gap < best_gap - eps {
            best_gap = gap;
            best_rho = level;
        }
        while k < order.len() && field.values[order[k]] == level {
            measure -= grid.weights[order[k]];
            k += 1;
        }
    }
    if max_p < 1.0 {
        let gap = target.abs();
        if gap < best_gap - eps {
            best_rho = max_p + (1e-6f64).min(0.5 * (1.0 - max_p));
        }
    }
    if best_rho.is_nan() {
        0.0
    } else {
        best_rho
    }
}

/// `sum_j w_j p_j 1{p_j < rho}`: expected measure of the excursion set outside `Q_rho`.
pub fn type2_uncertainty(field: &CoverageField, grid: &IntegrationGrid, rho: f64) -> f64 {
    field
        .values
        .iter()
        .zip(grid.weights.iter())
        .filter(|(p, _)| **p < rho)
        .map(|(p, w)| p * w)
        .sum()
}

/// `sum_j w_j (1 - p_j) 1{p_j >= rho}`: expected measure of `Q_rho` outside the excursion set.
pub fn type1_expected(field: &CoverageField, grid: &IntegrationGrid, rho: f64) -> f64 {
    field
        .values
        .iter()
        .zip(grid.weights.iter())
        .filter(|(p, _)| **p >= rho)
        .map(|(p, w)| (1.0 - p) * w)
        .sum()
}

/// Expected distance in measure between `Q_rho` and the random set.
pub fn vorobev_uncertainty(field: &CoverageField, grid: &IntegrationGrid, rho: f64) -> f64 {
    field
        .values
        .iter()
        .zip(grid.weights.iter())
        .map(|(p, w)| if *p < rho { p * w } else { (1.0 - p) * w })
        .sum()
}

/// Realized set errors of an estimate against a known truth mask.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalErrors {
    pub false_positive: f64,
    pub false_negative: f64,
    /// `|mu(est) - mu(truth)| / mu(truth)`; `None` when the truth is empty.
    pub relative_volume_error: Option<f64>,
}

pub fn empirical_errors(estimate: &QuantileEstimate, truth: &[bool], grid: &IntegrationGrid) -> Result<EmpiricalErrors> {
    if truth.len() != grid.len() || estimate.members.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: truth.len(),
        });
    }
    let mut fp = 0.0;
    let mut fneg = 0.0;
    let mut truth_measure = 0.0;
    let mut est_measure = 0.0;
    for j in 0..grid.len() {
        let w = grid.weights[j];
        let (e, t) = (estimate.members[j], truth[j]);
        if e {
            est_measure += w;
        }
        if t {
            truth_measure += w;
        }
        if e && !t {
            fp += w;
        }
        if t && !e {
            fneg += w;
        }
    }
    let relative_volume_error = if truth_measure > 0.0 {
        Some((est_measure - truth_measure).abs() / truth_measure)
    } else {
        log::warn!("relative volume error undefined: true excursion set is empty on the grid");
        None
    };
    Ok(EmpiricalErrors {
        false_positive: fp,
        false_negative: fneg,
        relative_volume_error,
    })
}

/// CSV with grid coordinates, weight, coverage and one membership column per estimate.
pub fn write_coverage_csv<W: Write>(
    grid: &IntegrationGrid,
    field: &CoverageField,
    estimates: &[&QuantileEstimate],
    w: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let d = grid.points.ncols();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    header.push("weight".into());
    header.push("p".into());
    for e in estimates {
        header.push(format!("member_{}", e.kind.as_str()));
    }
    wtr.write_record(&header)?;
    for j in 0..grid.len() {
        let mut rec: Vec<String> = (0..d).map(|i| format!("{}", grid.points[(j, i)])).collect();
        rec.push(format!("{}", grid.weights[j]));
        rec.push(format!("{}", field.values[j]));
        for e in estimates {
            rec.push(if e.members[j] { "1".into() } else { "0".into() });
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
