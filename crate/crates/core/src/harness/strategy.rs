//! Sequential design loop and its per-iteration record.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::objective::Objective;
use crate::conservative::{conservative_level, ConservativeConfig};
use crate::criteria::{CriterionContext, CriterionKind, CriterionSpec};
use crate::domain::points_from_rows;
use crate::error::{Error, Result};
use crate::excursion::{
    coverage, empirical_errors, expected_measure, type1_expected, type2_uncertainty, vorobev_level,
    vorobev_uncertainty, ExcursionProblem,
};
use crate::gp::{mle_fit, Design, GpPosterior, KernelSpec, MaternNu, MeanModel, MleConfig, NoiseModel};
use crate::optimizer::{optimize_batch, OptimizerConfig};
use crate::randfield::SeedStreams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "IMSE")]
    Imse,
    #[serde(rename = "tIMSE")]
    Timse,
    /// `J_n` at the fixed level 0.5.
    A,
    /// `J_n` at the current conservative level.
    B,
    /// `J^T2` at the current conservative level.
    C,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Imse,
        StrategyKind::Timse,
        StrategyKind::A,
        StrategyKind::B,
        StrategyKind::C,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Imse => "IMSE",
            StrategyKind::Timse => "tIMSE",
            StrategyKind::A => "A",
            StrategyKind::B => "B",
            StrategyKind::C => "C",
        }
    }

    /// Criterion and level used at an iteration with conservative level `rho_alpha`.
    pub fn criterion(self, rho_alpha: f64) -> CriterionSpec {
        match self {
            StrategyKind::Imse => CriterionSpec {
                kind: CriterionKind::Imse,
                level: f64::NAN,
            },
            StrategyKind::Timse => CriterionSpec {
                kind: CriterionKind::Timse,
                level: f64::NAN,
            },
            StrategyKind::A => CriterionSpec {
                kind: CriterionKind::Jn,
                level: 0.5,
            },
            StrategyKind::B => CriterionSpec {
                kind: CriterionKind::Jn,
                level: rho_alpha,
            },
            StrategyKind::C => CriterionSpec {
                kind: CriterionKind::JT2,
                level: rho_alpha,
            },
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Prior model and whether its hyperparameters are re-estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub nu: MaternNu,
    pub lengthscales: Vec<f64>,
    pub variance: f64,
    #[serde(default)]
    pub noise_variance: f64,
    #[serde(default)]
    pub prior_mean: f64,
    /// Re-estimate by maximum likelihood before every iteration.
    #[serde(default)]
    pub estimate: bool,
    /// With `estimate`: also estimate a homogeneous noise variance.
    #[serde(default)]
    pub estimate_noise: bool,
    #[serde(default = "default_mle_starts")]
    pub mle_starts: usize,
}

fn default_mle_starts() -> usize {
    4
}

impl ModelConfig {
    pub fn kernel(&self) -> Result<KernelSpec> {
        KernelSpec::new(self.nu, self.lengthscales.clone(), self.variance)
    }

    fn posterior(&self, design: Design, iteration: usize, seeds: &SeedStreams, widths: &[f64]) -> Result<GpPosterior> {
        if !self.estimate {
            return GpPosterior::fit(self.kernel()?, design, self.prior_mean);
        }
        let mut mle = MleConfig::for_widths(self.nu, widths);
        mle.noise = if self.estimate_noise {
            NoiseModel::Estimate {
                min_ratio: 1e-8,
                max_ratio: 1.0,
            }
        } else {
            NoiseModel::Fixed(self.noise_variance)
        };
        mle.mean = MeanModel::Gls;
        mle.starts = self.mle_starts;
        mle.seed = seeds.seed("mle", iteration as u64);
        let fit = mle_fit(&design, &mle)?;
        let design = Design::new(design.points, design.observations, fit.noise_variance)?;
        GpPosterior::fit(fit.kernel, design, fit.prior_mean)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub q: usize,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub conservative: ConservativeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lengthscales: Vec<f64>,
    pub variance: f64,
    pub noise_variance: f64,
    pub prior_mean: f64,
}

impl Hyperparameters {
    fn of(p: &GpPosterior) -> Self {
        Self {
            lengthscales: p.kernel().lengthscales.clone(),
            variance: p.kernel().variance,
            noise_variance: p.noise_variance(),
            prior_mean: p.prior_mean(),
        }
    }
}

/// Metrics of the model after `iteration` batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Design size `n_0 + iteration * q`.
    pub n: usize,
    pub hyperparameters: Hyperparameters,
    pub rho_alpha: f64,
    pub rho_vorobev: f64,
    pub ce_measure: f64,
    pub ce_empty_fallback: bool,
    pub expected_type1: f64,
    pub expected_type2: f64,
    pub vorobev_uncertainty: f64,
    /// Relative volume error of the conservative estimate against the true set.
    pub relative_volume_error: Option<f64>,
    /// Fraction of evaluated points whose response lies in the target set.
    pub proportion_inside: f64,
    /// Optimized criterion value for the batch chosen at this iteration.
    pub criterion_value: Option<f64>,
    /// Batch chosen at this iteration (empty at the last one).
    pub batch: Vec<Vec<f64>>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// The objective failed while evaluating the batch of `iteration`.
    Aborted { iteration: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: StrategyKind,
    pub objective: String,
    pub doe: usize,
    pub replication: usize,
    pub seed: u64,
    pub q: usize,
    pub initial_size: usize,
    pub design: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn evaluations(&self) -> usize {
        self.observations.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }
}

/// Where a run sits inside a study; copied into the record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunLabel {
    pub doe: usize,
    pub replication: usize,
}

/// Objective values at each row; a non-finite response counts as a failure.
fn evaluate_finite(objective: &dyn Objective, points: &DMatrix<f64>) -> Result<Vec<f64>> {
    let y = objective.evaluate_rows(points)?;
    match y.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Objective {
            point: points.row(i).iter().copied().collect(),
            message: format!("non-finite response {}", y[i]),
        }),
        None => Ok(y),
    }
}

/// Runs one sequential strategy from an initial design.
///
/// Each iteration (re)builds the posterior, records the current metrics, and
/// unless it is the last, optimizes the strategy's criterion over batches of
/// `q` points and evaluates the objective there. Without re-estimation the
/// posterior is refreshed by rank-`q` updates. `truth`, when given, is the
/// true excursion mask on the problem's grid. An objective failure stops the
/// loop and returns the partial record with an aborted status.
pub fn run_strategy(
    objective: &dyn Objective,
    cfg: &StrategyConfig,
    model: &ModelConfig,
    prob: &ExcursionProblem,
    initial: &DMatrix<f64>,
    truth: Option<&[bool]>,
    label: RunLabel,
) -> Result<RunRecord> {
    if cfg.q == 0 {
        return Err(Error::Config("batch size q must be positive".into()));
    }
    if initial.ncols() != prob.domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: prob.domain.dim(),
            got: initial.ncols(),
        });
    }
    let seeds = SeedStreams::new(cfg.seed);
    let widths = prob.domain.widths();
    let mut record = RunRecord {
        strategy: cfg.kind,
        objective: objective.name(),
        doe: label.doe,
        replication: label.replication,
        seed: cfg.seed,
        q: cfg.q,
        initial_size: initial.nrows(),
        design: (0..initial.nrows()).map(|i| initial.row(i).iter().copied().collect()).collect(),
        observations: Vec::new(),
        iterations: Vec::new(),
        status: RunStatus::Complete,
    };
    let y0 = match evaluate_finite(objective, initial) {
        Ok(y) => y,
        Err(e) => {
            record.status = RunStatus::Aborted {
                iteration: 0,
                message: e.to_string(),
            };
            return Ok(record);
        }
    };
    record.observations = y0.clone();
    let design = Design::new(initial.clone(), DVector::from_vec(y0), model.noise_variance)?;
    let mut posterior = model.posterior(design, 0, &seeds, &widths)?;

    for it in 0..=cfg.iterations {
        let start = Instant::now();
        let field = coverage(&posterior, prob)?;
        let rho_v = vorobev_level(&field, &prob.grid);
        let mut ccfg = cfg.conservative.clone();
        ccfg.seed = seeds.seed("conservative", it as u64);
        let ce = conservative_level(&posterior, prob, &field, &prob.grid, &ccfg)?;
        let rho_alpha = ce.level;
        let rel = match truth {
            Some(t) => empirical_errors(&ce.estimate, t, &prob.grid)?.relative_volume_error,
            None => None,
        };
        let inside = record.observations.iter().filter(|y| prob.contains(**y)).count();
        let mut entry = IterationRecord {
            iteration: it,
            n: record.observations.len(),
            hyperparameters: Hyperparameters::of(&posterior),
            rho_alpha,
            rho_vorobev: rho_v,
            ce_measure: ce.estimate.measure,
            ce_empty_fallback: ce.empty_fallback,
            expected_type1: if ce.empty_fallback { 0.0 } else { type1_expected(&field, &prob.grid, rho_alpha) },
            expected_type2: if ce.empty_fallback {
                expected_measure(&field, &prob.grid)
            } else {
                type2_uncertainty(&field, &prob.grid, rho_alpha)
            },
            vorobev_uncertainty: vorobev_uncertainty(&field, &prob.grid, rho_v),
            relative_volume_error: rel,
            proportion_inside: inside as f64 / record.observations.len() as f64,
            criterion_value: None,
            batch: Vec::new(),
            wall_time_s: 0.0,
        };
        if it == cfg.iterations {
            entry.wall_time_s = start.elapsed().as_secs_f64();
            record.iterations.push(entry);
            break;
        }

        let spec = cfg.kind.criterion(rho_alpha);
        let ctx = CriterionContext::new(&posterior, prob)?;
        let d = prob.domain.dim();
        let mut ocfg = cfg.optimizer.clone();
        ocfg.seed = seeds.seed("optimizer", it as u64);
        let best = optimize_batch(|b| spec.evaluate(&ctx, &points_from_rows(b, d)), &prob.domain, cfg.q, &ocfg)?;
        let batch = points_from_rows(&best.batch, d);
        entry.criterion_value = Some(best.value);
        entry.batch = best.batch.clone();
        entry.wall_time_s = start.elapsed().as_secs_f64();
        record.iterations.push(entry);

        let y = match evaluate_finite(objective, &batch) {
            Ok(y) => y,
            Err(e) => {
                record.status = RunStatus::Aborted {
                    iteration: it,
                    message: e.to_string(),
                };
                return Ok(record);
            }
        };
        record.design.extend(best.batch);
        record.observations.extend(&y);
        let y = DVector::from_vec(y);
        posterior = if model.estimate {
            let design = posterior.design().extended(&batch, &y)?;
            model.posterior(design, it + 1, &seeds, &widths)?
        } else {
            posterior.update(&batch, &y)?
        };
    }
    Ok(record)
}
