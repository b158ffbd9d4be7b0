//! Benchmark studies on Gaussian process sample paths.

use serde::{Deserialize, Serialize};

use super::objective::{GpSamplePath, Objective};
use super::strategy::{run_strategy, ModelConfig, RunLabel, RunRecord, StrategyConfig, StrategyKind};
use crate::conservative::ConservativeConfig;
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::excursion::{ExcursionProblem, IntegrationGrid, Orientation};
use crate::gp::MaternNu;
use crate::optimizer::OptimizerConfig;
use crate::randfield::{lhs_maximin, SeedStreams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub dim: usize,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<StrategyKind>,
    pub m_doe: usize,
    pub replications: usize,
    pub iterations: usize,
    #[serde(default = "one")]
    pub q: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "one_f")]
    pub threshold: f64,
    /// Defaults to 3 in dimension 2 and 6 in dimension 5 (else `d + 1`).
    pub n_init: Option<usize>,
    /// Integration grid size; defaults to `2000 d`.
    pub grid_size: Option<usize>,
    /// Nodes per axis of the ground-truth grid; defaults to 100 (d <= 2),
    /// 8 (d = 5), else the largest count keeping the grid under 2^15 nodes.
    pub truth_per_axis: Option<usize>,
    #[serde(default = "default_nu")]
    pub nu: MaternNu,
    #[serde(default = "default_lengthscale")]
    pub lengthscale: f64,
    #[serde(default = "one_f")]
    pub variance: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub conservative: ConservativeConfig,
}

fn all_strategies() -> Vec<StrategyKind> {
    StrategyKind::ALL.to_vec()
}
fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.95
}
fn default_nu() -> MaternNu {
    MaternNu::ThreeHalves
}
fn default_lengthscale() -> f64 {
    0.2
}

impl BenchmarkConfig {
    /// Study on `[0,1]^dim` with the default kernel and sizes.
    pub fn new(dim: usize, m_doe: usize, replications: usize, iterations: usize) -> Self {
        Self {
            dim,
            strategies: all_strategies(),
            m_doe,
            replications,
            iterations,
            q: 1,
            alpha: 0.95,
            threshold: 1.0,
            n_init: None,
            grid_size: None,
            truth_per_axis: None,
            nu: MaternNu::ThreeHalves,
            lengthscale: 0.2,
            variance: 1.0,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            conservative: ConservativeConfig::default(),
        }
    }

    pub fn n_init(&self) -> usize {
        self.n_init.unwrap_or(match self.dim {
            2 => 3,
            5 => 6,
            d => d + 1,
        })
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size.unwrap_or(2000 * self.dim)
    }

    pub fn truth_per_axis(&self) -> usize {
        self.truth_per_axis.unwrap_or(match self.dim {
            1 | 2 => 100,
            5 => 8,
            d => ((1u64 << 15) as f64).powf(1.0 / d as f64).floor() as usize,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.m_doe == 0 || self.replications == 0 || self.q == 0 || self.strategies.is_empty() {
            return Err(Error::Config("benchmark needs dim, m_doe, replications, q >= 1 and a strategy".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0,1)", self.alpha)));
        }
        Ok(())
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            nu: self.nu,
            lengthscales: vec![self.lengthscale; self.dim],
            variance: self.variance,
            noise_variance: 0.0,
            prior_mean: 0.0,
            estimate: false,
            estimate_noise: false,
            mle_starts: 4,
        }
    }

    pub fn problem(&self) -> Result<ExcursionProblem> {
        let domain = BoxDomain::unit(self.dim);
        let grid = IntegrationGrid::sobol(&domain, self.grid_size(), None)?;
        ExcursionProblem::new(self.threshold, Orientation::Above, self.alpha, domain, grid)
    }
}

/// Runs every strategy on `m_doe` maximin LHS designs, each with
/// `replications` independent sample paths as ground truth. Within one
/// (design, path) pair all strategies share the run seed.
pub fn benchmark_gp(cfg: &BenchmarkConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let seeds = SeedStreams::new(cfg.seed);
    let model = cfg.model();
    let kernel = model.kernel()?;
    let prob = cfg.problem()?;
    let mut records = Vec::new();
    for doe in 0..cfg.m_doe {
        let initial = lhs_maximin(cfg.n_init(), cfg.dim, seeds.seed("doe", doe as u64));
        for rep in 0..cfg.replications {
            let index = (doe * cfg.replications + rep) as u64;
            let path = GpSamplePath::sample(&kernel, &prob.domain, cfg.truth_per_axis(), seeds.seed("path", index))?;
            let truth: Vec<bool> = path.evaluate_rows(&prob.grid.points)?.iter().map(|v| prob.contains(*v)).collect();
            for &kind in &cfg.strategies {
                let scfg = StrategyConfig {
                    kind,
                    q: cfg.q,
                    iterations: cfg.iterations,
                    seed: seeds.seed("run", index),
                    optimizer: cfg.optimizer.clone(),
                    conservative: cfg.conservative.clone(),
                };
                log::info!("benchmark doe {doe} replication {rep} strategy {}", kind.as_str());
                let label = RunLabel { doe, replication: rep };
                records.push(run_strategy(&path, &scfg, &model, &prob, &initial, Some(&truth), label)?);
            }
        }
    }
    Ok(records)
}

/// Mean and median of one metric over runs at a given iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            count: n,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: StrategyKind,
    pub iteration: usize,
    pub expected_type2: Summary,
    pub expected_type1: Summary,
    pub ce_measure: Summary,
    pub proportion_inside: Summary,
    pub relative_volume_error: Option<Summary>,
}

/// Per-strategy, per-iteration statistics over all records, ordered by
/// strategy then iteration.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(StrategyKind, usize)> = records
        .iter()
        .flat_map(|r| r.iterations.iter().map(move |i| (r.strategy, i.iteration)))
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(strategy, iteration)| {
            let its: Vec<_> = records
                .iter()
                .filter(|r| r.strategy == strategy)
                .filter_map(|r| r.iterations.iter().find(|i| i.iteration == iteration))
                .collect();
            let col = |f: &dyn Fn(&super::strategy::IterationRecord) -> f64| -> Vec<f64> { its.iter().map(|i| f(i)).collect() };
            let rel: Vec<f64> = its.iter().filter_map(|i| i.relative_volume_error).collect();
            AggregateRow {
                strategy,
                iteration,
                expected_type2: Summary::of(&col(&|i| i.expected_type2)).expect("nonempty"),
                expected_type1: Summary::of(&col(&|i| i.expected_type1)).expect("nonempty"),
                ce_measure: Summary::of(&col(&|i| i.ce_measure)).expect("nonempty"),
                proportion_inside: Summary::of(&col(&|i| i.proportion_inside)).expect("nonempty"),
                relative_volume_error: Summary::of(&rel),
            }
        })
        .collect()
}

/// Final-iteration aggregate for each strategy.
pub fn final_rows(rows: &[AggregateRow]) -> Vec<AggregateRow> {
    let mut out: Vec<AggregateRow> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some(last) if last.strategy == r.strategy => {
                if r.iteration > last.iteration {
                    *last = r.clone();
                }
            }
            _ => out.push(r.clone()),
        }
    }
    out
}
