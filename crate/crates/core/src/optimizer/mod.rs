//! Batch selection by multistart derivative-free minimization of a criterion
//! over `X^q`.

mod nelder_mead;

pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::randfield::{lhs_random, sobol_points, SOBOL_MAX_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    /// One point at a time, earlier points fixed in the batch.
    Greedy,
    /// All `q` points at once in dimension `q * d`.
    Joint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub starts: usize,
    pub local_iterations: usize,
    pub pool_size: usize,
    pub mode: BatchMode,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            starts: 5,
            local_iterations: 200,
            pool_size: 512,
            mode: BatchMode::Greedy,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// Greedy step (always 0 in joint mode).
    pub step: usize,
    pub start_id: usize,
    pub iterations: usize,
    pub best_value: f64,
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub batch: Vec<Vec<f64>>,
    pub value: f64,
    /// Best criterion value over the candidate pool of the last step.
    pub pool_best: f64,
    pub trace: Vec<TraceEntry>,
}

/// Minimizes `criterion` over batches of `q` points in `domain`.
///
/// Each (greedy step or joint) search screens a scrambled Sobol pool, then runs
/// bounded Nelder–Mead from the `starts` best pool candidates. The returned
/// value is never worse than the best pool candidate.
pub fn optimize_batch<F>(criterion: F, domain: &BoxDomain, q: usize, cfg: &OptimizerConfig) -> Result<BatchResult>
where
    F: Fn(&[Vec<f64>]) -> Result<f64>,
{
    if q == 0 || cfg.starts == 0 || cfg.pool_size == 0 {
        return Err(Error::Config("q, starts and pool size must be positive".into()));
    }
    let eval = |batch: &[Vec<f64>]| -> Result<f64> {
        criterion(batch).map_err(|e| Error::Criterion {
            candidate: batch.to_vec(),
            source: Box::new(e),
        })
    };
    match cfg.mode {
        BatchMode::Greedy => {
            let mut fixed: Vec<Vec<f64>> = Vec::with_capacity(q);
            let mut trace = Vec::new();
            let mut last = (f64::INFINITY, f64::INFINITY);
            for step in 0..q {
                let lower = domain.lower.clone();
                let upper = domain.upper.clone();
                let objective = |x: &[f64]| {
                    let mut b = fixed.clone();
                    b.push(x.to_vec());
                    eval(&b)
                };
                let (x, value, pool_best, entries) =
                    multistart(objective, &lower, &upper, cfg, cfg.seed.wrapping_add(step as u64))?;
                trace.extend(entries.into_iter().map(|mut e| {
                    e.step = step;
                    e
                }));
                fixed.push(x);
                last = (value, pool_best);
            }
            Ok(BatchResult {
                batch: fixed,
                value: last.0,
                pool_best: last.1,
                trace,
            })
        }
        BatchMode::Joint => {
            let d = domain.dim();
            let lower: Vec<f64> = (0..q).flat_map(|_| domain.lower.iter().copied()).collect();
            let upper: Vec<f64> = (0..q).flat_map(|_| domain.upper.iter().copied()).collect();
            let split = |x: &[f64]| -> Vec<Vec<f64>> { x.chunks(d).map(|c| c.to_vec()).collect() };
            let objective = |x: &[f64]| eval(&split(x));
            let (x, value, pool_best, trace) = multistart(objective, &lower, &upper, cfg, cfg.seed)?;
            Ok(BatchResult {
                batch: split(&x),
                value,
                pool_best,
                trace,
            })
        }
    }
}

type MultistartOutcome = (Vec<f64>, f64, f64, Vec<TraceEntry>);

fn multistart<F>(objective: F, lower: &[f64], upper: &[f64], cfg: &OptimizerConfig, seed: u64) -> Result<MultistartOutcome>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let dim = lower.len();
    let unit = if dim <= SOBOL_MAX_DIM {
        sobol_points(cfg.pool_size, dim, Some(seed))?
    } else {
        lhs_random(cfg.pool_size, dim, &mut ChaCha8Rng::seed_from_u64(seed))
    };
    let domain = BoxDomain {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    };
    let pool: DMatrix<f64> = domain.map_rows(&unit);
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(pool.nrows());
    for i in 0..pool.nrows() {
        let x: Vec<f64> = pool.row(i).iter().copied().collect();
        let v = objective(&x)?;
        scored.push((i, if v.is_finite() { v } else { f64::INFINITY }));
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    let pool_best = scored[0].1;

    let spacing = (cfg.pool_size as f64).powf(-1.0 / dim as f64);
    let opts = NelderMeadOptions {
        max_iter: cfg.local_iterations,
        ftol: 1e-12,
        xtol: 1e-7,
        initial_step: 0.5 * spacing,
    };
    let mut best: (Vec<f64>, f64) = (pool.row(scored[0].0).iter().copied().collect(), pool_best);
    let mut trace = Vec::new();
    for (start_id, &(idx, _)) in scored.iter().take(cfg.starts).enumerate() {
        let x0: Vec<f64> = pool.row(idx).iter().copied().collect();
        let r = nelder_mead(&objective, &x0, lower, upper, &opts)?;
        trace.push(TraceEntry {
            step: 0,
            start_id,
            iterations: r.iterations,
            best_value: r.value,
        });
        if r.value < best.1 {
            best = (r.x, r.value);
        }
    }
    Ok((best.0, best.1, pool_best, trace))
}

/// Writes the optimization trace as CSV (`step,start_id,iterations,best_value`).
pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceEntry], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for t in trace {
        wtr.serialize(t)?;
    }
    wtr.flush()?;
    Ok(())
}
