//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::benchmark::BenchmarkConfig;
use super::objective::{CriticalityFunction, GpSamplePath, Objective, SurrogateObjective};
use super::strategy::{ModelConfig, StrategyConfig};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::excursion::{ExcursionProblem, IntegrationGrid, Orientation};
use crate::gp::{mle_fit, Design, GpPosterior, MleConfig};
use crate::randfield::{lhs_maximin, SeedStreams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub threshold: f64,
    pub orientation: Orientation,
    pub alpha: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Sobol,
    Uniform,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub kind: GridKind,
    /// Point count (`sobol`, `uniform`) or nodes per axis (`full`).
    pub size: usize,
    /// Scrambling seed (`sobol`) or sampling seed (`uniform`).
    pub seed: Option<u64>,
}

impl GridConfig {
    pub fn build(&self, domain: &BoxDomain) -> Result<IntegrationGrid> {
        match self.kind {
            GridKind::Sobol => IntegrationGrid::sobol(domain, self.size, self.seed),
            GridKind::Uniform => Ok(IntegrationGrid::uniform_random(domain, self.size, self.seed.unwrap_or(0))),
            GridKind::Full => IntegrationGrid::full_grid(domain, &vec![self.size; domain.dim()]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    /// Built-in two-parameter criticality-style response.
    Criticality,
    /// Sample path of the model's prior process.
    GpPath { per_axis: usize, seed: u64 },
    /// Posterior mean of a model fitted by maximum likelihood to a CSV table.
    Table { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDesignConfig {
    /// Maximin LHS size, ignored when `path` is set.
    #[serde(default)]
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
    /// CSV with columns `x1..xd` (an optional `y` column is ignored).
    pub path: Option<PathBuf>,
}

/// Configuration of the `run` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub objective: ObjectiveConfig,
    pub initial: InitialDesignConfig,
    pub strategy: StrategyConfig,
}

/// Configuration of the `benchmark` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkFile {
    pub benchmark: BenchmarkConfig,
}

pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_toml(&text)
}

impl RunConfig {
    pub fn domain(&self) -> Result<BoxDomain> {
        BoxDomain::new(self.problem.lower.clone(), self.problem.upper.clone()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn problem(&self) -> Result<ExcursionProblem> {
        let domain = self.domain()?;
        let grid = self.grid.build(&domain)?;
        ExcursionProblem::new(self.problem.threshold, self.problem.orientation, self.problem.alpha, domain, grid)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn objective(&self) -> Result<Box<dyn Objective>> {
        let domain = self.domain()?;
        Ok(match &self.objective {
            ObjectiveConfig::Criticality => {
                let f = CriticalityFunction::default();
                if f.domain() != &domain {
                    return Err(Error::Config("criticality objective lives on [0.2,5.2]x[0,5]".into()));
                }
                Box::new(f)
            }
            ObjectiveConfig::GpPath { per_axis, seed } => {
                Box::new(GpSamplePath::sample(&self.model.kernel()?, &domain, *per_axis, *seed)?)
            }
            ObjectiveConfig::Table { path } => {
                let design = read_design_csv(path, 0.0)?;
                let mut mle = MleConfig::for_widths(self.model.nu, &domain.widths());
                mle.seed = self.initial.seed;
                let fit = mle_fit(&design, &mle)?;
                let design = Design::new(design.points, design.observations, fit.noise_variance)?;
                Box::new(SurrogateObjective::new(
                    GpPosterior::fit(fit.kernel, design, fit.prior_mean)?,
                    domain,
                ))
            }
        })
    }

    pub fn initial_design(&self) -> Result<DMatrix<f64>> {
        let domain = self.domain()?;
        match &self.initial.path {
            Some(p) => Ok(read_points_csv(p)?.0),
            None => {
                if self.initial.size == 0 {
                    return Err(Error::Config("initial design size must be positive".into()));
                }
                let seed = SeedStreams::new(self.initial.seed).seed("doe", 0);
                Ok(domain.map_rows(&lhs_maximin(self.initial.size, domain.dim(), seed)))
            }
        }
    }
}

/// Reads `x1..xd[,y]` columns; returns the points and the `y` column if present.
pub fn read_points_csv(path: &Path) -> Result<(DMatrix<f64>, Option<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let xcols: Vec<usize> = (0..headers.len()).filter(|i| headers[*i].trim().starts_with('x')).collect();
    let ycol = (0..headers.len()).find(|i| headers[*i].trim() == "y");
    if xcols.is_empty() {
        return Err(Error::Config(format!("{}: no x1..xd columns", path.display())));
    }
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{}: bad number `{}`: {e}", path.display(), &rec[i])))
        };
        rows.push(xcols.iter().map(|i| parse(*i)).collect::<Result<Vec<f64>>>()?);
        if let Some(y) = ycol {
            ys.push(parse(y)?);
        }
    }
    let pts = DMatrix::from_fn(rows.len(), xcols.len(), |i, j| rows[i][j]);
    Ok((pts, ycol.map(|_| ys)))
}

/// Reads a design with observations (`x1..xd,y`).
pub fn read_design_csv(path: &Path, noise_variance: f64) -> Result<Design> {
    let (pts, y) = read_points_csv(path)?;
    let y = y.ok_or_else(|| Error::Config(format!("{}: missing y column", path.display())))?;
    Design::new(pts, nalgebra::DVector::from_vec(y), noise_variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::strategy::StrategyKind;

    pub const RUN_EXAMPLE: &str = r#"
[problem]
threshold = 0.92
orientation = "below"
alpha = 0.95
lower = [0.2, 0.0]
upper = [5.2, 5.0]

[grid]
kind = "sobol"
size = 500

[model]
nu = "5/2"
lengthscales = [1.0, 1.0]
variance = 0.1
estimate = true

[objective]
kind = "criticality"

[initial]
size = 15
seed = 3

[strategy]
kind = "C"
q = 3
iterations = 2
seed = 7

[strategy.optimizer]
starts = 2
pool_size = 64
"#;

    #[test]
    fn parses_run_config() {
        let cfg: RunConfig = parse_toml(RUN_EXAMPLE).unwrap();
        assert_eq!(cfg.strategy.kind, StrategyKind::C);
        assert_eq!(cfg.strategy.optimizer.starts, 2);
        assert_eq!(cfg.strategy.optimizer.local_iterations, 200);
        assert_eq!(cfg.problem.orientation, Orientation::Below);
        let prob = cfg.problem().unwrap();
        assert_eq!(prob.grid.len(), 500);
        assert_eq!(cfg.initial_design().unwrap().nrows(), 15);
        assert_eq!(cfg.objective().unwrap().name(), "criticality");
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = RUN_EXAMPLE.replace("threshold = 0.92", "threshold = 0.92\ncolour = 1");
        assert!(matches!(parse_toml::<RunConfig>(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn parses_benchmark_defaults() {
        let b: BenchmarkFile = parse_toml("[benchmark]\ndim = 2\nm_doe = 1\nreplications = 2\niterations = 3\n").unwrap();
        let b = b.benchmark;
        assert_eq!(b.n_init(), 3);
        assert_eq!(b.grid_size(), 4000);
        assert_eq!(b.truth_per_axis(), 100);
        assert_eq!(b.strategies.len(), 5);
        assert_eq!(BenchmarkConfig::new(5, 1, 1, 1).n_init(), 6);
    }
}
