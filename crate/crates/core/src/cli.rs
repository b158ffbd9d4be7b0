//! Command-line interface of the `excursion` binary.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for
//! numerical failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::conservative::{conservative_level, write_search_trace_csv, ConservativeConfig};
use crate::criteria::{write_landscape_csv, CriterionContext, CriterionKind, CriterionSpec};
use crate::domain::{points_from_rows, BoxDomain};
use crate::error::{Error, Result};
use crate::excursion::{
    coverage, expected_measure, quantile, type1_expected, type2_uncertainty, vorobev_level, vorobev_uncertainty,
    write_coverage_csv, EstimateKind, ExcursionProblem, IntegrationGrid, Orientation,
};
use crate::gp::{mle_fit, Design, GpPosterior, KernelSpec, MaternNu, MleConfig, NoiseModel};
use crate::harness::{
    benchmark_gp, load_toml, read_design_csv, read_records_json, report, run_strategy, write_metrics_csv,
    write_records_json, BenchmarkFile, RunConfig, RunLabel, RunStatus,
};

#[derive(Parser, Debug)]
#[command(name = "excursion", version, about = "Excursion set estimation and sequential design with Gaussian processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model to a design CSV (x1..xd,y) by maximum likelihood.
    Fit(FitArgs),
    /// Coverage, Vorob'ev and conservative estimates from a fitted model.
    Estimate(EstimateArgs),
    /// Evaluate a sampling criterion on a regular grid of single-point candidates.
    CriterionMap(CriterionMapArgs),
    /// Run one sequential strategy described by a TOML file.
    Run(ConfigArgs),
    /// Run a benchmark study on Gaussian process sample paths.
    Benchmark(ConfigArgs),
    /// Write metric tables and a summary from saved run records.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, default_value = "5/2")]
    pub nu: MaternNu,
    /// Known noise variance; ignored with --estimate-noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub estimate_noise: bool,
    /// Domain bounds, comma separated; default to the design's bounding box.
    #[arg(long, value_delimiter = ',')]
    pub lower: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub upper: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OrientationArg {
    Above,
    Below,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GridArg {
    Sobol,
    Uniform,
    Full,
}

#[derive(Args, Debug)]
pub struct ProblemArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "above")]
    pub orientation: OrientationArg,
    #[arg(long, default_value_t = 0.95)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lower: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub upper: Vec<f64>,
    #[arg(long, value_enum, default_value = "sobol")]
    pub grid: GridArg,
    /// Point count (sobol, uniform) or nodes per axis (full).
    #[arg(long, default_value_t = 2000)]
    pub grid_size: usize,
    #[arg(long)]
    pub grid_seed: Option<u64>,
}

impl ProblemArgs {
    fn problem(&self) -> Result<ExcursionProblem> {
        let domain = BoxDomain::new(self.lower.clone(), self.upper.clone()).map_err(|e| Error::Config(e.to_string()))?;
        let grid = match self.grid {
            GridArg::Sobol => IntegrationGrid::sobol(&domain, self.grid_size, self.grid_seed)?,
            GridArg::Uniform => IntegrationGrid::uniform_random(&domain, self.grid_size, self.grid_seed.unwrap_or(0)),
            GridArg::Full => IntegrationGrid::full_grid(&domain, &vec![self.grid_size; domain.dim()])?,
        };
        let orientation = match self.orientation {
            OrientationArg::Above => Orientation::Above,
            OrientationArg::Below => Orientation::Below,
        };
        ExcursionProblem::new(self.threshold, orientation, self.alpha, domain, grid).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 100)]
    pub max_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CriterionArg {
    Jn,
    Jt2,
    Imse,
    Timse,
}

#[derive(Args, Debug)]
pub struct CriterionMapArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_enum)]
    pub criterion: CriterionArg,
    /// Level for J_n / J_T2; defaults to the current conservative level.
    #[arg(long)]
    pub level: Option<f64>,
    /// Candidate nodes per axis.
    #[arg(long, default_value_t = 50)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// JSON files holding one record or a list of records.
    #[arg(long, required = true, num_args = 1..)]
    pub records: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// A fitted model as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub kernel: KernelSpec,
    pub prior_mean: f64,
    pub noise_variance: f64,
    pub points: Vec<Vec<f64>>,
    pub observations: Vec<f64>,
    pub log_likelihood: Option<f64>,
}

impl SavedModel {
    pub fn from_posterior(p: &GpPosterior, log_likelihood: Option<f64>) -> Self {
        let d = p.design();
        Self {
            kernel: p.kernel().clone(),
            prior_mean: p.prior_mean(),
            noise_variance: p.noise_variance(),
            points: (0..d.len()).map(|i| d.points.row(i).iter().copied().collect()).collect(),
            observations: d.observations.iter().copied().collect(),
            log_likelihood,
        }
    }

    pub fn posterior(&self) -> Result<GpPosterior> {
        let pts = points_from_rows(&self.points, self.kernel.dim());
        let design = Design::new(pts, DVector::from_vec(self.observations.clone()), self.noise_variance)?;
        GpPosterior::fit(self.kernel.clone(), design, self.prior_mean)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::File::create(path)?)
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let design = read_design_csv(&a.design, a.noise)?;
    let d = design.dim();
    let (lo, hi) = (0..d).fold((vec![f64::INFINITY; d], vec![f64::NEG_INFINITY; d]), |(mut lo, mut hi), j| {
        for v in design.points.column(j).iter() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
        (lo, hi)
    });
    let lower = a.lower.clone().unwrap_or(lo);
    let upper = a.upper.clone().unwrap_or(hi);
    let domain = BoxDomain::new(lower, upper).map_err(|e| Error::Config(e.to_string()))?;
    let mut cfg = MleConfig::for_widths(a.nu, &domain.widths());
    cfg.noise = if a.estimate_noise {
        NoiseModel::Estimate {
            min_ratio: 1e-8,
            max_ratio: 1.0,
        }
    } else {
        NoiseModel::Fixed(a.noise)
    };
    cfg.starts = a.starts;
    cfg.seed = a.seed;
    let fit = mle_fit(&design, &cfg)?;
    let design = Design::new(design.points, design.observations, fit.noise_variance)?;
    let post = GpPosterior::fit(fit.kernel, design, fit.prior_mean)?;
    write_json(&SavedModel::from_posterior(&post, Some(fit.log_likelihood)), &a.out)?;
    log::info!("fitted model written to {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EstimateSummary {
    posterior_id: String,
    expected_measure: f64,
    rho_vorobev: f64,
    vorobev_measure: f64,
    vorobev_uncertainty: f64,
    median_measure: f64,
    rho_alpha: f64,
    conservative_measure: f64,
    conservative_empty_fallback: bool,
    inclusion_probability: f64,
    inclusion_std_error: f64,
    expected_type1: f64,
    expected_type2: f64,
}

fn cmd_estimate(a: &EstimateArgs) -> Result<()> {
    let post = SavedModel::load(&a.model)?.posterior()?;
    let prob = a.problem.problem()?;
    let field = coverage(&post, &prob)?;
    let grid = &prob.grid;
    let rho_v = vorobev_level(&field, grid);
    let median = quantile(&field, grid, 0.5, EstimateKind::Median);
    let vorobev = quantile(&field, grid, rho_v, EstimateKind::VorobevExpectation);
    let cfg = ConservativeConfig {
        samples: a.samples,
        max_points: a.max_points,
        seed: a.seed,
        ..Default::default()
    };
    let ce = conservative_level(&post, &prob, &field, grid, &cfg)?;
    fs::create_dir_all(&a.out)?;
    write_coverage_csv(grid, &field, &[&median, &vorobev, &ce.estimate], create(&a.out.join("coverage.csv"))?)?;
    write_search_trace_csv(&ce.trace, create(&a.out.join("search_trace.csv"))?)?;
    let summary = EstimateSummary {
        posterior_id: field.posterior_id.clone(),
        expected_measure: expected_measure(&field, grid),
        rho_vorobev: rho_v,
        vorobev_measure: vorobev.measure,
        vorobev_uncertainty: vorobev_uncertainty(&field, grid, rho_v),
        median_measure: median.measure,
        rho_alpha: ce.level,
        conservative_measure: ce.estimate.measure,
        conservative_empty_fallback: ce.empty_fallback,
        inclusion_probability: ce.inclusion.estimate,
        inclusion_std_error: ce.inclusion.std_error,
        expected_type1: type1_expected(&field, grid, ce.level),
        expected_type2: type2_uncertainty(&field, grid, ce.level),
    };
    write_json(&summary, &a.out.join("summary.json"))
}

fn cmd_criterion_map(a: &CriterionMapArgs) -> Result<()> {
    let post = SavedModel::load(&a.model)?.posterior()?;
    let prob = a.problem.problem()?;
    let kind = match a.criterion {
        CriterionArg::Jn => CriterionKind::Jn,
        CriterionArg::Jt2 => CriterionKind::JT2,
        CriterionArg::Imse => CriterionKind::Imse,
        CriterionArg::Timse => CriterionKind::Timse,
    };
    let level = match a.level {
        Some(l) => l,
        None if kind.needs_level() => {
            let field = coverage(&post, &prob)?;
            let cfg = ConservativeConfig {
                seed: a.seed,
                ..Default::default()
            };
            conservative_level(&post, &prob, &field, &prob.grid, &cfg)?.level
        }
        None => f64::NAN,
    };
    let spec = CriterionSpec::new(kind, level).map_err(|e| Error::Config(e.to_string()))?;
    let ctx = CriterionContext::new(&post, &prob)?;
    let cands = IntegrationGrid::full_grid(&prob.domain, &vec![a.resolution; prob.domain.dim()])?;
    write_landscape_csv(&ctx, &spec, &cands.points, create(&a.out)?)
}

fn cmd_run(a: &ConfigArgs) -> Result<()> {
    let cfg: RunConfig = load_toml(&a.config)?;
    let prob = cfg.problem()?;
    let objective = cfg.objective()?;
    let initial = cfg.initial_design()?;
    let record = run_strategy(objective.as_ref(), &cfg.strategy, &cfg.model, &prob, &initial, None, RunLabel::default())?;
    fs::create_dir_all(&a.out)?;
    write_records_json(std::slice::from_ref(&record), &a.out.join("record.json"))?;
    write_metrics_csv(std::slice::from_ref(&record), create(&a.out.join("metrics.csv"))?)?;
    if let RunStatus::Aborted { iteration, message } = record.status {
        return Err(Error::RunAborted { iteration, message });
    }
    Ok(())
}

fn cmd_benchmark(a: &ConfigArgs) -> Result<()> {
    let cfg: BenchmarkFile = load_toml(&a.config)?;
    let records = benchmark_gp(&cfg.benchmark)?;
    fs::create_dir_all(&a.out)?;
    write_records_json(&records, &a.out.join("records.json"))?;
    report(&records, &a.out)?;
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let mut records = Vec::new();
    for p in &a.records {
        records.extend(read_records_json(p)?);
    }
    report(&records, &a.out)?;
    Ok(())
}

/// Runs a parsed command.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::CriterionMap(a) => cmd_criterion_map(a),
        Command::Run(a) => cmd_run(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Entry point of the binary: parses arguments, runs, maps errors to exit codes.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
