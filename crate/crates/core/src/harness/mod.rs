//! Strategy loops, benchmark studies, metrics and reports.

mod benchmark;
mod config;
mod objective;
mod report;
mod strategy;

pub use benchmark::{aggregate, benchmark_gp, final_rows, AggregateRow, BenchmarkConfig, Summary};
pub use config::{
    load_toml, parse_toml, read_design_csv, read_points_csv, BenchmarkFile, GridConfig, GridKind, InitialDesignConfig,
    ObjectiveConfig, ProblemConfig, RunConfig,
};
pub use objective::{observe, CriticalityFunction, FnObjective, GpSamplePath, Objective, SurrogateObjective};
pub use report::{
    read_records_json, report, summarize, write_final_volume_csv, write_metrics_csv, write_records_json, ReportSummary,
    METRIC_COLUMNS,
};
pub use strategy::{
    run_strategy, Hyperparameters, IterationRecord, ModelConfig, RunLabel, RunRecord, RunStatus, StrategyConfig,
    StrategyKind,
};

#[cfg(test)]
mod tests;
