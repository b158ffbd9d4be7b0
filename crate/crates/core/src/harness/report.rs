//! Metric tables and summaries written from run records.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::benchmark::{aggregate, final_rows, AggregateRow};
use super::strategy::RunRecord;
use crate::error::{Error, Result};

pub const METRIC_COLUMNS: [&str; 14] = [
    "strategy",
    "doe",
    "replication",
    "iteration",
    "n",
    "rho_alpha",
    "rho_vorobev",
    "ce_measure",
    "expected_type1",
    "expected_type2",
    "vorobev_uncertainty",
    "relative_volume_error",
    "proportion_inside",
    "criterion_value",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sorted(records: &[RunRecord]) -> Vec<&RunRecord> {
    let mut v: Vec<&RunRecord> = records.iter().collect();
    v.sort_by_key(|r| (r.strategy, r.doe, r.replication));
    v
}

/// One row per (strategy, doe, replication, iteration), in that order.
/// Wall times are left out so the table is reproducible byte for byte.
pub fn write_metrics_csv<W: Write>(records: &[RunRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(METRIC_COLUMNS)?;
    for r in sorted(records) {
        for it in &r.iterations {
            wtr.write_record([
                r.strategy.as_str().to_string(),
                r.doe.to_string(),
                r.replication.to_string(),
                it.iteration.to_string(),
                it.n.to_string(),
                it.rho_alpha.to_string(),
                it.rho_vorobev.to_string(),
                it.ce_measure.to_string(),
                it.expected_type1.to_string(),
                it.expected_type2.to_string(),
                it.vorobev_uncertainty.to_string(),
                opt(it.relative_volume_error),
                it.proportion_inside.to_string(),
                opt(it.criterion_value),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Mean and median of one metric by strategy and iteration.
fn write_series_csv<W: Write>(rows: &[AggregateRow], pick: fn(&AggregateRow) -> Option<super::benchmark::Summary>, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["strategy", "iteration", "mean", "median", "count"])?;
    for r in rows {
        if let Some(s) = pick(r) {
            wtr.write_record([
                r.strategy.as_str().to_string(),
                r.iteration.to_string(),
                s.mean.to_string(),
                s.median.to_string(),
                s.count.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Final conservative-estimate measure of every run.
pub fn write_final_volume_csv<W: Write>(records: &[RunRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["strategy", "doe", "replication", "iteration", "ce_measure"])?;
    for r in sorted(records) {
        if let Some(last) = r.last() {
            wtr.write_record([
                r.strategy.as_str().to_string(),
                r.doe.to_string(),
                r.replication.to_string(),
                last.iteration.to_string(),
                last.ce_measure.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs: usize,
    pub aborted: usize,
    pub final_by_strategy: Vec<AggregateRow>,
}

pub fn summarize(records: &[RunRecord]) -> ReportSummary {
    ReportSummary {
        runs: records.len(),
        aborted: records
            .iter()
            .filter(|r| !matches!(r.status, super::strategy::RunStatus::Complete))
            .count(),
        final_by_strategy: final_rows(&aggregate(records)),
    }
}

pub fn write_records_json(records: &[RunRecord], path: &Path) -> Result<()> {
    let f = fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(f), records)?;
    Ok(())
}

pub fn read_records_json(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path)?;
    // a single record is accepted as well as a list
    match serde_json::from_str::<Vec<RunRecord>>(&text) {
        Ok(v) => Ok(v),
        Err(_) => Ok(vec![serde_json::from_str::<RunRecord>(&text)?]),
    }
}

/// Writes `metrics.csv`, `type2_by_iteration.csv`, `proportion_inside.csv`,
/// `relative_volume_error.csv`, `final_volume.csv` and `summary.json` into
/// `dir`, returning the paths written.
pub fn report(records: &[RunRecord], dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("report needs at least one record".into()));
    }
    fs::create_dir_all(dir)?;
    let rows = aggregate(records);
    let mut written = Vec::new();
    let mut create = |name: &str| -> Result<fs::File> {
        let p = dir.join(name);
        written.push(p.clone());
        Ok(fs::File::create(p)?)
    };
    write_metrics_csv(records, create("metrics.csv")?)?;
    write_series_csv(&rows, |r| Some(r.expected_type2), create("type2_by_iteration.csv")?)?;
    write_series_csv(&rows, |r| Some(r.proportion_inside), create("proportion_inside.csv")?)?;
    write_series_csv(&rows, |r| r.relative_volume_error, create("relative_volume_error.csv")?)?;
    write_final_volume_csv(records, create("final_volume.csv")?)?;
    let summary = summarize(records);
    serde_json::to_writer_pretty(create("summary.json")?, &summary)?;
    Ok(written)
}
