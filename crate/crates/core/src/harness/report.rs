use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::TrainedResult;
use crate::search::SearchLog;

/// One row of `report.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub arch: String,
    pub depth: usize,
    pub params: usize,
    pub seconds_per_epoch: Option<f64>,
    pub metric_mean: f64,
    /// Present only with more than one run.
    pub metric_std: Option<f64>,
}

/// Median of per-epoch times, each run's first (warm-up) epoch excluded.
/// Falls back to the first epoch when a run has only one.
pub fn seconds_per_epoch(results: &[TrainedResult]) -> Option<f64> {
    let mut times: Vec<f64> = results
        .iter()
        .flat_map(|r| if r.epoch_seconds.len() > 1 { &r.epoch_seconds[1..] } else { &r.epoch_seconds[..] })
        .copied()
        .collect();
    if times.is_empty() {
        return None;
    }
    times.sort_by(f64::total_cmp);
    let m = times.len() / 2;
    Some(if times.len() % 2 == 1 { times[m] } else { (times[m - 1] + times[m]) / 2.0 })
}

/// Mean and sample standard deviation; the deviation is `None` for one value.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Writes `episode,cumulative_best,count_above` for one search log.
pub fn write_curve(log: &SearchLog, threshold: f64, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "cumulative_best", "count_above"])?;
    for ((r, best), count) in log.records.iter().zip(log.cumulative_best()).zip(log.count_above(threshold)) {
        w.write_record([r.episode.to_string(), best.to_string(), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `curve_<strategy>.csv`, with `_2`, `_3`, ... appended for repeated strategies.
pub fn curve_path(out: &Path, strategy: &str, taken: &mut Vec<PathBuf>) -> PathBuf {
    let mut k = 1;
    loop {
        let name = if k == 1 { format!("curve_{strategy}.csv") } else { format!("curve_{strategy}_{k}.csv") };
        let p = out.join(name);
        if !taken.contains(&p) {
            taken.push(p.clone());
            return p;
        }
        k += 1;
    }
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::Io(e)),
    }
}
