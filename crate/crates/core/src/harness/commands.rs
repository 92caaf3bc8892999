use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::Controller;
use crate::error::{Error, Result};
use crate::gnn::{ChildModel, TrainedResult};
use crate::graph::LabeledDataset;
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::search::{self, top_k_report, Evaluator, SearchLog, SharedParamStore, Strategy};
use crate::space::{decode, ArchDescription};

use super::config::{Precision, RunConfig};
use super::report::{curve_path, mean_std, read_json, seconds_per_epoch, write_curve, write_rows, ReportRow};

const STREAM_REPEAT: u64 = 7;

pub const SEARCH_LOG: &str = "search.log";
pub const EXPLORATION_LOG: &str = "exploration.log";
pub const TOPK: &str = "topk.csv";
pub const SUMMARY: &str = "summary.json";
pub const CONTROLLER_CKPT: &str = "controller.ckpt";
pub const STORE_CKPT: &str = "store.ckpt";
pub const DERIVE: &str = "derive.json";
pub const TRAIN: &str = "train.json";
pub const REPORT: &str = "report.csv";

/// Written by `search` and `random`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub strategy: String,
    pub seed: u64,
    pub episodes: usize,
    pub best_arch: String,
    pub best_reward: f64,
    pub params: usize,
    pub depth: usize,
    pub feature_dim: usize,
    pub classes: usize,
    pub child_optimizer_steps: u64,
    pub diverged_children: usize,
    pub controller_steps: Option<u64>,
    pub store_entries: usize,
    pub store_hits: u64,
    pub store_misses: u64,
    pub store_merges: u64,
}

/// Written by `derive`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeriveSummary {
    pub candidates: Vec<(String, f64)>,
    pub best_index: usize,
    pub best_arch: String,
    pub params: usize,
    pub retrained: Option<TrainedResult>,
}

/// Written by `train`: one entry per repeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub arch: String,
    pub params: usize,
    pub depth: usize,
    pub seeds: Vec<u64>,
    pub runs: Vec<TrainedResult>,
    pub metric_mean: f64,
    pub metric_std: Option<f64>,
    pub seconds_per_epoch: Option<f64>,
}

fn prepare_out(config: &RunConfig) -> Result<PathBuf> {
    let out = config.run.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::config("out_dir", format!("{}: {e}", out.display())))?;
    Ok(out)
}

/// Element count of every weight of `arch` built for this dataset.
pub fn param_count_for<T: Scalar>(arch: &ArchDescription, dataset: &LabeledDataset<T>) -> Result<usize> {
    let model: ChildModel<T> = ChildModel::build(arch, dataset.feature_dim(), dataset.class_count(), &mut seeded(0))?;
    Ok(model.param_count())
}

fn write_log(log: &SearchLog, path: &Path) -> Result<()> {
    fs::write(path, log.to_string())?;
    Ok(())
}

fn search_typed<T: Scalar>(config: &RunConfig) -> Result<SearchSummary> {
    let out = prepare_out(config)?;
    let dataset: LabeledDataset<T> = config.load_dataset()?;
    let mut sink = BufWriter::new(File::create(out.join(SEARCH_LOG))?);
    let outcome = search::search(&config.search, Evaluator::Train(&dataset), Some(&mut sink))?;
    drop(sink);
    write_log(&outcome.exploration, &out.join(EXPLORATION_LOG))?;

    let top = top_k_report(&outcome.log, config.search.top_k)?;
    let mut w = csv::Writer::from_path(out.join(TOPK))?;
    w.write_record(["rank", "arch", "reward", "params"])?;
    for (rank, (arch, reward)) in top.iter().enumerate() {
        let params = param_count_for(arch, &dataset)?;
        w.write_record([(rank + 1).to_string(), arch.to_string(), reward.to_string(), params.to_string()])?;
    }
    w.flush()?;

    if let Some(c) = &outcome.controller {
        fs::write(out.join(CONTROLLER_CKPT), c.to_checkpoint())?;
    }
    fs::write(out.join(STORE_CKPT), outcome.store.to_checkpoint())?;

    let (best_arch, best_reward) = top.first().cloned().ok_or_else(|| Error::config("episodes", "must be at least 1"))?;
    let summary = SearchSummary {
        strategy: config.search.strategy.name().to_string(),
        seed: config.search.seed,
        episodes: config.search.episodes,
        best_arch: best_arch.to_string(),
        best_reward,
        params: param_count_for(&best_arch, &dataset)?,
        depth: best_arch.depth(),
        feature_dim: dataset.feature_dim(),
        classes: dataset.class_count(),
        child_optimizer_steps: outcome.child_optimizer_steps,
        diverged_children: outcome.diverged_children,
        controller_steps: outcome.controller.as_ref().map(Controller::optimizer_steps),
        store_entries: outcome.store.len(),
        store_hits: outcome.store.hits(),
        store_misses: outcome.store.misses(),
        store_merges: outcome.store.merges(),
    };
    fs::write(out.join(SUMMARY), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn derive_typed<T: Scalar>(config: &RunConfig) -> Result<DeriveSummary> {
    let out = prepare_out(config)?;
    let dataset: LabeledDataset<T> = config.load_dataset()?;
    let space = config.search.space.build()?;
    let ckpt = out.join(CONTROLLER_CKPT);
    let text = fs::read_to_string(&ckpt)
        .map_err(|e| Error::config("out_dir", format!("{}: {e}; run `search` first", ckpt.display())))?;
    let mut controller: Controller<T> = Controller::new(&space, config.search.controller.clone(), &mut seeded(0))?;
    controller.load_checkpoint(&text)?;
    let store = match fs::read_to_string(out.join(STORE_CKPT)) {
        Ok(text) => SharedParamStore::from_checkpoint(&text)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => SharedParamStore::new(),
        Err(e) => return Err(e.into()),
    };
    let d = search::derive(&controller, &store, Evaluator::Train(&dataset), &config.search)?;
    let summary = DeriveSummary {
        candidates: d.candidates.iter().map(|(a, s)| (a.to_string(), *s)).collect(),
        best_index: d.best_index,
        best_arch: d.best_arch.to_string(),
        params: param_count_for(&d.best_arch, &dataset)?,
        retrained: d.retrained,
    };
    fs::write(out.join(DERIVE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn train_typed<T: Scalar>(config: &RunConfig, arch: &ArchDescription) -> Result<TrainSummary> {
    let out = prepare_out(config)?;
    let dataset: LabeledDataset<T> = config.load_dataset()?;
    let seeds: Vec<u64> = (0..config.run.repeats).map(|r| derive_seed(config.search.seed, STREAM_REPEAT, r as u64)).collect();
    let runs = seeds
        .iter()
        .map(|&s| search::retrain(arch, &dataset, &config.search.child, s))
        .collect::<Result<Vec<_>>>()?;
    let metrics: Vec<f64> = runs.iter().map(|r| r.test_metric).collect();
    let (metric_mean, metric_std) = mean_std(&metrics);
    let summary = TrainSummary {
        arch: arch.to_string(),
        params: param_count_for(arch, &dataset)?,
        depth: arch.depth(),
        seeds,
        seconds_per_epoch: seconds_per_epoch(&runs),
        runs,
        metric_mean,
        metric_std,
    };
    fs::write(out.join(TRAIN), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

/// Runs the configured search and writes its artifacts to the output directory.
pub fn cmd_search(config: &RunConfig) -> Result<SearchSummary> {
    config.validate()?;
    match config.run.precision {
        Precision::F32 => search_typed::<f32>(config),
        Precision::F64 => search_typed::<f64>(config),
    }
}

/// Random search: `cmd_search` with the strategy forced to `random`.
pub fn cmd_random(config: &RunConfig) -> Result<SearchSummary> {
    let mut config = config.clone();
    config.search.strategy = Strategy::Random;
    config.search.share_params = false;
    config.search.exploration_epochs = 0;
    cmd_search(&config)
}

/// Samples from a saved controller, picks the best candidate and retrains it.
pub fn cmd_derive(config: &RunConfig) -> Result<DeriveSummary> {
    config.validate()?;
    match config.run.precision {
        Precision::F32 => derive_typed::<f32>(config),
        Precision::F64 => derive_typed::<f64>(config),
    }
}

/// Trains an explicit token string `repeats` times with derived seeds.
pub fn cmd_train(config: &RunConfig, arch_tokens: &str) -> Result<TrainSummary> {
    config.validate()?;
    let arch = decode(arch_tokens)?;
    match config.run.precision {
        Precision::F32 => train_typed::<f32>(config, &arch),
        Precision::F64 => train_typed::<f64>(config, &arch),
    }
}

fn report_row(dir: &Path, log: &SearchLog) -> Result<ReportRow> {
    let summary: Option<SearchSummary> = read_json(&dir.join(SUMMARY))?;
    let model = match &summary {
        Some(s) => s.strategy.clone(),
        None => dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into()),
    };
    if let Some(t) = read_json::<TrainSummary>(&dir.join(TRAIN))? {
        return Ok(ReportRow {
            model,
            depth: t.depth,
            params: t.params,
            arch: t.arch,
            seconds_per_epoch: t.seconds_per_epoch,
            metric_mean: t.metric_mean,
            metric_std: t.metric_std,
        });
    }
    if let Some(DeriveSummary { best_arch, params, retrained: Some(result), .. }) = read_json(&dir.join(DERIVE))? {
        return Ok(ReportRow {
            model,
            depth: decode(&best_arch)?.depth(),
            arch: best_arch,
            params,
            seconds_per_epoch: seconds_per_epoch(std::slice::from_ref(&result)),
            metric_mean: result.test_metric,
            metric_std: None,
        });
    }
    let top = top_k_report(log, 1)?;
    let (arch, reward) = top.first().cloned().ok_or_else(|| Error::config("report", format!("{}: empty log", dir.display())))?;
    Ok(ReportRow {
        model,
        depth: arch.depth(),
        params: summary.map(|s| if s.best_arch == arch.to_string() { s.params } else { 0 }).unwrap_or(0),
        arch: arch.to_string(),
        seconds_per_epoch: None,
        metric_mean: reward,
        metric_std: None,
    })
}

/// Aggregates run directories into `report.csv` and one curve file per run.
/// Each row prefers `train.json`, then the retrained result in
/// `derive.json`, then the best validation reward of the search log.
pub fn cmd_report(config: &RunConfig, runs: &[PathBuf]) -> Result<Vec<ReportRow>> {
    if runs.is_empty() {
        return Err(Error::config("runs", "at least one run directory is required"));
    }
    let out = prepare_out(config)?;
    let mut rows = Vec::with_capacity(runs.len());
    let mut taken = Vec::new();
    for dir in runs {
        let path = dir.join(SEARCH_LOG);
        let text = fs::read_to_string(&path).map_err(|e| Error::config("runs", format!("{}: {e}", path.display())))?;
        let log = SearchLog::parse(&text)?;
        let row = report_row(dir, &log)?;
        write_curve(&log, config.run.curve_threshold, &curve_path(&out, &row.model, &mut taken))?;
        rows.push(row);
    }
    write_rows(&rows, &out.join(REPORT))?;
    Ok(rows)
}
