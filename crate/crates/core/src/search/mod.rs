//! The outer search loop: controller updates, child evaluation, parameter
//! sharing, the baseline strategies and architecture derivation.

mod config;
mod log;
mod store;
mod surrogate;

pub use config::{SearchConfig, SpaceConfig, Strategy};
pub use log::{top_k_report, LogRecord, SearchLog};
pub use store::SharedParamStore;
pub use surrogate::SurrogateTable;

pub use crate::gnn::ShareKey;

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::controller::{shape_reward, Baseline, Controller, Episode};
use crate::error::{Error, Result};
use crate::gnn::{evaluate, train_child, ChildModel, TrainHyperparams, TrainedResult};
use crate::graph::{LabeledDataset, MaskKind, SplitMask};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::space::{ActionSpace, ArchDescription};

const STREAM_CONTROLLER: u64 = 1;
const STREAM_CHILD: u64 = 2;
const STREAM_EXPLORE: u64 = 3;
const STREAM_RANDOM: u64 = 4;
const STREAM_DERIVE: u64 = 5;
const STREAM_INIT: u64 = 6;

/// Where rewards come from.
#[derive(Clone, Copy, Debug)]
pub enum Evaluator<'a, T> {
    /// Train child models on a dataset; the reward is the validation metric.
    Train(&'a LabeledDataset<T>),
    /// Look rewards up in a table; no models are built.
    Surrogate(&'a SurrogateTable),
}

/// How a child is trained before it is scored.
#[derive(Clone, Debug)]
struct Regime {
    use_store: bool,
    hp: TrainHyperparams,
}

/// Everything a search produces.
#[derive(Debug)]
pub struct SearchOutcome<T> {
    pub log: SearchLog,
    pub exploration: SearchLog,
    pub controller: Option<Controller<T>>,
    pub store: SharedParamStore<T>,
    pub baseline: Baseline,
    /// Optimizer steps taken on child weights over the whole search.
    pub child_optimizer_steps: u64,
    pub diverged_children: usize,
}

/// Result of scoring one child.
struct Scored<T> {
    raw: f64,
    model: Option<ChildModel<T>>,
    steps: u64,
    diverged: bool,
}

/// Trains (or looks up) one architecture. Divergent training scores 0.
fn score_arch<T: Scalar>(
    arch: &ArchDescription,
    evaluator: Evaluator<'_, T>,
    store: &SharedParamStore<T>,
    regime: &Regime,
    seed: u64,
) -> Result<Scored<T>> {
    let dataset = match evaluator {
        Evaluator::Surrogate(table) => return Ok(Scored { raw: table.reward(arch)?, model: None, steps: 0, diverged: false }),
        Evaluator::Train(d) => d,
    };
    let mut init = seeded(derive_seed(seed, STREAM_INIT, 0));
    let mut model = if regime.use_store {
        ChildModel::build_with(arch, dataset.feature_dim(), dataset.class_count(), |k| Ok(store.fetch_copy(k, &mut init)))?
    } else {
        ChildModel::build(arch, dataset.feature_dim(), dataset.class_count(), &mut init)?
    };
    let hp = TrainHyperparams { seed, ..regime.hp.clone() };
    match train_child(&mut model, dataset, &hp) {
        Ok(r) => Ok(Scored { raw: r.best_val_metric, model: Some(model), steps: r.optimizer_steps, diverged: false }),
        Err(Error::Training { .. }) => Ok(Scored { raw: 0.0, model: None, steps: 0, diverged: true }),
        Err(e) => Err(e),
    }
}

fn merge_layers<T: Scalar>(store: &mut SharedParamStore<T>, model: Option<&ChildModel<T>>, shaped: f64) -> Result<()> {
    if let Some(m) = model {
        for layer in m.layers() {
            store.merge_if_positive(layer, shaped)?;
        }
    }
    Ok(())
}

fn emit(sink: &mut Option<&mut dyn Write>, record: &LogRecord) -> Result<()> {
    if let Some(w) = sink.as_mut() {
        writeln!(w, "{}", record.to_line())?;
        w.flush()?;
    }
    Ok(())
}

/// Trains shared weights on uniformly random architectures with the
/// controller frozen. Each round's shaped reward (from the shared
/// baseline) gates the merge back into the store.
pub fn exploration_phase<T: Scalar>(
    store: &mut SharedParamStore<T>,
    baseline: &mut Baseline,
    space: &ActionSpace,
    evaluator: Evaluator<'_, T>,
    config: &SearchConfig,
) -> Result<SearchLog> {
    let regime = config.shared_regime();
    let mut log = SearchLog::default();
    for round in 0..config.exploration_epochs {
        let start = Instant::now();
        let arch = space.random_arch(&mut seeded(derive_seed(config.seed, STREAM_EXPLORE, round as u64)));
        let scored = score_arch(&arch, evaluator, store, &regime, derive_seed(config.seed, STREAM_EXPLORE, round as u64 + (1 << 32)))?;
        let shaped = shape_reward(scored.raw, baseline, 0.0, config.controller.entropy_weight)?;
        merge_layers(store, scored.model.as_ref(), shaped)?;
        log.records.push(LogRecord {
            episode: round,
            arch,
            raw_reward: scored.raw,
            shaped_reward: shaped,
            baseline: baseline.value,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(log)
}

/// Runs the configured strategy for `config.episodes` episodes. Records are
/// also written to `sink` as they are produced.
pub fn search<T: Scalar>(
    config: &SearchConfig,
    evaluator: Evaluator<'_, T>,
    mut sink: Option<&mut dyn Write>,
) -> Result<SearchOutcome<T>> {
    config.validate()?;
    let space = config.space.build()?;
    let mut store = SharedParamStore::new();
    let mut baseline = Baseline::new(config.controller.baseline_decay);
    let mut controller = match config.strategy {
        Strategy::Random => None,
        _ => Some(Controller::new(&space, config.controller.clone(), &mut seeded(derive_seed(config.seed, STREAM_CONTROLLER, 0)))?),
    };
    let mut sample_rng = seeded(derive_seed(config.seed, STREAM_CONTROLLER, 1));
    let regime = config.regime();

    let exploration = if config.strategy == Strategy::GraphNas && regime.use_store {
        let before = controller.as_ref().map(Controller::fingerprint);
        let log = exploration_phase(&mut store, &mut baseline, &space, evaluator, config)?;
        if controller.as_ref().map(Controller::fingerprint) != before {
            return Err(Error::Invariant("exploration changed the controller".into()));
        }
        log
    } else {
        SearchLog::default()
    };

    let mut log = SearchLog::default();
    let mut batch: Vec<Episode> = Vec::new();
    let mut child_steps = 0;
    let mut diverged = 0;
    for episode in 0..config.episodes {
        let start = Instant::now();
        let child_seed = derive_seed(config.seed, STREAM_CHILD, episode as u64);
        let mut ep = match &controller {
            Some(c) => c.sample_architecture(&mut sample_rng),
            None => {
                let arch = space.random_arch(&mut seeded(derive_seed(config.seed, STREAM_RANDOM, episode as u64)));
                Episode { tokens: space.to_indices(&arch)?, arch, log_prob_sum: 0.0, entropy_sum: 0.0, reward: None, shaped_reward: None }
            }
        };
        let scored = score_arch(&ep.arch, evaluator, &store, &regime, child_seed)?;
        child_steps += scored.steps;
        diverged += usize::from(scored.diverged);
        let shaped = shape_reward(scored.raw, &mut baseline, ep.entropy_sum, config.controller.entropy_weight)?;
        ep.reward = Some(scored.raw);
        ep.shaped_reward = Some(shaped);
        let record = LogRecord {
            episode,
            arch: ep.arch.clone(),
            raw_reward: scored.raw,
            shaped_reward: shaped,
            baseline: baseline.value,
            wall_ms: 0.0,
        };
        if let Some(c) = controller.as_mut() {
            batch.push(ep);
            if batch.len() == config.controller.batch_size {
                c.reinforce_step(&batch)?;
                batch.clear();
            }
        }
        if regime.use_store {
            merge_layers(&mut store, scored.model.as_ref(), shaped)?;
        }
        let record = LogRecord { wall_ms: start.elapsed().as_secs_f64() * 1e3, ..record };
        emit(&mut sink, &record)?;
        log.records.push(record);
    }
    Ok(SearchOutcome {
        log,
        exploration,
        controller,
        store,
        baseline,
        child_optimizer_steps: child_steps,
        diverged_children: diverged,
    })
}

/// Outcome of [`derive`].
#[derive(Clone, Debug)]
pub struct DeriveOutcome {
    /// Sampled candidates with their cheap scores, in sampling order.
    pub candidates: Vec<(ArchDescription, f64)>,
    pub best_index: usize,
    pub best_arch: ArchDescription,
    /// Retraining from scratch; `None` with a surrogate evaluator.
    pub retrained: Option<TrainedResult>,
}

/// Validation subset of at most `size` (graph, node) pairs; 0 keeps all.
fn val_minibatch<T: Scalar>(dataset: &LabeledDataset<T>, size: usize, seed: u64) -> Result<LabeledDataset<T>> {
    let total = dataset.mask_size(MaskKind::Val);
    if size == 0 || size >= total {
        return Ok(dataset.clone());
    }
    let mut pairs: Vec<(usize, usize)> =
        dataset.masks().iter().enumerate().flat_map(|(g, m)| m.val.iter().map(move |&v| (g, v))).collect();
    pairs.shuffle(&mut seeded(seed));
    pairs.truncate(size);
    let masks = dataset
        .masks()
        .iter()
        .enumerate()
        .map(|(g, m)| {
            let val = pairs.iter().filter(|p| p.0 == g).map(|p| p.1).collect();
            SplitMask::new(m.train.clone(), val, m.test.clone())
        })
        .collect();
    dataset.with_masks(masks)
}

/// Samples `derive_samples` architectures from the controller, scores each
/// after `derive_iterations` shared-weight epochs on a validation
/// minibatch, and retrains the best (earliest on ties) from scratch with
/// the full child hyperparameters. The store is read, never written.
pub fn derive<T: Scalar>(
    controller: &Controller<T>,
    store: &SharedParamStore<T>,
    evaluator: Evaluator<'_, T>,
    config: &SearchConfig,
) -> Result<DeriveOutcome> {
    if config.derive_samples == 0 {
        return Err(Error::config("derive_samples", "must be at least 1"));
    }
    let mut rng = seeded(derive_seed(config.seed, STREAM_DERIVE, 0));
    let regime = Regime {
        use_store: config.regime().use_store,
        hp: TrainHyperparams {
            max_epochs: config.derive_iterations,
            patience: config.derive_iterations,
            dropout_p: 0.0,
            l2_lambda: 0.0,
            ..config.child.clone()
        },
    };
    let mut candidates = Vec::with_capacity(config.derive_samples);
    for i in 0..config.derive_samples {
        let arch = controller.sample_architecture(&mut rng).arch;
        let seed = derive_seed(config.seed, STREAM_DERIVE, i as u64 + 1);
        let score = match evaluator {
            Evaluator::Surrogate(t) => t.reward(&arch)?,
            Evaluator::Train(dataset) => {
                let batch = val_minibatch(dataset, config.derive_minibatch, seed)?;
                match score_arch(&arch, Evaluator::Train(dataset), store, &regime, seed)?.model {
                    Some(model) => evaluate(&model, &batch, MaskKind::Val)?,
                    None => 0.0,
                }
            }
        };
        candidates.push((arch, score));
    }
    let mut best_index = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.1 > candidates[best_index].1 {
            best_index = i;
        }
    }
    let best_arch = candidates[best_index].0.clone();
    let retrained = match evaluator {
        Evaluator::Surrogate(_) => None,
        Evaluator::Train(dataset) => Some(retrain(&best_arch, dataset, &config.child, derive_seed(config.seed, STREAM_DERIVE, u32::MAX as u64))?),
    };
    Ok(DeriveOutcome { candidates, best_index, best_arch, retrained })
}

/// Trains `arch` from scratch with fresh weights.
pub fn retrain<T: Scalar>(arch: &ArchDescription, dataset: &LabeledDataset<T>, hp: &TrainHyperparams, seed: u64) -> Result<TrainedResult> {
    let mut model = ChildModel::build(arch, dataset.feature_dim(), dataset.class_count(), &mut seeded(derive_seed(seed, STREAM_INIT, 0)))?;
    train_child(&mut model, dataset, &TrainHyperparams { seed, ..hp.clone() })
}
