use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{node_loss, AdamConfig, AdamState, Tape, Targets, Tensor};
use crate::error::{Error, Result};
use crate::graph::{Labels, LabeledDataset, MaskKind, TaskKind};
use crate::rng::seeded;
use crate::scalar::Scalar;

use super::model::ChildModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyperparams {
    pub lr: f64,
    pub l2_lambda: f64,
    pub dropout_p: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainHyperparams {
    fn default() -> Self {
        TrainHyperparams { lr: 0.005, l2_lambda: 5e-4, dropout_p: 0.6, max_epochs: 200, patience: 100, seed: 0 }
    }
}

impl TrainHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Parameter(format!("learning rate {} must be positive", self.lr)));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::Parameter(format!("l2 weight {} must be non-negative", self.l2_lambda)));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Parameter(format!("dropout probability {} outside [0, 1)", self.dropout_p)));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Parameter(format!("patience {} exceeds max epochs {}", self.patience, self.max_epochs)));
        }
        Ok(())
    }
}

/// Outcome of [`train_child`]. The trained weights stay in the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedResult {
    pub best_val_metric: f64,
    pub best_val_loss: f64,
    pub test_metric: f64,
    pub epochs_ran: usize,
    /// Epoch whose weights were kept; 0 means the initial weights.
    pub best_epoch: usize,
    pub epoch_seconds: Vec<f64>,
    pub optimizer_steps: u64,
}

/// Running confusion counts for either metric.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricCounts {
    pub correct: usize,
    pub total: usize,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl MetricCounts {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    /// `2TP / (2TP + FP + FN)`; 1 when there is nothing to predict and nothing was predicted.
    pub fn micro_f1(&self) -> f64 {
        let denom = 2 * self.true_pos + self.false_pos + self.false_neg;
        if denom == 0 {
            1.0
        } else {
            (2 * self.true_pos) as f64 / denom as f64
        }
    }

    pub fn metric(&self, task: TaskKind) -> f64 {
        match task {
            TaskKind::SingleLabel => self.accuracy(),
            TaskKind::MultiLabel => self.micro_f1(),
        }
    }
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Accumulates counts for `rows`. Multi-label predictions are positive
/// when the sigmoid exceeds 0.5, i.e. the logit is above 0.
pub fn count_predictions<T: Scalar>(logits: &Tensor<T>, labels: &Labels<T>, rows: &[usize], counts: &mut MetricCounts) {
    match labels {
        Labels::Classes(c) => {
            for &r in rows {
                counts.total += 1;
                if argmax(logits.row(r)) == c[r] {
                    counts.correct += 1;
                }
            }
        }
        Labels::Binary(b) => {
            for &r in rows {
                counts.total += 1;
                let mut exact = true;
                for (&x, &t) in logits.row(r).iter().zip(b.row(r)) {
                    let pred = x > T::zero();
                    let truth = t > T::lit(0.5);
                    match (pred, truth) {
                        (true, true) => counts.true_pos += 1,
                        (true, false) => counts.false_pos += 1,
                        (false, true) => counts.false_neg += 1,
                        (false, false) => {}
                    }
                    exact &= pred == truth;
                }
                if exact {
                    counts.correct += 1;
                }
            }
        }
    }
}

fn targets<T>(labels: &Labels<T>) -> Targets<'_, T> {
    match labels {
        Labels::Classes(c) => Targets::Classes(c),
        Labels::Binary(b) => Targets::Binary(b),
    }
}

/// Metric and mean loss of the model on one split, without dropout.
pub fn evaluate_with_loss<T: Scalar>(model: &ChildModel<T>, dataset: &LabeledDataset<T>, kind: MaskKind) -> Result<(f64, f64)> {
    if dataset.mask_size(kind) == 0 {
        return Err(Error::Parameter(format!("{} mask is empty", kind.name())));
    }
    let mut counts = MetricCounts::default();
    let mut loss_total = 0.0;
    let mut rng = seeded(0);
    for g in dataset.graphs_with(kind) {
        let rows = dataset.masks()[g].get(kind);
        let mut tape = Tape::new();
        let weights = model.register(&mut tape);
        let logits = model.forward_on(&mut tape, &weights, &dataset.graphs()[g], false, 0.0, &mut rng)?;
        let labels = &dataset.labels()[g];
        let loss = node_loss(&mut tape, logits, targets(labels), rows, &[], 0.0)?;
        loss_total += tape.value(loss).item().as_f64() * rows.len() as f64;
        count_predictions(tape.value(logits), labels, rows, &mut counts);
    }
    Ok((counts.metric(dataset.task()), loss_total / dataset.mask_size(kind) as f64))
}

/// Accuracy (single-label) or micro-F1 (multi-label) on one split.
pub fn evaluate<T: Scalar>(model: &ChildModel<T>, dataset: &LabeledDataset<T>, kind: MaskKind) -> Result<f64> {
    evaluate_with_loss(model, dataset, kind).map(|(m, _)| m)
}

/// Trains with Adam, one step per training graph per epoch, and early
/// stopping on the validation metric (ties broken by lower validation
/// loss). Stops once `patience` consecutive epochs fail to improve, then
/// restores the best epoch's weights.
pub fn train_child<T: Scalar>(model: &mut ChildModel<T>, dataset: &LabeledDataset<T>, hp: &TrainHyperparams) -> Result<TrainedResult> {
    hp.validate()?;
    for kind in [MaskKind::Train, MaskKind::Val, MaskKind::Test] {
        if dataset.mask_size(kind) == 0 {
            return Err(Error::Parameter(format!("{} mask is empty", kind.name())));
        }
    }
    let mut rng = seeded(hp.seed);
    let mut adam = AdamState::new(AdamConfig::with_lr(hp.lr));
    let train_graphs: Vec<usize> = dataset.graphs_with(MaskKind::Train).collect();
    let mut best: Option<(f64, f64)> = None;
    let mut best_epoch = 0;
    let mut snapshot = None;
    let mut stale = 0;
    let mut epoch_seconds = Vec::new();
    for epoch in 1..=hp.max_epochs {
        let start = Instant::now();
        for &g in &train_graphs {
            let mut tape = Tape::new();
            let weights = model.register(&mut tape);
            let logits = model.forward_on(&mut tape, &weights, &dataset.graphs()[g], true, hp.dropout_p, &mut rng)?;
            let rows = dataset.masks()[g].get(MaskKind::Train);
            let loss = node_loss(&mut tape, logits, targets(&dataset.labels()[g]), rows, &weights, hp.l2_lambda)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Training { epoch, detail: format!("training loss is {value}") });
            }
            let grads = tape.backward(loss)?;
            let grads: Vec<Tensor<T>> = weights
                .iter()
                .zip(model.tensors())
                .map(|(&w, t)| grads.get_or_zeros(w, t.shape()))
                .collect();
            adam.step(&mut model.tensors_mut(), &grads)?;
        }
        let (metric, loss) = evaluate_with_loss(model, dataset, MaskKind::Val)?;
        if !loss.is_finite() {
            return Err(Error::Training { epoch, detail: format!("validation loss is {loss}") });
        }
        epoch_seconds.push(start.elapsed().as_secs_f64());
        let improved = best.is_none_or(|(m, l)| metric > m || (metric == m && loss < l));
        if improved {
            best = Some((metric, loss));
            best_epoch = epoch;
            snapshot = Some(model.layers().to_vec());
            stale = 0;
        } else {
            stale += 1;
            if stale > hp.patience {
                break;
            }
        }
    }
    if let Some(layers) = snapshot {
        model.set_layers(layers)?;
    }
    let (best_val_metric, best_val_loss) = match best {
        Some(b) => b,
        None => evaluate_with_loss(model, dataset, MaskKind::Val)?,
    };
    let test_metric = evaluate(model, dataset, MaskKind::Test)?;
    Ok(TrainedResult {
        best_val_metric,
        best_val_loss,
        test_metric,
        epochs_ran: epoch_seconds.len(),
        best_epoch,
        epoch_seconds,
        optimizer_steps: adam.steps(),
    })
}
