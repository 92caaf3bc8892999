//! Child GNN models: parameters, the layer pipeline, training and evaluation.

mod attention;
mod model;
mod params;
mod train;

pub use attention::attention_score;
pub use model::{plan_layers, ChildModel, LayerPlan};
pub use params::{HeadParams, LayerParams, ShareKey};
pub use train::{
    count_predictions, evaluate, evaluate_with_loss, train_child, MetricCounts, TrainHyperparams, TrainedResult,
};

#[cfg(test)]
mod tests;
