use serde::{Deserialize, Serialize};

use super::Regime;
use crate::autodiff::ActivationKind;
use crate::controller::ControllerConfig;
use crate::error::{Error, Result};
use crate::gnn::TrainHyperparams;
use crate::space::{ActionSpace, AggregationKind, AttentionKind, MergeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[serde(rename = "graphnas")]
    GraphNas,
    Random,
    NasLike,
    EnasLike,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::GraphNas, Strategy::Random, Strategy::NasLike, Strategy::EnasLike];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::GraphNas => "graphnas",
            Strategy::Random => "random",
            Strategy::NasLike => "nas-like",
            Strategy::EnasLike => "enas-like",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// Action space selection. Omitted option lists mean "all options".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpaceConfig {
    pub layer_count: usize,
    pub skip_enabled: bool,
    pub attention: Option<Vec<String>>,
    pub aggregation: Option<Vec<String>>,
    pub activation: Option<Vec<String>>,
    pub heads: Option<Vec<usize>>,
    pub hidden: Option<Vec<usize>>,
    pub merge: Option<Vec<String>>,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            layer_count: 2,
            skip_enabled: false,
            attention: None,
            aggregation: None,
            activation: None,
            heads: None,
            hidden: None,
            merge: None,
        }
    }
}

fn named<T: Copy>(field: &str, names: &Option<Vec<String>>, all: &[T], name: impl Fn(T) -> &'static str) -> Result<Vec<T>> {
    match names {
        None => Ok(all.to_vec()),
        Some(list) => list
            .iter()
            .map(|n| {
                all.iter()
                    .copied()
                    .find(|&k| name(k) == n)
                    .ok_or_else(|| Error::config(format!("space.{field}"), format!("unknown option `{n}`")))
            })
            .collect(),
    }
}

impl SpaceConfig {
    pub fn build(&self) -> Result<ActionSpace> {
        let full = ActionSpace::full(self.layer_count, self.skip_enabled);
        let space = ActionSpace {
            attention: named("attention", &self.attention, &AttentionKind::ALL, AttentionKind::name)?,
            aggregation: named("aggregation", &self.aggregation, &AggregationKind::ALL, AggregationKind::name)?,
            activation: named("activation", &self.activation, &ActivationKind::ALL, ActivationKind::name)?,
            merge: named("merge", &self.merge, &MergeKind::ALL, MergeKind::name)?,
            heads: self.heads.clone().unwrap_or(full.heads.clone()),
            hidden: self.hidden.clone().unwrap_or(full.hidden.clone()),
            ..full
        };
        space.check().map_err(|e| match e {
            Error::Validation { slot, detail } => Error::config(format!("space.{slot}"), detail),
            other => other,
        })?;
        Ok(space)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub strategy: Strategy,
    pub episodes: usize,
    /// Hyperparameters for training a child from scratch.
    pub child: TrainHyperparams,
    /// Build graphnas children from the shared parameter store.
    pub share_params: bool,
    /// Epochs per child when weights are shared (no dropout, no L2).
    pub child_epochs: usize,
    /// Random-architecture warm-up rounds before the controller runs.
    pub exploration_epochs: usize,
    pub derive_samples: usize,
    /// Shared-weight epochs before a derive candidate is scored.
    pub derive_iterations: usize,
    /// Validation nodes used to score derive candidates; 0 means all.
    pub derive_minibatch: usize,
    pub top_k: usize,
    pub seed: u64,
    pub controller: ControllerConfig,
    pub space: SpaceConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            strategy: Strategy::GraphNas,
            episodes: 1000,
            child: TrainHyperparams::default(),
            share_params: false,
            child_epochs: 5,
            exploration_epochs: 0,
            derive_samples: 100,
            derive_iterations: 5,
            derive_minibatch: 0,
            top_k: 5,
            seed: 0,
            controller: ControllerConfig::default(),
            space: SpaceConfig::default(),
        }
    }
}

impl SearchConfig {
    /// Single-graph defaults: every child trained from scratch.
    pub fn transductive() -> Self {
        Self::default()
    }

    /// Multi-graph defaults: shared weights, five epochs per child and
    /// twenty exploration rounds.
    pub fn inductive() -> Self {
        SearchConfig { share_params: true, child_epochs: 5, exploration_epochs: 20, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.child.validate().map_err(|e| Error::config("child", e.to_string()))?;
        self.controller.validate().map_err(|e| match e {
            Error::Config { field, detail } => Error::config(format!("controller.{field}"), detail),
            other => other,
        })?;
        self.space.build()?;
        if self.top_k == 0 {
            return Err(Error::config("top_k", "must be at least 1"));
        }
        if self.exploration_epochs > 0 && !(self.strategy == Strategy::GraphNas && self.share_params) {
            return Err(Error::config("exploration_epochs", "exploration applies only to graphnas with share_params"));
        }
        if self.share_params && self.strategy != Strategy::GraphNas {
            return Err(Error::config("share_params", format!("not used by the {} strategy", self.strategy.name())));
        }
        Ok(())
    }

    pub(super) fn shared_regime(&self) -> Regime {
        Regime {
            use_store: true,
            hp: TrainHyperparams {
                max_epochs: self.child_epochs,
                patience: self.child_epochs,
                dropout_p: 0.0,
                l2_lambda: 0.0,
                ..self.child.clone()
            },
        }
    }

    pub(super) fn regime(&self) -> Regime {
        match self.strategy {
            Strategy::GraphNas if self.share_params => self.shared_regime(),
            Strategy::GraphNas | Strategy::Random | Strategy::NasLike => Regime { use_store: false, hp: self.child.clone() },
            Strategy::EnasLike => Regime {
                use_store: true,
                hp: TrainHyperparams { max_epochs: 0, patience: 0, dropout_p: 0.0, l2_lambda: 0.0, ..self.child.clone() },
            },
        }
    }
}
