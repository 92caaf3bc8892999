//! Seeded synthetic datasets: a stochastic block model for the
//! single-graph task and a family of block-model graphs for the
//! multi-graph, multi-label task.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Graph, LabeledDataset, Labels, SplitMask, TaskKind};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Rng as ChaRng};
use crate::scalar::Scalar;

/// Node counts of a transductive split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train_per_class: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    /// Scaled-down version of the 20-per-class / 500 / 1000 convention.
    pub fn for_blocks(block_count: usize, nodes_per_block: usize) -> Self {
        let train_per_class = (nodes_per_block / 5).clamp(1, 20);
        let rest = block_count * nodes_per_block - block_count * train_per_class;
        let val = (rest / 3).min(500);
        let test = (rest - val).min(1000);
        SplitSizes { train_per_class, val, test }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbmParams {
    pub block_count: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub signal_strength: f64,
    pub seed: u64,
    pub split: Option<SplitSizes>,
}

impl Default for SbmParams {
    fn default() -> Self {
        SbmParams {
            block_count: 2,
            nodes_per_block: 50,
            p_in: 0.2,
            p_out: 0.02,
            feature_dim: 16,
            signal_strength: 1.0,
            seed: 7,
            split: None,
        }
    }
}

fn check_probabilities(p_in: f64, p_out: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out >= p_in {
        return Err(Error::Parameter(format!(
            "block probabilities must satisfy 0 <= p_out < p_in <= 1 (got p_in={p_in}, p_out={p_out})"
        )));
    }
    Ok(())
}

/// Samples an undirected block-model graph; returns pairs `(a, b)` with `a < b`.
fn sample_block_edges(block_of: &[usize], p_in: f64, p_out: f64, rng: &mut ChaRng) -> Vec<(usize, usize)> {
    let n = block_of.len();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let p = if block_of[a] == block_of[b] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

fn block_means(block_count: usize, dim: usize, signal: f64, rng: &mut ChaRng) -> Vec<Vec<f64>> {
    (0..block_count)
        .map(|_| (0..dim).map(|_| signal * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn noisy_features<T: Scalar>(block_of: &[usize], means: &[Vec<f64>], rng: &mut ChaRng) -> Result<Tensor<T>> {
    let dim = means[0].len();
    let mut data = Vec::with_capacity(block_of.len() * dim);
    for &b in block_of {
        for &m in &means[b] {
            data.push(T::lit(m + rng.sample::<f64, _>(StandardNormal)));
        }
    }
    Tensor::new(vec![block_of.len(), dim], data)
}

/// Single-graph stochastic block model; the label of a node is its block.
pub fn generate_sbm<T: Scalar>(params: &SbmParams) -> Result<LabeledDataset<T>> {
    check_probabilities(params.p_in, params.p_out)?;
    if params.block_count < 2 || params.nodes_per_block == 0 || params.feature_dim == 0 {
        return Err(Error::Parameter(
            "block model needs at least 2 non-empty blocks and a positive feature dimension".into(),
        ));
    }
    let split = params
        .split
        .unwrap_or_else(|| SplitSizes::for_blocks(params.block_count, params.nodes_per_block));
    let n = params.block_count * params.nodes_per_block;
    if split.train_per_class > params.nodes_per_block
        || params.block_count * split.train_per_class + split.val + split.test > n
    {
        return Err(Error::Parameter(format!("split {split:?} does not fit {n} nodes")));
    }

    let mut rng = seeded(params.seed);
    let block_of: Vec<usize> = (0..n).map(|v| v / params.nodes_per_block).collect();
    let pairs = sample_block_edges(&block_of, params.p_in, params.p_out, &mut rng);
    let means = block_means(params.block_count, params.feature_dim, params.signal_strength, &mut rng);
    let features = noisy_features(&block_of, &means, &mut rng)?;
    let graph = Graph::undirected(n, pairs, features)?;

    let mut train = Vec::new();
    let mut rest = Vec::new();
    for b in 0..params.block_count {
        let mut members: Vec<usize> = (b * params.nodes_per_block..(b + 1) * params.nodes_per_block).collect();
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..split.train_per_class]);
        rest.extend_from_slice(&members[split.train_per_class..]);
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    let val = rest[..split.val].to_vec();
    let test = rest[split.val..split.val + split.test].to_vec();
    let mask = SplitMask::new(train, val, test);

    LabeledDataset::new(
        vec![graph],
        vec![Labels::Classes(block_of)],
        vec![mask],
        TaskKind::SingleLabel,
        params.block_count,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultigraphParams {
    pub graph_count: usize,
    pub nodes_per_graph: usize,
    pub block_count: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub label_count: usize,
    pub signal_strength: f64,
    /// Probability of flipping each label bit away from its block prototype.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for MultigraphParams {
    fn default() -> Self {
        MultigraphParams {
            graph_count: 6,
            nodes_per_graph: 60,
            block_count: 4,
            p_in: 0.15,
            p_out: 0.01,
            feature_dim: 16,
            label_count: 8,
            signal_strength: 1.0,
            label_noise: 0.05,
            seed: 11,
        }
    }
}

/// Graph counts `(train, val, test)`, mirroring a 20/2/2 layout.
pub(crate) fn graph_split(graph_count: usize) -> (usize, usize, usize) {
    let held = ((graph_count as f64 / 12.0).round() as usize).max(1);
    (graph_count - 2 * held, held, held)
}

/// Independent block-model graphs sharing block prototypes; each node
/// carries a binary label vector derived from its block.
pub fn generate_multigraph<T: Scalar>(params: &MultigraphParams) -> Result<LabeledDataset<T>> {
    if params.graph_count < 3 {
        return Err(Error::Parameter(format!(
            "need at least 3 graphs (one per split), got {}",
            params.graph_count
        )));
    }
    check_probabilities(params.p_in, params.p_out)?;
    if params.block_count == 0 || params.nodes_per_graph == 0 || params.label_count == 0 || params.feature_dim == 0 {
        return Err(Error::Parameter("multigraph sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&params.label_noise) {
        return Err(Error::Parameter(format!("label noise {} outside [0, 1]", params.label_noise)));
    }
    let mut shared = seeded(params.seed);
    let means = block_means(params.block_count, params.feature_dim, params.signal_strength, &mut shared);
    let prototypes: Vec<Vec<bool>> = (0..params.block_count)
        .map(|_| (0..params.label_count).map(|_| shared.gen::<bool>()).collect())
        .collect();

    let (train_graphs, val_graphs, _) = graph_split(params.graph_count);
    let mut graphs = Vec::new();
    let mut labels = Vec::new();
    let mut masks = Vec::new();
    for gi in 0..params.graph_count {
        let mut rng = seeded(derive_seed(params.seed, 1, gi as u64));
        let n = params.nodes_per_graph;
        let block_of: Vec<usize> = (0..n).map(|_| rng.gen_range(0..params.block_count)).collect();
        let pairs = sample_block_edges(&block_of, params.p_in, params.p_out, &mut rng);
        let features = noisy_features(&block_of, &means, &mut rng)?;
        let mut bits = Vec::with_capacity(n * params.label_count);
        for &b in &block_of {
            for &bit in &prototypes[b] {
                let flipped = bit ^ (rng.gen::<f64>() < params.label_noise);
                bits.push(if flipped { T::one() } else { T::zero() });
            }
        }
        graphs.push(Graph::undirected(n, pairs, features)?);
        labels.push(Labels::Binary(Tensor::new(vec![n, params.label_count], bits)?));
        let all: Vec<usize> = (0..n).collect();
        masks.push(if gi < train_graphs {
            SplitMask::new(all, vec![], vec![])
        } else if gi < train_graphs + val_graphs {
            SplitMask::new(vec![], all, vec![])
        } else {
            SplitMask::new(vec![], vec![], all)
        });
    }
    LabeledDataset::new(graphs, labels, masks, TaskKind::MultiLabel, params.label_count)
}
