//! Graph containers, labeled datasets and their train/validation/test splits.

mod generate;
mod io;

pub use generate::{generate_multigraph, generate_sbm, MultigraphParams, SbmParams, SplitSizes};
pub use io::{load_citation, parse_citation, save_citation, write_citation};

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::autodiff::{Segments, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Directed graph with node features.
///
/// Edges are deduplicated, sorted by `(dst, src)` and always contain a
/// self-loop for every node, so every in-neighborhood is non-empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph<T> {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor<T>,
    degrees: Vec<usize>,
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    segments: Arc<Segments>,
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph from directed `(src, dst)` pairs, adding self-loops.
    pub fn new(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>, features: Tensor<T>) -> Result<Self> {
        if features.rows() != node_count || features.shape().len() != 2 {
            return Err(Error::shape(
                "Graph::new",
                format!("features {:?} for {node_count} nodes", features.shape()),
            ));
        }
        let mut set = BTreeSet::new();
        for (s, d) in edges {
            if s >= node_count || d >= node_count {
                return Err(Error::Parameter(format!("edge ({s}, {d}) outside {node_count} nodes")));
            }
            set.insert((d, s));
        }
        for v in 0..node_count {
            set.insert((v, v));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().map(|(d, s)| (s, d)).collect();
        let mut degrees = vec![0; node_count];
        for &(_, d) in &edges {
            degrees[d] += 1;
        }
        let src: Arc<[usize]> = edges.iter().map(|e| e.0).collect();
        let dst: Arc<[usize]> = edges.iter().map(|e| e.1).collect();
        let segments = Arc::new(Segments::new(dst.to_vec(), node_count)?);
        Ok(Graph { node_count, edges, features, degrees, src, dst, segments })
    }

    /// Builds a graph from undirected pairs, storing both directions.
    pub fn undirected(node_count: usize, pairs: impl IntoIterator<Item = (usize, usize)>, features: Tensor<T>) -> Result<Self> {
        let both: Vec<(usize, usize)> = pairs.into_iter().flat_map(|(a, b)| [(a, b), (b, a)]).collect();
        Self::new(node_count, both, features)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Tensor<T> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// In-degree per node, self-loop included.
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn sources(&self) -> &Arc<[usize]> {
        &self.src
    }

    pub fn destinations(&self) -> &Arc<[usize]> {
        &self.dst
    }

    /// Edge rows grouped by destination node.
    pub fn segments(&self) -> &Arc<Segments> {
        &self.segments
    }

    /// Relabels node `v` as `perm[v]`, permuting features and edges alike.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count;
        let mut rows = vec![Vec::new(); n];
        for v in 0..n {
            rows[perm[v]] = self.features.row(v).to_vec();
        }
        let features = Tensor::from_rows(&rows)?;
        Self::new(n, self.edges.iter().map(|&(s, d)| (perm[s], perm[d])), features)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    SingleLabel,
    MultiLabel,
}

/// Per-node supervision for one graph.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels<T> {
    Classes(Vec<usize>),
    /// 0/1 matrix `[nodes × labels]`.
    Binary(Tensor<T>),
}

impl<T: Scalar> Labels<T> {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Binary(b) => b.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MaskKind {
    Train,
    Val,
    Test,
}

impl MaskKind {
    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Train => "train",
            MaskKind::Val => "val",
            MaskKind::Test => "test",
        }
    }
}

/// Node indices of each split, each sorted ascending.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitMask {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitMask {
    pub fn new(mut train: Vec<usize>, mut val: Vec<usize>, mut test: Vec<usize>) -> Self {
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        SplitMask { train, val, test }
    }

    pub fn get(&self, kind: MaskKind) -> &[usize] {
        match kind {
            MaskKind::Train => &self.train,
            MaskKind::Val => &self.val,
            MaskKind::Test => &self.test,
        }
    }

    /// Checks disjointness and range.
    pub fn validate(&self, node_count: usize) -> Result<()> {
        let mut seen = vec![false; node_count];
        for kind in [MaskKind::Train, MaskKind::Val, MaskKind::Test] {
            for &v in self.get(kind) {
                if v >= node_count {
                    return Err(Error::Parameter(format!(
                        "{} mask node {v} outside {node_count} nodes",
                        kind.name()
                    )));
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::Parameter(format!("node {v} appears in more than one mask")));
                }
            }
        }
        Ok(())
    }
}

/// One or more graphs with labels and splits.
///
/// Single-graph datasets are transductive (splits are node subsets of the
/// same graph); multi-graph datasets assign whole graphs to one split.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    graphs: Vec<Graph<T>>,
    labels: Vec<Labels<T>>,
    masks: Vec<SplitMask>,
    task: TaskKind,
    class_count: usize,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(
        graphs: Vec<Graph<T>>,
        labels: Vec<Labels<T>>,
        masks: Vec<SplitMask>,
        task: TaskKind,
        class_count: usize,
    ) -> Result<Self> {
        if graphs.is_empty() || graphs.len() != labels.len() || graphs.len() != masks.len() {
            return Err(Error::Parameter(format!(
                "{} graphs, {} label sets, {} masks",
                graphs.len(),
                labels.len(),
                masks.len()
            )));
        }
        if class_count == 0 {
            return Err(Error::Parameter("class count must be positive".into()));
        }
        let dim = graphs[0].feature_dim();
        for (i, ((g, l), m)) in graphs.iter().zip(&labels).zip(&masks).enumerate() {
            if g.feature_dim() != dim {
                return Err(Error::Parameter(format!("graph {i} feature dim differs")));
            }
            if l.len() != g.node_count() {
                return Err(Error::Parameter(format!("graph {i}: labels for {} of {} nodes", l.len(), g.node_count())));
            }
            match (task, l) {
                (TaskKind::SingleLabel, Labels::Classes(c)) => {
                    if let Some(&bad) = c.iter().find(|&&c| c >= class_count) {
                        return Err(Error::Parameter(format!("class {bad} >= class count {class_count}")));
                    }
                }
                (TaskKind::MultiLabel, Labels::Binary(b)) => {
                    if b.cols() != class_count {
                        return Err(Error::Parameter(format!(
                            "graph {i}: label vectors of length {} for {class_count} labels",
                            b.cols()
                        )));
                    }
                }
                _ => return Err(Error::Parameter(format!("graph {i}: labels do not match task kind"))),
            }
            m.validate(g.node_count())?;
        }
        Ok(LabeledDataset { graphs, labels, masks, task, class_count })
    }

    pub fn graphs(&self) -> &[Graph<T>] {
        &self.graphs
    }

    pub fn labels(&self) -> &[Labels<T>] {
        &self.labels
    }

    pub fn masks(&self) -> &[SplitMask] {
        &self.masks
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    /// Class count (single-label) or label-vector length (multi-label).
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs[0].feature_dim()
    }

    /// Graph indices that have at least one node in the given split.
    pub fn graphs_with(&self, kind: MaskKind) -> impl Iterator<Item = usize> + '_ {
        (0..self.graphs.len()).filter(move |&i| !self.masks[i].get(kind).is_empty())
    }

    pub fn mask_size(&self, kind: MaskKind) -> usize {
        self.masks.iter().map(|m| m.get(kind).len()).sum()
    }

    /// Copy of the dataset with a different mask set (same graphs and labels).
    pub fn with_masks(&self, masks: Vec<SplitMask>) -> Result<Self> {
        Self::new(self.graphs.clone(), self.labels.clone(), masks, self.task, self.class_count)
    }
}
