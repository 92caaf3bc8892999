use rand::Rng;

use crate::autodiff::{ActivationKind, SegmentReduce, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::space::{AggregationKind, ArchDescription, LayerSpec, MergeKind};

use super::attention::edge_scores;
use super::params::{LayerParams, ShareKey};

/// Resolved dimensions of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerPlan {
    pub spec: LayerSpec,
    pub key: ShareKey,
    pub last: bool,
    /// Width after combining heads (concat on hidden layers, mean on the last).
    pub combined_dim: usize,
    /// Residual source layer and the merge actually applied.
    pub skip: Option<(usize, MergeKind)>,
    pub out_dim: usize,
}

/// Resolves per-layer dimensions. The last layer emits `classes` columns:
/// its per-head width is overridden, heads are averaged, and a concat
/// merge is applied as add so the width stays fixed.
pub fn plan_layers(arch: &ArchDescription, in_dim: usize, classes: usize) -> Result<Vec<LayerPlan>> {
    arch.validate()?;
    if in_dim == 0 || classes == 0 {
        return Err(Error::Parameter(format!("input width {in_dim} and class count {classes} must be positive")));
    }
    let depth = arch.depth();
    let mut dims = vec![in_dim];
    let mut plans = Vec::with_capacity(depth);
    for (i, spec) in arch.layers.iter().enumerate() {
        let layer_index = i + 1;
        let last = layer_index == depth;
        let hidden = if last { classes } else { spec.hidden };
        let combined_dim = if last { hidden } else { spec.heads * hidden };
        let skip = spec.skip.map(|s| (s.from, if last { MergeKind::Add } else { s.merge }));
        let (residual, out_dim) = match skip {
            None => (None, combined_dim),
            Some((from, MergeKind::Add)) => {
                let d = dims[from];
                ((d != combined_dim).then_some((d, combined_dim)), combined_dim)
            }
            Some((from, MergeKind::Concat)) => (None, combined_dim + dims[from]),
        };
        let key = ShareKey {
            layer_index,
            attention: spec.attention,
            aggregation: spec.aggregation,
            in_dim: dims[i],
            heads: spec.heads,
            hidden,
            residual,
        };
        dims.push(out_dim);
        plans.push(LayerPlan { spec: *spec, key, last, combined_dim, skip, out_dim });
    }
    Ok(plans)
}

/// An executable child network.
#[derive(Clone, Debug, PartialEq)]
pub struct ChildModel<T> {
    arch: ArchDescription,
    in_dim: usize,
    classes: usize,
    plans: Vec<LayerPlan>,
    layers: Vec<LayerParams<T>>,
}

impl<T: Scalar> ChildModel<T> {
    /// Builds with fresh Glorot weights.
    pub fn build<R: Rng + ?Sized>(arch: &ArchDescription, in_dim: usize, classes: usize, rng: &mut R) -> Result<Self> {
        Self::build_with(arch, in_dim, classes, |key| Ok(LayerParams::init(key, rng)))
    }

    /// Builds with per-layer parameters supplied by `fetch`, which is called
    /// once per layer in order.
    pub fn build_with(
        arch: &ArchDescription,
        in_dim: usize,
        classes: usize,
        mut fetch: impl FnMut(ShareKey) -> Result<LayerParams<T>>,
    ) -> Result<Self> {
        let plans = plan_layers(arch, in_dim, classes)?;
        let mut layers = Vec::with_capacity(plans.len());
        for p in &plans {
            let params = fetch(p.key)?;
            if params.key != p.key {
                return Err(Error::Parameter(format!("supplied parameters for {:?}, layer needs {:?}", params.key, p.key)));
            }
            params.check_shapes()?;
            layers.push(params);
        }
        Ok(ChildModel { arch: arch.clone(), in_dim, classes, plans, layers })
    }

    pub fn arch(&self) -> &ArchDescription {
        &self.arch
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn plans(&self) -> &[LayerPlan] {
        &self.plans
    }

    pub fn layers(&self) -> &[LayerParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.layers
    }

    /// Replaces all parameters; shapes must match the current ones.
    pub fn set_layers(&mut self, layers: Vec<LayerParams<T>>) -> Result<()> {
        if layers.len() != self.layers.len() || layers.iter().zip(&self.layers).any(|(a, b)| a.key != b.key) {
            return Err(Error::Parameter("replacement parameters do not match the model's layers".into()));
        }
        for l in &layers {
            l.check_shapes()?;
        }
        self.layers = layers;
        Ok(())
    }

    /// Total number of scalar weights.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::param_count).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(LayerParams::tensors).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(LayerParams::tensors_mut).collect()
    }

    /// Places every weight on the tape, in [`ChildModel::tensors`] order.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.tensors().into_iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Records the forward pass on `tape` and returns the `[N × classes]` logits.
    /// `weights` comes from [`ChildModel::register`]. Dropout with rate
    /// `dropout_p` hits layer inputs and attention coefficients when training.
    pub fn forward_on<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        weights: &[Var],
        graph: &Graph<T>,
        training: bool,
        dropout_p: f64,
        rng: &mut R,
    ) -> Result<Var> {
        if graph.feature_dim() != self.in_dim {
            return Err(Error::shape(
                "forward",
                format!("graph features have width {}, model expects {}", graph.feature_dim(), self.in_dim),
            ));
        }
        let total: usize = self.layers.iter().map(|l| l.tensors().len()).sum();
        if weights.len() != total {
            return Err(Error::shape("forward", format!("{} weight handles for {total} tensors", weights.len())));
        }
        let src = graph.sources();
        let segs = graph.segments();
        let mut outputs = vec![tape.constant(graph.features().clone())];
        let mut w = weights.iter().copied();
        for plan in &self.plans {
            let key = plan.key;
            let n_att = key.attention_shapes().len();
            let n_mlp = key.mlp_shapes().len();
            let transform = w.next().expect("counted above");
            let input = *outputs.last().expect("input present");
            let x = tape.dropout(input, dropout_p, training, rng)?;
            let z_all = tape.matmul(x, transform)?;
            let mut heads = Vec::with_capacity(key.heads);
            for k in 0..key.heads {
                let att: Vec<Var> = w.by_ref().take(n_att).collect();
                let mlp: Vec<Var> = w.by_ref().take(n_mlp).collect();
                let z = if key.heads == 1 { z_all } else { tape.slice_cols(z_all, k * key.hidden, key.hidden)? };
                let e = edge_scores(tape, key.attention, z, &att, graph)?;
                let alpha = tape.segment_softmax(e, segs)?;
                let alpha = tape.dropout(alpha, dropout_p, training, rng)?;
                let msg = tape.gather_rows(z, src)?;
                let msg = tape.mul_row_scalar(msg, alpha)?;
                let h = match key.aggregation {
                    AggregationKind::Sum => tape.segment_reduce(SegmentReduce::Sum, msg, segs)?,
                    AggregationKind::MeanPooling => tape.segment_reduce(SegmentReduce::Mean, msg, segs)?,
                    AggregationKind::MaxPooling => tape.segment_reduce(SegmentReduce::Max, msg, segs)?,
                    AggregationKind::Mlp => {
                        let m = tape.matmul(msg, mlp[0])?;
                        let m = tape.activation(ActivationKind::Relu, m);
                        let m = tape.matmul(m, mlp[1])?;
                        tape.segment_reduce(SegmentReduce::Sum, m, segs)?
                    }
                };
                heads.push(h);
            }
            let mut out = if heads.len() == 1 {
                heads[0]
            } else if plan.last {
                let mut acc = heads[0];
                for &h in &heads[1..] {
                    acc = tape.add(acc, h)?;
                }
                tape.scale(acc, T::one() / T::lit(heads.len() as f64))
            } else {
                tape.concat_cols(&heads)?
            };
            if let Some((from, merge)) = plan.skip {
                let source = outputs[from];
                out = match merge {
                    MergeKind::Add => {
                        let r = match key.residual {
                            Some(_) => tape.matmul(source, w.next().expect("counted above"))?,
                            None => source,
                        };
                        tape.add(out, r)?
                    }
                    MergeKind::Concat => tape.concat_cols(&[out, source])?,
                };
            }
            let out = tape.activation(plan.spec.activation, out);
            outputs.push(out);
        }
        Ok(*outputs.last().expect("at least one layer"))
    }

    /// Logits as a plain tensor.
    pub fn forward<R: Rng + ?Sized>(&self, graph: &Graph<T>, training: bool, dropout_p: f64, rng: &mut R) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let weights = self.register(&mut tape);
        let out = self.forward_on(&mut tape, &weights, graph, training, dropout_p, rng)?;
        Ok(tape.value(out).clone())
    }
}
