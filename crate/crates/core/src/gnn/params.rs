use rand::Rng;

use crate::autodiff::{glorot_uniform, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::{AggregationKind, AttentionKind};

/// Parameter signature of one layer. Two layers with equal keys have
/// parameter sets of identical shapes and may exchange them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ShareKey {
    /// Layer position, counting from 1.
    pub layer_index: usize,
    pub attention: AttentionKind,
    pub aggregation: AggregationKind,
    pub in_dim: usize,
    pub heads: usize,
    /// Per-head output width (the class count on the last layer).
    pub hidden: usize,
    /// Shape of the residual projection, when the layer has one.
    pub residual: Option<(usize, usize)>,
}

impl ShareKey {
    /// Attention parameter shapes of one head.
    pub fn attention_shapes(&self) -> Vec<[usize; 2]> {
        let d = self.hidden;
        match self.attention {
            AttentionKind::Const | AttentionKind::Gcn => vec![],
            AttentionKind::Gat | AttentionKind::SymGat => vec![[d, 1], [d, 1]],
            AttentionKind::Cos => vec![[d, d], [d, d]],
            AttentionKind::Linear => vec![[d, 1]],
            AttentionKind::GeneLinear => vec![[d, d], [d, d], [d, 1]],
        }
    }

    pub fn mlp_shapes(&self) -> Vec<[usize; 2]> {
        match self.aggregation {
            AggregationKind::Mlp => vec![[self.hidden, self.hidden], [self.hidden, self.hidden]],
            _ => vec![],
        }
    }

    /// All tensor shapes in [`LayerParams::tensors`] order.
    pub fn shapes(&self) -> Vec<[usize; 2]> {
        let mut out = vec![[self.in_dim, self.heads * self.hidden]];
        for _ in 0..self.heads {
            out.extend(self.attention_shapes());
            out.extend(self.mlp_shapes());
        }
        if let Some((a, b)) = self.residual {
            out.push([a, b]);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|s| s[0] * s[1]).sum()
    }
}

/// Attention and aggregator weights of one head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T> {
    /// `[W_l, W_r]`, `[W_l]` or `[W_l, W_r, W_a]` depending on the attention kind.
    pub attention: Vec<Tensor<T>>,
    /// Two `[hidden × hidden]` matrices for the mlp aggregator, else empty.
    pub mlp: Vec<Tensor<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub key: ShareKey,
    /// `[in_dim × heads·hidden]`; head `k` uses columns `k·hidden..(k+1)·hidden`.
    pub transform: Tensor<T>,
    pub heads: Vec<HeadParams<T>>,
    pub residual: Option<Tensor<T>>,
}

impl<T: Scalar> LayerParams<T> {
    /// Glorot-initialized parameters for `key`.
    pub fn init<R: Rng + ?Sized>(key: ShareKey, rng: &mut R) -> Self {
        let mut glorot = |s: [usize; 2]| glorot_uniform(s[0], s[1], rng);
        let transform = glorot([key.in_dim, key.heads * key.hidden]);
        let heads = (0..key.heads)
            .map(|_| HeadParams {
                attention: key.attention_shapes().into_iter().map(&mut glorot).collect(),
                mlp: key.mlp_shapes().into_iter().map(&mut glorot).collect(),
            })
            .collect();
        let residual = key.residual.map(|(a, b)| glorot([a, b]));
        LayerParams { key, transform, heads, residual }
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.transform];
        for h in &self.heads {
            out.extend(h.attention.iter());
            out.extend(h.mlp.iter());
        }
        out.extend(self.residual.iter());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.transform];
        for h in &mut self.heads {
            out.extend(h.attention.iter_mut());
            out.extend(h.mlp.iter_mut());
        }
        out.extend(self.residual.iter_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Errors unless every tensor has the shape its key prescribes.
    pub fn check_shapes(&self) -> Result<()> {
        let want = self.key.shapes();
        let have: Vec<&[usize]> = self.tensors().into_iter().map(|t| t.shape()).collect();
        if have.len() != want.len() || have.iter().zip(&want).any(|(h, w)| *h != &w[..]) {
            return Err(Error::shape(
                "LayerParams",
                format!("shapes {have:?} do not match key {:?}", self.key),
            ));
        }
        if self.heads.len() != self.key.heads {
            return Err(Error::shape("LayerParams", format!("{} heads for key with {}", self.heads.len(), self.key.heads)));
        }
        Ok(())
    }
}
