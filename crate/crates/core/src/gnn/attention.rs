use std::sync::Arc;

use crate::autodiff::{ActivationKind, Tape, Tensor, Var, LEAKY_RELU_SLOPE};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::space::AttentionKind;

use super::params::HeadParams;

fn dot<T: Scalar>(x: &[T], w: &Tensor<T>, col: usize) -> T {
    let c = w.cols();
    x.iter().enumerate().map(|(r, &v)| v * w.data()[r * c + col]).sum()
}

fn project<T: Scalar>(x: &[T], w: &Tensor<T>) -> Vec<T> {
    (0..w.cols()).map(|c| dot(x, w, c)).collect()
}

fn leaky<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * T::lit(LEAKY_RELU_SLOPE)
    }
}

/// Unnormalized score of the edge from neighbor `j` into target `i`.
///
/// `z_i` and `z_j` are transformed features of one head, `d_i` and `d_j`
/// in-degrees with self-loops.
pub fn attention_score<T: Scalar>(
    kind: AttentionKind,
    z_i: &[T],
    z_j: &[T],
    d_i: usize,
    d_j: usize,
    params: &HeadParams<T>,
) -> Result<T> {
    let want = match kind {
        AttentionKind::Const | AttentionKind::Gcn => 0,
        AttentionKind::Linear => 1,
        AttentionKind::Gat | AttentionKind::SymGat | AttentionKind::Cos => 2,
        AttentionKind::GeneLinear => 3,
    };
    let a = &params.attention;
    if a.len() != want {
        return Err(Error::Parameter(format!("{} attention takes {want} tensors, got {}", kind.name(), a.len())));
    }
    if z_i.len() != z_j.len() || a.iter().any(|w| w.rows() != z_i.len()) {
        return Err(Error::shape("attention_score", format!("feature width {} vs parameters", z_i.len())));
    }
    Ok(match kind {
        AttentionKind::Const => T::one(),
        AttentionKind::Gcn => T::one() / T::lit((d_i * d_j) as f64).sqrt(),
        AttentionKind::Gat => leaky(dot(z_i, &a[0], 0) + dot(z_j, &a[1], 0)),
        AttentionKind::SymGat => leaky(dot(z_i, &a[0], 0) + dot(z_j, &a[1], 0)) + leaky(dot(z_j, &a[0], 0) + dot(z_i, &a[1], 0)),
        AttentionKind::Cos => project(z_i, &a[0]).iter().zip(project(z_j, &a[1])).map(|(&p, q)| p * q).sum(),
        AttentionKind::Linear => dot(z_j, &a[0], 0).tanh(),
        AttentionKind::GeneLinear => {
            let l = project(z_i, &a[0]);
            let r = project(z_j, &a[1]);
            let h: Vec<T> = l.iter().zip(r).map(|(&x, y)| (x + y).tanh()).collect();
            dot(&h, &a[2], 0)
        }
    })
}

/// Scores of every edge of `graph` as an `[E × 1]` column. `z` is the
/// `[N × D]` transformed feature matrix of one head and `att` the head's
/// attention parameters already registered on the tape.
pub(crate) fn edge_scores<T: Scalar>(
    tape: &mut Tape<T>,
    kind: AttentionKind,
    z: Var,
    att: &[Var],
    graph: &Graph<T>,
) -> Result<Var> {
    let src = graph.sources();
    let dst = graph.destinations();
    let pair = |tape: &mut Tape<T>, left: Var, right: Var, into: &Arc<[usize]>, from: &Arc<[usize]>| -> Result<Var> {
        let l = tape.gather_rows(left, into)?;
        let r = tape.gather_rows(right, from)?;
        tape.add(l, r)
    };
    match kind {
        AttentionKind::Const => Ok(tape.constant(Tensor::full(&[graph.edge_count(), 1], T::one()))),
        AttentionKind::Gcn => {
            let d = graph.degrees();
            let vals = src.iter().zip(dst.iter()).map(|(&j, &i)| T::one() / T::lit((d[i] * d[j]) as f64).sqrt()).collect();
            Ok(tape.constant(Tensor::new(vec![graph.edge_count(), 1], vals)?))
        }
        AttentionKind::Gat | AttentionKind::SymGat => {
            let sl = tape.matmul(z, att[0])?;
            let sr = tape.matmul(z, att[1])?;
            let e = pair(tape, sl, sr, dst, src)?;
            let e = tape.activation(ActivationKind::LeakyRelu, e);
            if kind == AttentionKind::Gat {
                return Ok(e);
            }
            let back = pair(tape, sl, sr, src, dst)?;
            let back = tape.activation(ActivationKind::LeakyRelu, back);
            tape.add(e, back)
        }
        AttentionKind::Cos => {
            let p = tape.matmul(z, att[0])?;
            let q = tape.matmul(z, att[1])?;
            let p = tape.gather_rows(p, dst)?;
            let q = tape.gather_rows(q, src)?;
            let m = tape.mul(p, q)?;
            Ok(tape.row_sum(m))
        }
        AttentionKind::Linear => {
            let s = tape.matmul(z, att[0])?;
            let s = tape.activation(ActivationKind::Tanh, s);
            tape.gather_rows(s, src)
        }
        AttentionKind::GeneLinear => {
            let l = tape.matmul(z, att[0])?;
            let r = tape.matmul(z, att[1])?;
            let h = pair(tape, l, r, dst, src)?;
            let h = tape.activation(ActivationKind::Tanh, h);
            tape.matmul(h, att[2])
        }
    }
}
