use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;
use crate::scalar::Scalar;

/// Supervision for a node-classification loss.
#[derive(Clone, Copy, Debug)]
pub enum Targets<'a, T> {
    /// One class index per node (softmax cross-entropy).
    Classes(&'a [usize]),
    /// 0/1 matrix with the logits' shape (sigmoid binary cross-entropy).
    Binary(&'a Tensor<T>),
}

/// Classification loss averaged over `rows`, plus `l2 · Σ‖W‖²` over `weights`.
pub fn node_loss<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    targets: Targets<'_, T>,
    rows: &[usize],
    weights: &[Var],
    l2: f64,
) -> Result<Var> {
    let mut loss = match targets {
        Targets::Classes(c) => tape.softmax_cross_entropy(logits, c, rows)?,
        Targets::Binary(b) => tape.sigmoid_bce(logits, b, rows)?,
    };
    if l2 > 0.0 {
        for &w in weights {
            let sq = tape.sum_squares(w);
            let term = tape.scale(sq, T::lit(l2));
            loss = tape.add(loss, term)?;
        }
    }
    Ok(loss)
}
