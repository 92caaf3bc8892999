//! Dense tensors with tape-based reverse-mode differentiation, plus the
//! optimizer and initializers used by child models and the controller.

mod activation;
mod init;
mod loss;
mod optim;
mod segments;
mod tape;
mod tensor;

pub use activation::{sigmoid, softplus, ActivationKind, ELU_ALPHA, LEAKY_RELU_SLOPE};
pub use init::{glorot_uniform, uniform};
pub use loss::{node_loss, Targets};
pub use optim::{AdamConfig, AdamState};
pub use segments::Segments;
pub use tape::{dropout_mask, Gradients, SegmentReduce, Tape, Var};
pub use tensor::Tensor;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Value-level dropout (no tape). Identity at inference or when `p == 0`.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(x: &Tensor<T>, p: f64, training: bool, rng: &mut R) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let mask: Tensor<T> = dropout_mask(x.shape(), p, rng);
    Ok(x.zip_map(&mask, |a, b| a * b))
}
