use rand::Rng;

use super::tensor::Tensor;
use crate::scalar::Scalar;

/// Glorot/Xavier uniform initialization of a `[fan_in × fan_out]` matrix.
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / (fan_in.max(1) + fan_out.max(1)) as f64).sqrt();
    uniform(&[fan_in, fan_out], bound, rng)
}

/// Entries drawn uniformly from `[-bound, bound]`.
pub fn uniform<T: Scalar, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.gen_range(-bound..=bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches element count")
}
