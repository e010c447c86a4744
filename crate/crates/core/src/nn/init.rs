use rand::Rng as _;

use super::Tensor;
use crate::rng::Rng;
use crate::Scalar;

pub fn uniform<T: Scalar>(shape: &[usize], limit: f64, rng: &mut Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.gen_range(-limit..=limit))).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Glorot/Xavier uniform: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, limit, rng)
}
