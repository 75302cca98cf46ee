//! Weight initializers. Draws are made in `f64` and then cast, so an `f32`
//! and an `f64` network built from the same seed start from the same values.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::{Real, Tensor};
use crate::rng::Rng as Stream;

/// `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Real>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Stream) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(a * (2.0 * rng.gen::<f64>() - 1.0)))
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `N(0, sqrt(2 / fan_in))`.
pub fn he_normal<T: Real>(shape: &[usize], fan_in: usize, rng: &mut Stream) -> Tensor<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(normal.sample(rng))).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}
