//! Central finite-difference gradient checks.
//!
//! The probe loss is `L = Σ y ⊙ R` for a fixed random `R`, so `∂L/∂y = R`.
//! Every input element and every parameter element is perturbed.

use rand::Rng;

use crate::nn::{Mode, Module, Real, Tensor};
use crate::rng;

/// Uniform `[-1, 1)` entries from a fixed seed.
pub fn random_tensor<T: Real>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut r = rng::seeded(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(r.gen::<f64>() * 2.0 - 1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn probe_loss<M: Module<f64>>(
    m: &mut M,
    x: &Tensor<f64>,
    r: &Tensor<f64>,
    mode: Mode,
    before: &mut dyn FnMut(&mut M),
) -> f64 {
    before(m);
    let y = m.forward(x.clone(), mode).expect("forward");
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Largest relative error between analytic and numeric gradients.
pub fn check_module<M: Module<f64>>(m: &mut M, x: &Tensor<f64>, mode: Mode, eps: f64) -> f64 {
    check_module_with(m, x, mode, eps, &mut |_| {})
}

/// As [`check_module`], calling `before` ahead of every forward pass (used to
/// pin stochastic layers to one mask).
pub fn check_module_with<M: Module<f64>>(
    m: &mut M,
    x: &Tensor<f64>,
    mode: Mode,
    eps: f64,
    before: &mut dyn FnMut(&mut M),
) -> f64 {
    before(m);
    let y = m.forward(x.clone(), mode).expect("forward");
    let r = random_tensor::<f64>(y.shape(), 0xfd);
    let dx = m.backward(r.clone()).expect("backward");

    let mut analytic_params = Vec::new();
    m.visit_params(&mut |p| analytic_params.extend_from_slice(p.grad.data()));

    let mut worst = 0.0f64;
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + eps;
        let lp = probe_loss(m, &xp, &r, mode, before);
        xp.data_mut()[i] = orig - eps;
        let lm = probe_loss(m, &xp, &r, mode, before);
        xp.data_mut()[i] = orig;
        let numeric = (lp - lm) / (2.0 * eps);
        worst = worst.max(relative_error(dx.data()[i], numeric));
    }

    for (flat, &analytic) in analytic_params.iter().enumerate() {
        let lp = {
            nudge(m, flat, eps);
            probe_loss(m, x, &r, mode, before)
        };
        let lm = {
            nudge(m, flat, -2.0 * eps);
            probe_loss(m, x, &r, mode, before)
        };
        nudge(m, flat, eps);
        let numeric = (lp - lm) / (2.0 * eps);
        worst = worst.max(relative_error(analytic, numeric));
    }
    worst
}

/// Adds `delta` to the `flat`-th scalar across all parameters.
pub fn nudge<M: Module<f64>>(m: &mut M, flat: usize, delta: f64) {
    let mut offset = 0;
    m.visit_params_mut(&mut |p| {
        let n = p.value.len();
        if flat >= offset && flat < offset + n {
            p.value.data_mut()[flat - offset] += delta;
        }
        offset += n;
    });
}
