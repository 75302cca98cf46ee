//! Batch normalization over the last axis. In training mode statistics come
//! from every other axis (batch and spatial); evaluation uses the running
//! averages.

use crate::error::{Error, Result};
use crate::nn::{Mode, Module, Param, Real, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub epsilon: T,
    /// Weight of the old running value in the exponential average.
    pub momentum: T,
    pub scale: Param<T>,
    pub shift: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    name: String,
    cache: Option<BnCache<T>>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(name: &str, channels: usize, epsilon: f64, momentum: f64) -> Self {
        Self {
            channels,
            epsilon: T::lit(epsilon),
            momentum: T::lit(momentum),
            scale: Param::new(format!("{name}.scale"), Tensor::full(&[channels], T::one()), false),
            shift: Param::new(format!("{name}.shift"), Tensor::zeros(&[channels]), false),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            name: name.to_string(),
            cache: None,
        }
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        let c = *x.shape().last().unwrap_or(&0);
        if c != self.channels || x.shape().len() < 2 {
            return Err(Error::Shape(format!(
                "{}: expected trailing axis {}, got {:?}",
                self.name,
                self.channels,
                x.shape()
            )));
        }
        Ok(x.len() / c)
    }
}

impl<T: Real> Module<T> for BatchNorm<T> {
    fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let rows = self.check(&x)?;
        let c = self.channels;
        let (mean, var) = match mode {
            Mode::Train => {
                if x.shape()[0] < 2 {
                    return Err(Error::DegenerateBatch(format!(
                        "{}: training-mode batch norm needs at least 2 examples",
                        self.name
                    )));
                }
                let mut mean = vec![T::zero(); c];
                for row in x.data().chunks_exact(c) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                let count = T::from_usize_lossy(rows);
                mean.iter_mut().for_each(|m| *m /= count);
                let mut var = vec![T::zero(); c];
                for row in x.data().chunks_exact(c) {
                    for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = v - m;
                        *s += d * d;
                    }
                }
                var.iter_mut().for_each(|s| *s /= count);
                let keep = self.momentum;
                let take = T::one() - keep;
                for i in 0..c {
                    self.running_mean[i] = keep * self.running_mean[i] + take * mean[i];
                    self.running_var[i] = keep * self.running_var[i] + take * var[i];
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::one() / (v + self.epsilon).sqrt())
            .collect();
        let gamma = self.scale.value.data();
        let beta = self.shift.value.data();
        let mut xhat = vec![T::zero(); x.len()];
        for (row, hrow) in x.data_mut().chunks_exact_mut(c).zip(xhat.chunks_exact_mut(c)) {
            for i in 0..c {
                let h = (row[i] - mean[i]) * inv_std[i];
                hrow[i] = h;
                row[i] = h * gamma[i] + beta[i];
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, mode });
        Ok(x)
    }

    fn backward(&mut self, mut grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State(format!("{}: backward without forward", self.name)))?;
        if grad_out.len() != cache.xhat.len() {
            return Err(Error::Shape(format!("{}: gradient length mismatch", self.name)));
        }
        let c = self.channels;
        let rows = grad_out.len() / c;
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for (g, h) in grad_out.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for i in 0..c {
                dbeta[i] += g[i];
                dgamma[i] += g[i] * h[i];
            }
        }
        let gamma = self.scale.value.data().to_vec();
        match cache.mode {
            Mode::Train => {
                // dx = γ/σ · (g - mean(g) - x̂ · mean(g · x̂))
                let count = T::from_usize_lossy(rows);
                for (g, h) in grad_out.data_mut().chunks_exact_mut(c).zip(cache.xhat.chunks_exact(c)) {
                    for i in 0..c {
                        g[i] = gamma[i] * cache.inv_std[i]
                            * (g[i] - dbeta[i] / count - h[i] * dgamma[i] / count);
                    }
                }
            }
            Mode::Eval => {
                for g in grad_out.data_mut().chunks_exact_mut(c) {
                    for i in 0..c {
                        g[i] *= gamma[i] * cache.inv_std[i];
                    }
                }
            }
        }
        self.scale.grad.data_mut().copy_from_slice(&dgamma);
        self.shift.grad.data_mut().copy_from_slice(&dbeta);
        Ok(grad_out)
    }

    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.scale);
        f(&self.shift);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.scale);
        f(&mut self.shift);
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Vec<T>)) {
        f(&format!("{}.running_mean", self.name), &mut self.running_mean);
        f(&format!("{}.running_var", self.name), &mut self.running_var);
    }
}
