use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Mode, Module, Real, Tensor};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    mask: Option<Vec<bool>>,
    _t: std::marker::PhantomData<T>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Self {
            mask: None,
            _t: std::marker::PhantomData,
        }
    }
}

impl<T: Real> Module<T> for Relu<T> {
    fn forward(&mut self, mut x: Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let mut mask = Vec::with_capacity(x.len());
        for v in x.data_mut() {
            let on = *v > T::zero();
            if !on {
                *v = T::zero();
            }
            mask.push(on);
        }
        self.mask = Some(mask);
        Ok(x)
    }

    fn backward(&mut self, mut grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let mask = self
            .mask
            .take()
            .ok_or_else(|| Error::State("relu: backward without forward".into()))?;
        if mask.len() != grad_out.len() {
            return Err(Error::Shape("relu: gradient length mismatch".into()));
        }
        for (g, on) in grad_out.data_mut().iter_mut().zip(mask) {
            if !on {
                *g = T::zero();
            }
        }
        Ok(grad_out)
    }
}

/// Inverted dropout: in training each unit is zeroed with probability `rate`
/// and survivors are scaled by `1 / (1 - rate)`; evaluation is the identity.
///
/// The layer owns its random stream so that a network's dropout masks are a
/// function of its seed and the number of training steps taken.
#[derive(Debug, Clone)]
pub struct Dropout<T> {
    pub rate: f64,
    rng: rng::Rng,
    mask: Option<Vec<T>>,
    /// Number of training-mode passes that actually drew a mask.
    pub mask_draws: u64,
}

impl<T: Real> Dropout<T> {
    pub fn new(rate: f64, seed: u64, index: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self {
            rate,
            rng: rng::keyed(seed, Domain::Dropout, index, 0),
            mask: None,
            mask_draws: 0,
        })
    }

    pub fn reseed(&mut self, seed: u64, index: u64) {
        self.rng = rng::keyed(seed, Domain::Dropout, index, 0);
    }
}

impl<T: Real> Module<T> for Dropout<T> {
    fn forward(&mut self, mut x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x);
        }
        let keep = T::lit(1.0 / (1.0 - self.rate));
        let mut mask = Vec::with_capacity(x.len());
        for v in x.data_mut() {
            let m = if self.rng.gen::<f64>() < self.rate {
                T::zero()
            } else {
                keep
            };
            *v *= m;
            mask.push(m);
        }
        self.mask_draws += 1;
        self.mask = Some(mask);
        Ok(x)
    }

    fn backward(&mut self, mut grad_out: Tensor<T>) -> Result<Tensor<T>> {
        if let Some(mask) = self.mask.take() {
            if mask.len() != grad_out.len() {
                return Err(Error::Shape("dropout: gradient length mismatch".into()));
            }
            for (g, m) in grad_out.data_mut().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        Ok(grad_out)
    }
}
