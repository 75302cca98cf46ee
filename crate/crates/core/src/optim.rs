//! SGD with classical or Nesterov momentum, coupled L2 weight decay and step
//! learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::arch::Network;
use crate::error::{Error, Result};
use crate::nn::{Param, Real, Tensor};

/// One schedule entry: from `epoch` on, the rate is multiplied by `factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Milestone {
    pub epoch: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub base_lr: f64,
    #[serde(default)]
    pub schedule: Vec<Milestone>,
    pub momentum: f64,
    #[serde(default)]
    pub nesterov: bool,
    /// Coupled L2 coefficient λ; the penalty is `λ/2 · ‖w‖²`.
    #[serde(default)]
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    /// All-CNN on CIFAR: momentum 0.9, lr 0.01 decayed ×0.1 at 200/250/300 of
    /// 350 epochs, batch 128, λ = 0.001.
    pub fn allcnn_cifar() -> Self {
        Self {
            base_lr: 0.01,
            schedule: milestones(&[200, 250, 300], 0.1),
            momentum: 0.9,
            nesterov: false,
            weight_decay: 0.001,
            batch_size: 128,
            epochs: 350,
            seed: 0,
        }
    }

    /// All-CNN on ImageNet: batch 64, 25 epochs, decay ×0.1 at 10 and 20.
    pub fn allcnn_imagenet() -> Self {
        Self {
            schedule: milestones(&[10, 20], 0.1),
            batch_size: 64,
            epochs: 25,
            ..Self::allcnn_cifar()
        }
    }

    /// WRN on CIFAR: Nesterov 0.9, lr 0.1 decayed ×0.2 at 60/120/160 of 200
    /// epochs, batch 128, λ = 0.0005.
    pub fn wrn_cifar() -> Self {
        Self {
            base_lr: 0.1,
            schedule: milestones(&[60, 120, 160], 0.2),
            momentum: 0.9,
            nesterov: true,
            weight_decay: 0.0005,
            batch_size: 128,
            epochs: 200,
            seed: 0,
        }
    }

    /// WRN on ImageNet: batch 32, 20 epochs, decay ×0.2 at 8 and 15.
    pub fn wrn_imagenet() -> Self {
        Self {
            schedule: milestones(&[8, 15], 0.2),
            batch_size: 32,
            epochs: 20,
            ..Self::wrn_cifar()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "allcnn-cifar" => Ok(Self::allcnn_cifar()),
            "allcnn-imagenet" => Ok(Self::allcnn_imagenet()),
            "wrn-cifar" => Ok(Self::wrn_cifar()),
            "wrn-imagenet" => Ok(Self::wrn_imagenet()),
            other => Err(Error::Config(format!("unknown training preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be ≥ 0, got {}", self.weight_decay)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.schedule.windows(2).any(|w| w[0].epoch >= w[1].epoch) {
            return Err(Error::Config("schedule epochs must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Rescales the milestones to a shorter run, keeping their relative
    /// positions (rounded to the nearest epoch).
    pub fn rescaled(&self, epochs: usize) -> Self {
        let ratio = epochs as f64 / self.epochs as f64;
        let mut out = self.clone();
        out.epochs = epochs;
        out.schedule = self
            .schedule
            .iter()
            .map(|m| Milestone {
                epoch: (m.epoch as f64 * ratio).round() as usize,
                factor: m.factor,
            })
            .collect();
        out.schedule.dedup_by_key(|m| m.epoch);
        out
    }
}

pub fn milestones(epochs: &[usize], factor: f64) -> Vec<Milestone> {
    epochs.iter().map(|&epoch| Milestone { epoch, factor }).collect()
}

/// Rate in effect during 0-indexed `epoch`; a milestone applies from its own
/// epoch onward.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.schedule
        .iter()
        .filter(|m| m.epoch <= epoch)
        .fold(cfg.base_lr, |lr, m| lr * m.factor)
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct OptState<T> {
    velocity: Vec<Tensor<T>>,
    /// Number of parameter tensors that received a decay term.
    pub decay_applications: u64,
    pub steps: u64,
}

impl<T: Real> OptState<T> {
    pub fn new() -> Self {
        Self {
            velocity: Vec::new(),
            decay_applications: 0,
            steps: 0,
        }
    }
}

/// One update over `params` in order. With `g̃ = g + λw` for decayed
/// parameters:
///
/// * classical: `v ← μv − lr·g̃`, `w ← w + v`
/// * Nesterov: `v ← μv − lr·g̃`, `w ← w + μv − lr·g̃`
pub fn sgd_step<'a, T: Real, I>(params: I, state: &mut OptState<T>, cfg: &TrainConfig, lr: f64) -> Result<()>
where
    I: IntoIterator<Item = &'a mut Param<T>>,
{
    for (i, p) in params.into_iter().enumerate() {
        update_param(i, p, state, cfg, lr)?;
    }
    state.steps += 1;
    Ok(())
}

/// [`sgd_step`] over every parameter of a network, in visiting order.
pub fn sgd_step_network<T: Real>(
    net: &mut Network<T>,
    state: &mut OptState<T>,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<()> {
    let mut i = 0;
    let mut res = Ok(());
    net.visit_params_mut(&mut |p| {
        if res.is_ok() {
            res = update_param(i, p, state, cfg, lr);
        }
        i += 1;
    });
    res?;
    state.steps += 1;
    Ok(())
}

fn update_param<T: Real>(i: usize, p: &mut Param<T>, state: &mut OptState<T>, cfg: &TrainConfig, lr: f64) -> Result<()> {
    let mu = T::lit(cfg.momentum);
    let lr_t = T::lit(lr);
    let lambda = T::lit(cfg.weight_decay);
    p.value.check_same(&p.grad)?;
    if state.velocity.len() <= i {
        state.velocity.push(Tensor::zeros_like(&p.value));
    }
    let v = &mut state.velocity[i];
    v.check_same(&p.value)?;
    let apply_decay = cfg.weight_decay > 0.0 && p.decay;
    if apply_decay {
        state.decay_applications += 1;
    }
    let w = p.value.data_mut();
    let g = p.grad.data();
    for ((w, &g), v) in w.iter_mut().zip(g).zip(v.data_mut()) {
        let g_eff = if apply_decay { g + lambda * *w } else { g };
        *v = mu * *v - lr_t * g_eff;
        if cfg.nesterov {
            *w += mu * *v - lr_t * g_eff;
        } else {
            *w += *v;
        }
    }
    Ok(())
}
