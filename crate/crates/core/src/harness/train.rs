//! Mini-batch SGD with a pipelined augmentation stage.
//!
//! Batch `j` of an epoch is augmented by worker `j mod W` and handed over a
//! bounded channel; the training thread receives from the channels in the
//! same round-robin order, so batches arrive in sequence while later ones
//! are still being prepared. Each image draws its transform from a stream
//! keyed by `(seed, epoch, image index)`, which makes the training sequence
//! independent of `W`.

use std::sync::mpsc::{sync_channel, Receiver};
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::arch::{self, Network};
use crate::augment::{apply_scheme, Scheme};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{softmax_cross_entropy, Mode, Tensor};
use crate::optim::{lr_at_epoch, sgd_step_network, OptState, TrainConfig};
use crate::rng::{self, Domain};

use super::config::{ExperimentConfig, RuntimeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochMetrics>,
    pub steps: u64,
    /// Parameter tensors that received a weight-decay term, summed over steps.
    pub decay_applications: u64,
    pub dropout_mask_draws: u64,
    /// Thread-seconds spent producing batches, summed over workers.
    pub augment_s: f64,
    pub wall_s: f64,
}

impl History {
    /// Loss and accuracy per epoch, without timings.
    pub fn metric_log(&self) -> Vec<(usize, f64, f64, f64)> {
        self.epochs
            .iter()
            .map(|e| (e.epoch, e.lr, e.train_loss, e.train_acc))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub runtime: RuntimeConfig,
    /// Cap on batches per epoch, for calibration runs.
    pub max_batches: Option<usize>,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

impl From<RuntimeConfig> for TrainOptions {
    fn from(runtime: RuntimeConfig) -> Self {
        Self {
            runtime,
            max_batches: None,
            verbose: false,
        }
    }
}

/// Stacks images into an NHWC batch.
pub fn stack(images: &[Image]) -> Result<Tensor<f32>> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("cannot stack an empty batch".into()))?;
    let (h, w, c) = (first.height(), first.width(), first.channels());
    let mut data = Vec::with_capacity(images.len() * h * w * c);
    for im in images {
        if !im.same_shape(first) {
            return Err(Error::Shape("images in a batch must share one shape".into()));
        }
        data.extend_from_slice(im.data());
    }
    Tensor::new(vec![images.len(), h, w, c], data)
}

struct Batch {
    x: Tensor<f32>,
    labels: Vec<usize>,
    augment_s: f64,
}

fn assemble(ds: &Dataset, indices: &[usize], scheme: &Scheme, seed: u64, epoch: usize) -> Result<Batch> {
    let start = Instant::now();
    let images = indices
        .iter()
        .map(|&i| {
            let mut r = rng::keyed(seed, Domain::Augment, epoch as u64, i as u64);
            apply_scheme(&ds.images[i], scheme, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    let x = stack(&images)?;
    Ok(Batch {
        x,
        labels: indices.iter().map(|&i| ds.labels[i]).collect(),
        augment_s: start.elapsed().as_secs_f64(),
    })
}

/// Epoch order: a keyed permutation, cut into batches. A trailing batch of
/// one is dropped because batch normalization cannot train on it.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::keyed(seed, Domain::Shuffle, epoch as u64, 0));
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Builds the network for `cfg` and trains it on `ds`.
pub fn train(cfg: &ExperimentConfig, ds: &Dataset, opts: &TrainOptions) -> Result<(Network<f32>, History)> {
    cfg.validate()?;
    let mut net = arch::build::<f32>(&cfg.arch_spec(), cfg.train.seed)?;
    let hist = train_network(&mut net, &cfg.train, &cfg.augmentation(), ds, opts)?;
    Ok((net, hist))
}

/// Trains an existing network in place.
pub fn train_network(
    net: &mut Network<f32>,
    cfg: &TrainConfig,
    scheme: &Scheme,
    ds: &Dataset,
    opts: &TrainOptions,
) -> Result<History> {
    cfg.validate()?;
    if ds.len() < 2 {
        return Err(Error::Size("training needs at least two images".into()));
    }
    let mut opt = OptState::new();
    let mut hist = History::default();
    let run_start = Instant::now();
    for epoch in 0..cfg.epochs {
        let epoch_start = Instant::now();
        let lr = lr_at_epoch(cfg, epoch);
        let mut batches = epoch_batches(ds.len(), cfg.batch_size, cfg.seed, epoch);
        if let Some(m) = opts.max_batches {
            batches.truncate(m);
        }
        let mut acc = Accum::default();
        let mut step = |j: usize, b: Batch| -> Result<()> {
            let logits = net.forward(b.x, Mode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &b.labels)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    batch: j,
                    loss: loss as f64,
                });
            }
            acc.add(&logits, &b.labels, loss as f64, b.augment_s);
            net.backward(grad)?;
            sgd_step_network(net, &mut opt, cfg, lr)
        };
        let workers = opts.runtime.workers;
        if workers == 0 {
            for (j, idx) in batches.iter().enumerate() {
                step(j, assemble(ds, idx, scheme, cfg.seed, epoch)?)?;
            }
        } else {
            let depth = opts.runtime.queue_depth.max(1);
            thread::scope(|s| -> Result<()> {
                let mut queues: Vec<Receiver<Result<Batch>>> = Vec::with_capacity(workers);
                for w in 0..workers {
                    let (tx, rx) = sync_channel(depth);
                    queues.push(rx);
                    let mine: Vec<&Vec<usize>> = batches.iter().skip(w).step_by(workers).collect();
                    s.spawn(move || {
                        for idx in mine {
                            // A closed channel means the consumer stopped early.
                            if tx.send(assemble(ds, idx, scheme, cfg.seed, epoch)).is_err() {
                                break;
                            }
                        }
                    });
                }
                for j in 0..batches.len() {
                    let b = queues[j % workers]
                        .recv()
                        .map_err(|_| Error::State("augmentation worker exited early".into()))??;
                    step(j, b)?;
                }
                Ok(())
            })?;
        }
        let m = EpochMetrics {
            epoch: epoch + 1,
            lr,
            train_loss: acc.loss_sum / acc.seen.max(1) as f64,
            train_acc: acc.correct as f64 / acc.seen.max(1) as f64,
            wall_s: epoch_start.elapsed().as_secs_f64(),
        };
        if opts.verbose {
            eprintln!(
                "epoch {:>3}  lr {:.2e}  loss {:.4}  acc {:.4}  {:.1}s",
                m.epoch, m.lr, m.train_loss, m.train_acc, m.wall_s
            );
        }
        hist.augment_s += acc.augment_s;
        hist.epochs.push(m);
    }
    hist.steps = opt.steps;
    hist.decay_applications = opt.decay_applications;
    hist.dropout_mask_draws = net.dropout_mask_draws();
    hist.wall_s = run_start.elapsed().as_secs_f64();
    Ok(hist)
}

#[derive(Default)]
struct Accum {
    loss_sum: f64,
    correct: usize,
    seen: usize,
    augment_s: f64,
}

impl Accum {
    fn add(&mut self, logits: &Tensor<f32>, labels: &[usize], loss: f64, augment_s: f64) {
        self.loss_sum += loss * labels.len() as f64;
        self.correct += argmax_rows(logits.data(), labels.len())
            .zip(labels)
            .filter(|(p, l)| p == *l)
            .count();
        self.seen += labels.len();
        self.augment_s += augment_s;
    }
}

/// Row-wise argmax; ties go to the lowest index.
pub(crate) fn argmax_rows<T: PartialOrd + Copy>(data: &[T], rows: usize) -> impl Iterator<Item = usize> + '_ {
    let cols = if rows == 0 { 0 } else { data.len() / rows };
    data.chunks_exact(cols.max(1)).take(rows).map(|row| {
        let mut best = 0;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        best
    })
}

/// Time to produce every batch of one epoch with no training, for
/// calibrating the pipeline.
pub fn augmentation_time(ds: &Dataset, cfg: &TrainConfig, scheme: &Scheme, max_batches: Option<usize>) -> Result<Duration> {
    let mut batches = epoch_batches(ds.len(), cfg.batch_size, cfg.seed, 0);
    if let Some(m) = max_batches {
        batches.truncate(m);
    }
    let start = Instant::now();
    for idx in &batches {
        assemble(ds, idx, scheme, cfg.seed, 0)?;
    }
    Ok(start.elapsed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_allcnn, WidthScale};
    use crate::augment::SchemeKind;
    use crate::data::synthetic_blobs;

    fn tiny_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            base_lr: 0.05,
            schedule: vec![],
            momentum: 0.9,
            nesterov: false,
            weight_decay: 0.0,
            batch_size: 16,
            epochs,
            seed: 5,
        }
    }

    #[test]
    fn batches_cover_each_image_once() {
        let b = epoch_batches(37, 8, 1, 0);
        assert_eq!(b.len(), 5);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_ne!(epoch_batches(37, 8, 1, 0), epoch_batches(37, 8, 1, 1));
    }

    #[test]
    fn singleton_tail_is_dropped() {
        let b = epoch_batches(17, 8, 0, 0);
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|c| c.len() == 8));
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let v: Vec<usize> = argmax_rows(&[1.0, 3.0, 3.0, 0.0, 0.0, 0.0], 2).collect();
        assert_eq!(v, vec![1, 0]);
    }

    #[test]
    fn worker_count_does_not_change_history() {
        let ds = synthetic_blobs(3, 40, 32, 2).unwrap();
        let cfg = tiny_cfg(2);
        let scheme = Scheme::new(SchemeKind::Heavier);
        let run = |workers: usize| {
            let w = WidthScale::new(1, 8).unwrap();
            let mut net = build_allcnn::<f32>(false, 3, w, true, 5).unwrap();
            let opts = TrainOptions::from(RuntimeConfig { workers, queue_depth: 2 });
            let h = train_network(&mut net, &cfg, &scheme, &ds, &opts).unwrap();
            (h.metric_log(), net.conv_kernel_sq_norm())
        };
        let inline = run(0);
        assert_eq!(inline, run(1));
        assert_eq!(inline, run(3));
    }

    #[test]
    fn divergence_is_reported() {
        let ds = synthetic_blobs(2, 16, 32, 0).unwrap();
        let w = WidthScale::new(1, 8).unwrap();
        let mut net = build_allcnn::<f32>(false, 2, w, false, 0).unwrap();
        net.visit_params_mut(&mut |p| {
            if p.name.ends_with("weight") {
                p.value.fill(f32::INFINITY);
            }
        });
        let opts = TrainOptions::from(RuntimeConfig::default());
        let err = train_network(&mut net, &tiny_cfg(3), &Scheme::new(SchemeKind::None), &ds, &opts);
        assert!(matches!(err, Err(Error::Divergence { epoch: 1, batch: 0, .. })), "{err:?}");
    }
}
