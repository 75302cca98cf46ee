//! Single-view and test-time-augmented evaluation.

use rand::RngCore;

use crate::arch::Network;
use crate::augment::{apply_scheme, crop, CropMode, CropSpec, Scheme, SchemeKind};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{self, Domain};

use super::train::{argmax_rows, stack};

const EVAL_BATCH: usize = 250;

/// Fraction of rows whose argmax matches the label.
pub fn accuracy(posteriors: &[Vec<f64>], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = posteriors
        .iter()
        .zip(labels)
        .filter(|(p, &l)| argmax_rows(p, 1).next() == Some(l))
        .count();
    hits as f64 / labels.len() as f64
}

fn posteriors_of(net: &mut Network<f32>, views: &[Image]) -> Result<Vec<Vec<f64>>> {
    let probs = net.predict(stack(views)?)?;
    let c = probs.shape()[1];
    Ok(probs
        .data()
        .chunks_exact(c)
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect())
}

/// Single-view posteriors in evaluation mode. With a crop configured the
/// view is the central window.
pub fn posteriors(net: &mut Network<f32>, ds: &Dataset, crop_spec: Option<CropSpec>) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(ds.len());
    for chunk in ds.images.chunks(EVAL_BATCH) {
        let views = match crop_spec {
            None => chunk.to_vec(),
            Some(c) => chunk
                .iter()
                .map(|im| crop(im, CropMode::Center, c.height, c.width, &mut rand::rngs::mock::StepRng::new(0, 0)))
                .collect::<Result<Vec<_>>>()?,
        };
        out.extend(posteriors_of(net, &views)?);
    }
    Ok(out)
}

pub fn evaluate(net: &mut Network<f32>, ds: &Dataset, crop_spec: Option<CropSpec>) -> Result<f64> {
    Ok(accuracy(&posteriors(net, ds, crop_spec)?, &ds.labels))
}

/// Posteriors averaged over `n` light-augmented views per image. The stream
/// for view `v` of image `i` comes from `rng_for(v, i)`.
pub fn tta_posteriors_with<R, F>(
    net: &mut Network<f32>,
    ds: &Dataset,
    n: usize,
    crop_spec: Option<CropSpec>,
    mut rng_for: F,
) -> Result<Vec<Vec<f64>>>
where
    R: RngCore,
    F: FnMut(usize, usize) -> R,
{
    if n == 0 {
        return Err(Error::Usage("test-time augmentation needs at least one view".into()));
    }
    let scheme = Scheme {
        kind: SchemeKind::Light,
        crop: crop_spec,
    };
    let mut sums = vec![vec![0.0; ds.num_classes]; ds.len()];
    for start in (0..ds.len()).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(ds.len());
        for v in 0..n {
            let views = (start..end)
                .map(|i| apply_scheme(&ds.images[i], &scheme, &mut rng_for(v, i)))
                .collect::<Result<Vec<_>>>()?;
            for (acc, p) in sums[start..end].iter_mut().zip(posteriors_of(net, &views)?) {
                if p.len() != acc.len() {
                    return Err(Error::Shape(format!(
                        "network has {} outputs, dataset {} classes",
                        p.len(),
                        acc.len()
                    )));
                }
                acc.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
            }
        }
    }
    let inv = 1.0 / n as f64;
    for row in &mut sums {
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(sums)
}

/// TTA accuracy with views keyed by `(seed, view, image index)`.
pub fn evaluate_tta(net: &mut Network<f32>, ds: &Dataset, n: usize, seed: u64, crop_spec: Option<CropSpec>) -> Result<f64> {
    let post = tta_posteriors_with(net, ds, n, crop_spec, |v, i| {
        rng::keyed(seed, Domain::Tta, v as u64, i as u64)
    })?;
    Ok(accuracy(&post, &ds.labels))
}
