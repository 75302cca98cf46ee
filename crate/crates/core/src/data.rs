//! Datasets: CIFAR-10/100 binary ingestion, class-balanced subsetting and a
//! synthetic separable dataset for smoke tests.
//!
//! Pixels are only divided by 255; no mean subtraction or whitening is done.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{self, Domain};

pub const CIFAR_SIDE: usize = 32;
pub const CIFAR_PIXELS: usize = CIFAR_SIDE * CIFAR_SIDE * 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    pub fn num_classes(&self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    /// Bytes per record: label byte(s) followed by 3072 channel-planar pixels.
    pub fn record_len(&self) -> usize {
        self.label_bytes() + CIFAR_PIXELS
    }

    fn label_bytes(&self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn files(&self, split: Split) -> Vec<&'static str> {
        match (self, split) {
            (CifarVariant::Cifar10, Split::Train) => vec![
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            (CifarVariant::Cifar10, Split::Test) => vec!["test_batch.bin"],
            (CifarVariant::Cifar100, Split::Train) => vec!["train.bin"],
            (CifarVariant::Cifar100, Split::Test) => vec!["test.bin"],
        }
    }

    fn archive_dir(&self) -> &'static str {
        match self {
            CifarVariant::Cifar10 => "cifar-10-batches-bin",
            CifarVariant::Cifar100 => "cifar-100-binary",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Label {
                label: l,
                num_classes,
            });
        }
        if let Some(first) = images.first() {
            if images.iter().any(|im| !im.same_shape(first)) {
                return Err(Error::Shape("images in a dataset must share one shape".into()));
            }
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `[height, width, channels]` of the images, if any.
    pub fn image_shape(&self) -> Option<[usize; 3]> {
        self.images
            .first()
            .map(|im| [im.height(), im.width(), im.channels()])
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split: self.split,
        }
    }
}

/// Decodes one record: channel-planar bytes to a channel-last image. For
/// CIFAR-100 the second (fine) label byte is used.
pub fn decode_record(record: &[u8], variant: CifarVariant) -> Result<(usize, Image)> {
    if record.len() != variant.record_len() {
        return Err(Error::Shape(format!(
            "record of {} bytes, expected {}",
            record.len(),
            variant.record_len()
        )));
    }
    let label = record[variant.label_bytes() - 1] as usize;
    let planes = &record[variant.label_bytes()..];
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    let mut hwc = Vec::with_capacity(CIFAR_PIXELS);
    for p in 0..plane {
        for c in 0..3 {
            hwc.push(planes[c * plane + p]);
        }
    }
    Ok((label, Image::from_bytes(CIFAR_SIDE, CIFAR_SIDE, 3, &hwc)?))
}

/// Inverse of [`decode_record`]. CIFAR-100 records need the coarse label,
/// which is not kept after loading.
pub fn encode_record(label: usize, coarse: Option<u8>, img: &Image, variant: CifarVariant) -> Result<Vec<u8>> {
    if [img.height(), img.width(), img.channels()] != [CIFAR_SIDE, CIFAR_SIDE, 3] {
        return Err(Error::Shape("CIFAR records hold 32x32x3 images".into()));
    }
    let mut out = Vec::with_capacity(variant.record_len());
    if variant == CifarVariant::Cifar100 {
        out.push(coarse.unwrap_or(0));
    }
    out.push(label as u8);
    let bytes = img.to_bytes();
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    for c in 0..3 {
        for p in 0..plane {
            out.push(bytes[p * 3 + c]);
        }
    }
    Ok(out)
}

/// Decodes a whole `.bin` file.
pub fn load_cifar_file(path: &Path, variant: CifarVariant, split: Split) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let rec = variant.record_len();
    if bytes.is_empty() || bytes.len() % rec != 0 {
        return Err(Error::format(
            path,
            format!("{} bytes is not a whole number of {rec}-byte records", bytes.len()),
        ));
    }
    let classes = variant.num_classes();
    let mut images = Vec::with_capacity(bytes.len() / rec);
    let mut labels = Vec::with_capacity(bytes.len() / rec);
    for (i, r) in bytes.chunks_exact(rec).enumerate() {
        let (label, img) = decode_record(r, variant)?;
        if label >= classes {
            return Err(Error::format(
                path,
                format!("record {i}: label {label} out of range for {classes} classes"),
            ));
        }
        images.push(img);
        labels.push(label);
    }
    Dataset::new(images, labels, classes, split)
}

fn resolve_dir(dir: &Path, variant: CifarVariant, split: Split) -> PathBuf {
    let first = variant.files(split)[0];
    if dir.join(first).exists() {
        dir.to_path_buf()
    } else {
        dir.join(variant.archive_dir())
    }
}

/// Loads the published binary files from `dir` (or its extracted archive
/// subdirectory).
pub fn load_cifar(dir: &Path, variant: CifarVariant, split: Split) -> Result<Dataset> {
    let dir = resolve_dir(dir, variant, split);
    let mut all = Dataset::new(vec![], vec![], variant.num_classes(), split)?;
    for name in variant.files(split) {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::format(&path, "file not found"));
        }
        let part = load_cifar_file(&path, variant, split)?;
        all.images.extend(part.images);
        all.labels.extend(part.labels);
    }
    Ok(all)
}

/// `n_per_class` examples of every class, chosen and ordered by `seed`.
pub fn subset(ds: &Dataset, n_per_class: usize, seed: u64) -> Result<Dataset> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let smallest = by_class.iter().map(Vec::len).min().unwrap_or(0);
    if n_per_class > smallest {
        return Err(Error::Size(format!(
            "asked for {n_per_class} per class but the smallest class has {smallest}"
        )));
    }
    let mut r = rng::keyed(seed, Domain::Subset, 0, 0);
    let mut chosen = Vec::with_capacity(n_per_class * ds.num_classes);
    for idx in &mut by_class {
        idx.shuffle(&mut r);
        chosen.extend_from_slice(&idx[..n_per_class]);
    }
    chosen.shuffle(&mut r);
    Ok(ds.select(&chosen))
}

/// Class-conditional patterns that a linear model can separate: each class
/// has its own per-channel brightness profile along one image axis, plus
/// uniform noise. Labels cycle through the classes before shuffling.
pub fn synthetic_blobs(num_classes: usize, n: usize, side: usize, seed: u64) -> Result<Dataset> {
    if num_classes == 0 || side == 0 {
        return Err(Error::Config("synthetic data needs ≥ 1 class and side ≥ 1".into()));
    }
    let mut proto_rng = rng::keyed(seed, Domain::Synthetic, 0, 0);
    let protos: Vec<Vec<f32>> = (0..num_classes)
        .map(|_| {
            let base: [f32; 3] = [proto_rng.gen(), proto_rng.gen(), proto_rng.gen()];
            let slope: [f32; 3] = [
                proto_rng.gen_range(-0.5..0.5),
                proto_rng.gen_range(-0.5..0.5),
                proto_rng.gen_range(-0.5..0.5),
            ];
            let vertical = proto_rng.gen_bool(0.5);
            let mut img = Vec::with_capacity(side * side * 3);
            for r in 0..side {
                for c in 0..side {
                    let t = if vertical { r } else { c } as f32 / side.max(2).saturating_sub(1) as f32 - 0.5;
                    for k in 0..3 {
                        img.push(base[k] + slope[k] * t);
                    }
                }
            }
            img
        })
        .collect();
    let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    let mut r = rng::keyed(seed, Domain::Synthetic, 1, 0);
    labels.shuffle(&mut r);
    let images = labels
        .iter()
        .map(|&l| {
            let data = protos[l]
                .iter()
                .map(|&v| (v + r.gen_range(-0.1f32..0.1)).clamp(0.0, 1.0))
                .collect();
            Image::new(side, side, 3, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(images, labels, num_classes, Split::Train)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(variant: CifarVariant, label: u8, seed: u8) -> Vec<u8> {
        let mut r = Vec::new();
        if variant == CifarVariant::Cifar100 {
            r.push(7);
        }
        r.push(label);
        r.extend((0..CIFAR_PIXELS).map(|i| (i as u8).wrapping_mul(seed).wrapping_add(i as u8 / 3)));
        r
    }

    #[test]
    fn decode_is_planar_to_interleaved() {
        let rec = record(CifarVariant::Cifar10, 3, 5);
        let (label, img) = decode_record(&rec, CifarVariant::Cifar10).unwrap();
        assert_eq!(label, 3);
        for (row, col, c) in [(0, 0, 0), (0, 1, 2), (31, 31, 1), (17, 4, 2)] {
            let b = rec[1 + c * 1024 + row * 32 + col];
            assert_eq!(img.get(row, col, c), b as f32 / 255.0);
        }
    }

    #[test]
    fn cifar100_uses_fine_label_and_reencodes() {
        let rec = record(CifarVariant::Cifar100, 42, 9);
        let (label, img) = decode_record(&rec, CifarVariant::Cifar100).unwrap();
        assert_eq!(label, 42);
        assert_eq!(encode_record(label, Some(7), &img, CifarVariant::Cifar100).unwrap(), rec);
    }

    #[test]
    fn file_errors() {
        let dir = tempfile::tempdir().unwrap();
        let short = dir.path().join("short.bin");
        fs::write(&short, vec![0u8; 3072]).unwrap();
        assert!(matches!(
            load_cifar_file(&short, CifarVariant::Cifar10, Split::Train),
            Err(Error::Format { .. })
        ));
        let bad = dir.path().join("bad.bin");
        fs::write(&bad, record(CifarVariant::Cifar10, 10, 1)).unwrap();
        assert!(matches!(
            load_cifar_file(&bad, CifarVariant::Cifar10, Split::Train),
            Err(Error::Format { .. })
        ));
        assert!(load_cifar(dir.path(), CifarVariant::Cifar10, Split::Test).is_err());
    }

    #[test]
    fn loads_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("cifar-10-batches-bin");
        fs::create_dir(&sub).unwrap();
        let mut bytes = record(CifarVariant::Cifar10, 1, 2);
        bytes.extend(record(CifarVariant::Cifar10, 9, 3));
        fs::write(sub.join("test_batch.bin"), &bytes).unwrap();
        let ds = load_cifar(dir.path(), CifarVariant::Cifar10, Split::Test).unwrap();
        assert_eq!(ds.labels, vec![1, 9]);
        assert!(ds.images.iter().all(Image::in_unit_range));
    }

    #[test]
    fn dataset_invariants_enforced() {
        let img = Image::zeros(2, 2, 1);
        assert!(Dataset::new(vec![img.clone()], vec![], 2, Split::Train).is_err());
        assert!(Dataset::new(vec![img.clone()], vec![2], 2, Split::Train).is_err());
        assert!(Dataset::new(vec![img, Image::zeros(3, 2, 1)], vec![0, 1], 2, Split::Train).is_err());
    }

    #[test]
    fn subset_is_balanced_and_stable() {
        let ds = synthetic_blobs(4, 40, 4, 1).unwrap();
        let s = subset(&ds, 6, 0).unwrap();
        assert_eq!(s.len(), 24);
        assert_eq!(s.class_counts(), vec![6; 4]);
        assert_eq!(s, subset(&ds, 6, 0).unwrap());
        assert_ne!(s.images, subset(&ds, 6, 1).unwrap().images);
        assert!(matches!(subset(&ds, 11, 0), Err(Error::Size(_))));
    }

    #[test]
    fn full_subset_is_permutation() {
        let ds = synthetic_blobs(3, 30, 4, 2).unwrap();
        let s = subset(&ds, 10, 5).unwrap();
        let key = |d: &Dataset| {
            let mut v: Vec<(usize, Vec<u32>)> = d
                .images
                .iter()
                .zip(&d.labels)
                .map(|(im, &l)| (l, im.data().iter().map(|x| x.to_bits()).collect()))
                .collect();
            v.sort();
            v
        };
        assert_eq!(key(&s), key(&ds));
    }

    #[test]
    fn synthetic_is_deterministic_and_uniform() {
        let a = synthetic_blobs(5, 100, 8, 3).unwrap();
        assert_eq!(a, synthetic_blobs(5, 100, 8, 3).unwrap());
        assert_eq!(a.class_counts(), vec![20; 5]);
        assert!(a.images.iter().all(Image::in_unit_range));
    }
}
