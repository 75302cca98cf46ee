//! Experiment and grid configuration.
//!
//! Files are TOML. A single run (`augablate train`) and a grid
//! (`augablate ablate`) share the `[arch]`, `[data]`, `[train]` and
//! `[runtime]` tables; see the README for the full key list.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::{ArchName, ArchitectureSpec, WidthScale};
use crate::augment::{CropSpec, Scheme, SchemeKind};
use crate::data::{self, CifarVariant, Dataset, Split};
use crate::error::{Error, Result};
use crate::nn::batchnorm::{DEFAULT_EPSILON, DEFAULT_MOMENTUM};
use crate::optim::{Milestone, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub name: ArchName,
    #[serde(default = "one")]
    pub width_scale: WidthScale,
    #[serde(default = "default_eps")]
    pub bn_epsilon: f64,
    #[serde(default = "default_momentum")]
    pub bn_momentum: f64,
}

fn one() -> WidthScale {
    WidthScale::ONE
}

fn default_eps() -> f64 {
    DEFAULT_EPSILON
}

fn default_momentum() -> f64 {
    DEFAULT_MOMENTUM
}

impl ArchConfig {
    pub fn new(name: ArchName, width_scale: WidthScale) -> Self {
        Self {
            name,
            width_scale,
            bn_epsilon: DEFAULT_EPSILON,
            bn_momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn spec(&self, num_classes: usize, input: [usize; 3], regularized: bool) -> ArchitectureSpec {
        let base = match self.name {
            ArchName::AllCnnCifar => ArchitectureSpec::allcnn_cifar(num_classes),
            ArchName::AllCnnImagenet => ArchitectureSpec::allcnn_imagenet(num_classes),
            ArchName::Wrn => ArchitectureSpec::wrn(num_classes, input[0] > 32),
        };
        let mut spec = base
            .with_width(self.width_scale)
            .with_input(input)
            .regularized(regularized);
        spec.bn_epsilon = self.bn_epsilon;
        spec.bn_momentum = self.bn_momentum;
        spec
    }

    fn preset(&self) -> &'static str {
        match self.name {
            ArchName::AllCnnCifar => "allcnn-cifar",
            ArchName::AllCnnImagenet => "allcnn-imagenet",
            ArchName::Wrn => "wrn-cifar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Cifar10,
    Cifar100,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Location of the binary CIFAR files. Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub dir: Option<PathBuf>,
    /// Class-balanced training subset; `None` keeps everything.
    #[serde(default)]
    pub train_per_class: Option<usize>,
    #[serde(default)]
    pub test_per_class: Option<usize>,
    #[serde(default)]
    pub subset_seed: u64,
    /// Synthetic source only.
    #[serde(default = "ten")]
    pub classes: usize,
    #[serde(default = "default_synth_train")]
    pub train_size: usize,
    #[serde(default = "default_synth_test")]
    pub test_size: usize,
    #[serde(default = "default_side")]
    pub side: usize,
}

fn ten() -> usize {
    10
}

fn default_synth_train() -> usize {
    4000
}

fn default_synth_test() -> usize {
    1000
}

fn default_side() -> usize {
    32
}

impl DataConfig {
    pub fn cifar10(dir: impl Into<PathBuf>) -> Self {
        Self {
            source: DataSource::Cifar10,
            dir: Some(dir.into()),
            train_per_class: None,
            test_per_class: None,
            subset_seed: 0,
            classes: 10,
            train_size: default_synth_train(),
            test_size: default_synth_test(),
            side: default_side(),
        }
    }

    pub fn synthetic(classes: usize, train_size: usize, test_size: usize, side: usize) -> Self {
        Self {
            source: DataSource::Synthetic,
            dir: None,
            classes,
            train_size,
            test_size,
            side,
            ..Self::cifar10("")
        }
    }

    pub fn num_classes(&self) -> usize {
        match self.source {
            DataSource::Cifar10 => 10,
            DataSource::Cifar100 => 100,
            DataSource::Synthetic => self.classes,
        }
    }

    pub fn image_shape(&self) -> [usize; 3] {
        match self.source {
            DataSource::Synthetic => [self.side, self.side, 3],
            _ => [data::CIFAR_SIDE, data::CIFAR_SIDE, 3],
        }
    }

    /// Training and test sets, subset as configured.
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        let (train, test) = match self.source {
            DataSource::Synthetic => {
                // One draw split in two, so both splits share class prototypes.
                let all = data::synthetic_blobs(
                    self.classes,
                    self.train_size + self.test_size,
                    self.side,
                    self.subset_seed,
                )?;
                let idx: Vec<usize> = (0..all.len()).collect();
                let train = all.select(&idx[..self.train_size]);
                let mut test = all.select(&idx[self.train_size..]);
                test.split = Split::Test;
                (train, test)
            }
            DataSource::Cifar10 | DataSource::Cifar100 => {
                let variant = if self.source == DataSource::Cifar10 {
                    CifarVariant::Cifar10
                } else {
                    CifarVariant::Cifar100
                };
                let dir = self
                    .dir
                    .as_deref()
                    .ok_or_else(|| Error::Config("data.dir is required for CIFAR sources".into()))?;
                (
                    data::load_cifar(dir, variant, Split::Train)?,
                    data::load_cifar(dir, variant, Split::Test)?,
                )
            }
        };
        let train = match self.train_per_class {
            Some(n) => data::subset(&train, n, self.subset_seed)?,
            None => train,
        };
        let test = match self.test_per_class {
            Some(n) => data::subset(&test, n, self.subset_seed)?,
            None => test,
        };
        Ok((train, test))
    }
}

/// Execution knobs that change wall-clock but never results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Augmentation threads; 0 augments inline on the training thread.
    #[serde(default)]
    pub workers: usize,
    /// Batches each worker may run ahead.
    #[serde(default = "default_depth")]
    pub queue_depth: usize,
}

fn default_depth() -> usize {
    4
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            workers: 0,
            queue_depth: default_depth(),
        }
    }
}

/// `[train]` table as written: either a full set of fields or a preset name
/// plus overrides. Giving `epochs` with a preset rescales its schedule unless
/// `schedule` is also given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainTable {
    pub preset: Option<String>,
    pub base_lr: Option<f64>,
    pub schedule: Option<Vec<Milestone>>,
    pub momentum: Option<f64>,
    pub nesterov: Option<bool>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
}

impl TrainTable {
    pub fn resolve(&self, default_preset: &str) -> Result<TrainConfig> {
        let mut c = TrainConfig::preset(self.preset.as_deref().unwrap_or(default_preset))?;
        if let Some(e) = self.epochs {
            c = if self.schedule.is_some() {
                TrainConfig { epochs: e, ..c }
            } else {
                c.rescaled(e)
            };
        }
        if let Some(s) = &self.schedule {
            c.schedule = s.clone();
        }
        c.base_lr = self.base_lr.unwrap_or(c.base_lr);
        c.momentum = self.momentum.unwrap_or(c.momentum);
        c.nesterov = self.nesterov.unwrap_or(c.nesterov);
        c.weight_decay = self.weight_decay.unwrap_or(c.weight_decay);
        c.batch_size = self.batch_size.unwrap_or(c.batch_size);
        c.seed = self.seed.unwrap_or(c.seed);
        c.validate()?;
        Ok(c)
    }
}

/// One fully resolved training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub arch: ArchConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub scheme: SchemeKind,
    #[serde(default)]
    pub crop: Option<CropSpec>,
    pub regularized: bool,
    pub tta_views: usize,
    #[serde(skip)]
    pub runtime: RuntimeConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !self.regularized && self.train.weight_decay != 0.0 {
            return Err(Error::Config(
                "regularized = false requires weight_decay = 0".into(),
            ));
        }
        if self.tta_views == 0 {
            return Err(Error::Config("tta_views must be ≥ 1".into()));
        }
        self.arch_spec().plan()?;
        Ok(())
    }

    pub fn cell_id(&self) -> String {
        cell_id(self.regularized, self.scheme)
    }

    pub fn augmentation(&self) -> Scheme {
        Scheme {
            kind: self.scheme,
            crop: self.crop,
        }
    }

    /// Network input `[h, w, c]`: the crop size if cropping, else the image.
    pub fn input_shape(&self) -> [usize; 3] {
        let [h, w, c] = self.data.image_shape();
        match self.crop {
            Some(cs) => [cs.height, cs.width, c],
            None => [h, w, c],
        }
    }

    pub fn arch_spec(&self) -> ArchitectureSpec {
        self.arch
            .spec(self.data.num_classes(), self.input_shape(), self.regularized)
    }

    /// Hex SHA-256 of the canonical JSON form. Runtime settings and the data
    /// directory are excluded; the seed is included.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let f: ExperimentFile = toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
        let regularized = f.regularized.unwrap_or(true);
        let mut train = f.train.resolve(f.arch.preset())?;
        if !regularized && f.train.weight_decay.is_none() {
            train.weight_decay = 0.0;
        }
        let cfg = Self {
            arch: f.arch,
            data: f.data,
            train,
            scheme: f.scheme,
            crop: f.crop,
            regularized,
            tta_views: f.tta_views.unwrap_or(10),
            runtime: f.runtime.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?, path)
    }
}

pub fn cell_id(regularized: bool, scheme: SchemeKind) -> String {
    format!("{}-{}", if regularized { "reg" } else { "noreg" }, scheme)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    arch: ArchConfig,
    data: DataConfig,
    #[serde(default)]
    train: TrainTable,
    scheme: SchemeKind,
    crop: Option<CropSpec>,
    regularized: Option<bool>,
    tta_views: Option<usize>,
    runtime: Option<RuntimeConfig>,
}

/// Regularization × scheme cross product, repeated over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub arch: ArchConfig,
    pub data: DataConfig,
    /// Settings for the regularized leg; the other leg zeroes `weight_decay`.
    pub train: TrainConfig,
    pub regularization: Vec<bool>,
    pub schemes: Vec<SchemeKind>,
    pub seeds: Vec<u64>,
    pub crop: Option<CropSpec>,
    pub tta_views: usize,
    pub runtime: RuntimeConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    arch: ArchConfig,
    data: DataConfig,
    #[serde(default)]
    train: TrainTable,
    regularization: Option<Vec<bool>>,
    schemes: Option<Vec<SchemeKind>>,
    seeds: Option<Vec<u64>>,
    crop: Option<CropSpec>,
    tta_views: Option<usize>,
    runtime: Option<RuntimeConfig>,
}

impl ExperimentGrid {
    /// Desk-scale default: All-CNN at width 1/4 on 400 CIFAR-10 images per
    /// class, 40 epochs with the schedule rescaled to 23/29/34, seeds 0–2,
    /// full test set.
    pub fn desk(cifar_dir: impl Into<PathBuf>) -> Self {
        Self {
            arch: ArchConfig::new(ArchName::AllCnnCifar, WidthScale::new(1, 4).expect("1/4 is a valid width")),
            data: DataConfig {
                train_per_class: Some(400),
                ..DataConfig::cifar10(cifar_dir)
            },
            train: TrainConfig::allcnn_cifar().rescaled(40),
            regularization: vec![true, false],
            schemes: SchemeKind::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            crop: None,
            tta_views: 10,
            runtime: RuntimeConfig {
                workers: 2,
                queue_depth: 4,
            },
        }
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let f: GridFile = toml::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
        let train = f.train.resolve(f.arch.preset())?;
        let grid = Self {
            arch: f.arch,
            data: f.data,
            train,
            regularization: f.regularization.unwrap_or_else(|| vec![true, false]),
            schemes: f.schemes.unwrap_or_else(|| SchemeKind::ALL.to_vec()),
            seeds: f.seeds.unwrap_or_else(|| vec![0, 1, 2]),
            crop: f.crop,
            tta_views: f.tta_views.unwrap_or(10),
            runtime: f.runtime.unwrap_or_default(),
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.regularization.is_empty() || self.schemes.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("grid needs ≥ 1 regularization setting, scheme and seed".into()));
        }
        self.runs().iter().try_for_each(ExperimentConfig::validate)
    }

    /// Every run, cell-major in (regularization, scheme) order, then by seed.
    pub fn runs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &reg in &self.regularization {
            for &scheme in &self.schemes {
                for &seed in &self.seeds {
                    let train = TrainConfig {
                        seed,
                        weight_decay: if reg { self.train.weight_decay } else { 0.0 },
                        ..self.train.clone()
                    };
                    out.push(ExperimentConfig {
                        arch: self.arch.clone(),
                        data: self.data.clone(),
                        train,
                        scheme,
                        crop: self.crop,
                        regularized: reg,
                        tta_views: self.tta_views,
                        runtime: self.runtime,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: &str = r#"
seeds = [0, 1]
schemes = ["none", "light"]

[arch]
name = "allcnn-cifar"
width_scale = "1/4"

[data]
source = "synthetic"
classes = 4
train_size = 64
test_size = 16
side = 32

[train]
preset = "allcnn-cifar"
epochs = 40

[runtime]
workers = 3
"#;

    #[test]
    fn grid_file_resolves_preset_and_rescales() {
        let g = ExperimentGrid::from_toml(GRID, Path::new("g.toml")).unwrap();
        assert_eq!(g.train.epochs, 40);
        let at: Vec<usize> = g.train.schedule.iter().map(|m| m.epoch).collect();
        assert_eq!(at, vec![23, 29, 34]);
        assert_eq!(g.runtime.workers, 3);
        assert_eq!(g.runs().len(), 2 * 2 * 2);
    }

    #[test]
    fn off_leg_has_no_decay_or_dropout() {
        let g = ExperimentGrid::from_toml(GRID, Path::new("g.toml")).unwrap();
        for r in g.runs() {
            let spec = r.arch_spec();
            if r.regularized {
                assert_eq!(r.train.weight_decay, 0.001);
                assert!(!spec.dropout.is_none());
            } else {
                assert_eq!(r.train.weight_decay, 0.0);
                assert!(spec.dropout.is_none());
            }
        }
    }

    #[test]
    fn hash_tracks_seed_but_not_runtime() {
        let g = ExperimentGrid::from_toml(GRID, Path::new("g.toml")).unwrap();
        let runs = g.runs();
        assert_ne!(runs[0].hash(), runs[1].hash());
        let mut a = runs[0].clone();
        a.runtime.workers = 9;
        a.data.dir = Some("/elsewhere".into());
        assert_eq!(a.hash(), runs[0].hash());
        assert_eq!(runs[0].hash().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = GRID.replace("seeds", "sedes");
        assert!(ExperimentGrid::from_toml(&bad, Path::new("g.toml")).is_err());
    }

    #[test]
    fn experiment_file_off_defaults_to_zero_decay() {
        let text = r#"
scheme = "light"
regularized = false
[arch]
name = "allcnn-cifar"
width_scale = "1/8"
[data]
source = "synthetic"
[train]
epochs = 5
seed = 3
"#;
        let c = ExperimentConfig::from_toml(text, Path::new("e.toml")).unwrap();
        assert_eq!(c.train.weight_decay, 0.0);
        assert_eq!(c.train.seed, 3);
        assert_eq!(c.cell_id(), "noreg-light");
        let forced = text.replace("[train]", "[train]\nweight_decay = 0.001");
        assert!(ExperimentConfig::from_toml(&forced, Path::new("e.toml")).is_err());
    }

    #[test]
    fn explicit_schedule_wins_over_rescaling() {
        let t = TrainTable {
            epochs: Some(10),
            schedule: Some(vec![Milestone { epoch: 5, factor: 0.5 }]),
            ..Default::default()
        };
        let c = t.resolve("wrn-cifar").unwrap();
        assert_eq!(c.schedule, vec![Milestone { epoch: 5, factor: 0.5 }]);
        assert!(c.nesterov);
    }
}
