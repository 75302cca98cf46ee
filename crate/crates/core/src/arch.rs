//! Architecture descriptions (All-CNN for CIFAR and ImageNet, WRN-n-k) and
//! the networks built from them.
//!
//! An [`ArchitectureSpec`] expands into a flat [`PlanItem`] list. Parameter
//! counting walks that plan without allocating anything; [`build`] turns the
//! same plan into layers.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::batchnorm::{DEFAULT_EPSILON, DEFAULT_MOMENTUM};
use crate::nn::checkpoint::{self, NamedTensor};
use crate::nn::init::{he_normal, xavier_uniform};
use crate::nn::{
    softmax, AvgPool, BatchNorm, Conv2d, Dense, Dropout, GlobalAvgPool, Layer, Mode, Module, Param, Real,
    Relu, ResidualBlock, Tensor,
};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchName {
    #[serde(rename = "allcnn-cifar")]
    AllCnnCifar,
    #[serde(rename = "allcnn-imagenet")]
    AllCnnImagenet,
    #[serde(rename = "wrn")]
    Wrn,
}

impl ArchName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ArchName::AllCnnCifar => "allcnn-cifar",
            ArchName::AllCnnImagenet => "allcnn-imagenet",
            ArchName::Wrn => "wrn",
        }
    }
}

impl FromStr for ArchName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "allcnn-cifar" => Ok(ArchName::AllCnnCifar),
            "allcnn-imagenet" => Ok(ArchName::AllCnnImagenet),
            "wrn" => Ok(ArchName::Wrn),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Positive rational channel multiplier, written `"1"`, `"1/4"`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WidthScale {
    num: u32,
    den: u32,
}

impl WidthScale {
    pub const ONE: WidthScale = WidthScale { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!("width scale {num}/{den} must be positive")));
        }
        let g = gcd(num, den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `channels · scale`, which must come out integral.
    pub fn apply(&self, channels: usize) -> Result<usize> {
        let scaled = channels * self.num as usize;
        if scaled % self.den as usize != 0 {
            return Err(Error::Config(format!(
                "width scale {self} does not give an integral channel count for {channels}"
            )));
        }
        Ok(scaled / self.den as usize)
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl fmt::Display for WidthScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for WidthScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse width scale {s:?}"));
        match s.trim().split_once('/') {
            Some((n, d)) => Self::new(
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => Self::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

impl Serialize for WidthScale {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for WidthScale {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where dropout goes and how much. All zeros means no dropout layers at all.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DropoutPlan {
    /// Applied to the input images (All-CNN).
    pub input: f64,
    /// Applied after every stride-2 convolution block (All-CNN).
    pub after_stride2: f64,
    /// Between the two convolutions of each residual block (WRN).
    pub residual: f64,
}

impl DropoutPlan {
    pub const NONE: DropoutPlan = DropoutPlan {
        input: 0.0,
        after_stride2: 0.0,
        residual: 0.0,
    };

    pub fn is_none(&self) -> bool {
        *self == Self::NONE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub name: ArchName,
    pub num_classes: usize,
    pub width_scale: WidthScale,
    /// `[height, width, channels]`
    pub input: [usize; 3],
    /// WRN blocks per group.
    pub blocks_per_group: usize,
    /// WRN widening factor.
    pub widen: usize,
    pub first_stride: usize,
    pub dropout: DropoutPlan,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

/// Feature convolutions of All-CNN-C as `(channels, kernel, stride)`.
pub const ALLCNN_CIFAR_CONVS: [(usize, usize, usize); 8] = [
    (96, 3, 1),
    (96, 3, 1),
    (96, 3, 2),
    (192, 3, 1),
    (192, 3, 1),
    (192, 3, 2),
    (192, 3, 1),
    (192, 1, 1),
];

/// Feature convolutions of the ImageNet All-CNN. The first stride is taken
/// from [`ArchitectureSpec::first_stride`].
pub const ALLCNN_IMAGENET_CONVS: [(usize, usize, usize); 11] = [
    (96, 11, 2),
    (96, 1, 1),
    (96, 3, 2),
    (256, 5, 1),
    (256, 1, 1),
    (256, 3, 2),
    (384, 3, 1),
    (384, 1, 1),
    (384, 3, 2),
    (1024, 3, 1),
    (1024, 1, 1),
];

pub const ALLCNN_DROPOUT: DropoutPlan = DropoutPlan {
    input: 0.2,
    after_stride2: 0.5,
    residual: 0.0,
};

pub const WRN_DROPOUT: DropoutPlan = DropoutPlan {
    input: 0.0,
    after_stride2: 0.0,
    residual: 0.3,
};

impl ArchitectureSpec {
    pub fn allcnn_cifar(num_classes: usize) -> Self {
        Self {
            name: ArchName::AllCnnCifar,
            num_classes,
            width_scale: WidthScale::ONE,
            input: [32, 32, 3],
            blocks_per_group: 0,
            widen: 0,
            first_stride: 1,
            dropout: DropoutPlan::NONE,
            bn_epsilon: DEFAULT_EPSILON,
            bn_momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn allcnn_imagenet(num_classes: usize) -> Self {
        Self {
            name: ArchName::AllCnnImagenet,
            input: [128, 128, 3],
            first_stride: 2,
            ..Self::allcnn_cifar(num_classes)
        }
    }

    /// WRN-28-10; `imagenet` switches the stem stride to 2 and the input to
    /// 128×128 crops.
    pub fn wrn(num_classes: usize, imagenet: bool) -> Self {
        Self {
            name: ArchName::Wrn,
            input: if imagenet { [128, 128, 3] } else { [32, 32, 3] },
            blocks_per_group: 4,
            widen: 10,
            first_stride: if imagenet { 2 } else { 1 },
            ..Self::allcnn_cifar(num_classes)
        }
    }

    pub fn with_width(mut self, w: WidthScale) -> Self {
        self.width_scale = w;
        self
    }

    pub fn with_input(mut self, input: [usize; 3]) -> Self {
        self.input = input;
        self
    }

    /// Switches between the published dropout placement and none at all.
    pub fn regularized(mut self, on: bool) -> Self {
        self.dropout = match (on, self.name) {
            (false, _) => DropoutPlan::NONE,
            (true, ArchName::Wrn) => WRN_DROPOUT,
            (true, _) => ALLCNN_DROPOUT,
        };
        self
    }

    /// Expands the spec into its layer plan.
    pub fn plan(&self) -> Result<Vec<PlanItem>> {
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        for r in [self.dropout.input, self.dropout.after_stride2, self.dropout.residual] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("dropout rate {r} outside [0, 1)")));
            }
        }
        let ws = self.width_scale;
        let mut plan = Vec::new();
        match self.name {
            ArchName::AllCnnCifar | ArchName::AllCnnImagenet => {
                let table: &[(usize, usize, usize)] = if self.name == ArchName::AllCnnCifar {
                    &ALLCNN_CIFAR_CONVS
                } else {
                    &ALLCNN_IMAGENET_CONVS
                };
                if self.dropout.input > 0.0 {
                    plan.push(PlanItem::Dropout(self.dropout.input));
                }
                for (i, &(k, d, s)) in table.iter().enumerate() {
                    let stride = if i == 0 { self.first_stride } else { s };
                    plan.push(PlanItem::Conv {
                        out: ws.apply(k)?,
                        kernel: d,
                        stride,
                        bias: false,
                    });
                    plan.push(PlanItem::BatchNorm);
                    plan.push(PlanItem::Relu);
                    if stride == 2 && self.dropout.after_stride2 > 0.0 {
                        plan.push(PlanItem::Dropout(self.dropout.after_stride2));
                    }
                }
                plan.push(PlanItem::Conv {
                    out: self.num_classes,
                    kernel: 1,
                    stride: 1,
                    bias: true,
                });
                plan.push(PlanItem::GlobalAvgPool);
            }
            ArchName::Wrn => {
                if self.blocks_per_group == 0 || self.widen == 0 {
                    return Err(Error::Config("WRN needs blocks_per_group and widen ≥ 1".into()));
                }
                plan.push(PlanItem::Conv {
                    out: ws.apply(16)?,
                    kernel: 3,
                    stride: self.first_stride,
                    bias: false,
                });
                for (group, base) in [16, 32, 64].into_iter().enumerate() {
                    let out = ws.apply(base * self.widen)?;
                    for b in 0..self.blocks_per_group {
                        let stride = if b == 0 && group > 0 { 2 } else { 1 };
                        plan.push(PlanItem::Residual {
                            out,
                            stride,
                            dropout: self.dropout.residual,
                        });
                    }
                }
                plan.push(PlanItem::BatchNorm);
                plan.push(PlanItem::Relu);
                plan.push(PlanItem::AvgPool(8));
                plan.push(PlanItem::Dense(self.num_classes));
            }
        }
        Ok(plan)
    }

    fn tag(&self) -> String {
        format!("__arch__:{}", serde_json::to_string(self).expect("spec serializes"))
    }
}

/// One step of an expanded architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlanItem {
    Conv {
        out: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
    },
    BatchNorm,
    Relu,
    Dropout(f64),
    GlobalAvgPool,
    AvgPool(usize),
    Dense(usize),
    Residual {
        out: usize,
        stride: usize,
        dropout: f64,
    },
}

/// `D·D·C_in·K` kernel entries plus `K` biases when present.
pub fn conv_params(c_in: usize, k: usize, kernel: usize, bias: bool) -> usize {
    kernel * kernel * c_in * k + if bias { k } else { 0 }
}

/// Trainable parameter count from layer arithmetic alone. Batch-norm running
/// statistics are not trainable and are not counted.
pub fn count_params(spec: &ArchitectureSpec) -> Result<usize> {
    let conv = conv_params;
    let mut channels = spec.input[2];
    let mut spatial = (spec.input[0], spec.input[1]);
    let mut total = 0;
    for item in spec.plan()? {
        match item {
            PlanItem::Conv {
                out,
                kernel,
                stride,
                bias,
            } => {
                total += conv(channels, out, kernel, bias);
                channels = out;
                spatial = (spatial.0.div_ceil(stride), spatial.1.div_ceil(stride));
            }
            PlanItem::BatchNorm => total += 2 * channels,
            PlanItem::Relu | PlanItem::Dropout(_) => {}
            PlanItem::GlobalAvgPool => spatial = (1, 1),
            PlanItem::AvgPool(s) => spatial = (spatial.0 / s, spatial.1 / s),
            PlanItem::Dense(out) => {
                let inputs = channels * spatial.0 * spatial.1;
                total += inputs * out + out;
                channels = out;
                spatial = (1, 1);
            }
            PlanItem::Residual { out, stride, .. } => {
                total += 2 * channels + conv(channels, out, 3, false) + 2 * out + conv(out, out, 3, false);
                if channels != out || stride != 1 {
                    total += conv(channels, out, 1, false);
                }
                channels = out;
                spatial = (spatial.0.div_ceil(stride), spatial.1.div_ceil(stride));
            }
        }
    }
    Ok(total)
}

/// Number of weight layers: every convolution (including 1×1 projection
/// shortcuts) plus dense layers.
pub fn count_weight_layers(spec: &ArchitectureSpec) -> Result<(usize, usize)> {
    let mut convs = 0;
    let mut dense = 0;
    let mut channels = spec.input[2];
    for item in spec.plan()? {
        match item {
            PlanItem::Conv { out, .. } => {
                convs += 1;
                channels = out;
            }
            PlanItem::Residual { out, stride, .. } => {
                convs += 2 + usize::from(channels != out || stride != 1);
                channels = out;
            }
            PlanItem::Dense(_) => dense += 1,
            _ => {}
        }
    }
    Ok((convs, dense))
}

/// Instantiated network: ordered layers plus the spec they came from.
#[derive(Debug, Clone)]
pub struct Network<T> {
    pub spec: ArchitectureSpec,
    pub layers: Vec<Layer<T>>,
}

#[derive(Clone, Copy)]
enum Init {
    Xavier,
    He,
}

fn init_conv<T: Real>(conv: &mut Conv2d<T>, init: Init, seed: u64, index: u64) {
    let mut r = rng::keyed(seed, Domain::Init, index, 0);
    let shape = conv.weight.value.shape().to_vec();
    conv.weight.value = match init {
        Init::Xavier => xavier_uniform(&shape, conv.fan_in(), conv.fan_out(), &mut r),
        Init::He => he_normal(&shape, conv.fan_in(), &mut r),
    };
}

/// Builds the network described by `spec`. All-CNN kernels use Xavier
/// uniform, WRN kernels He normal; biases start at zero. `seed` fixes both
/// the initial weights and the dropout streams.
pub fn build<T: Real>(spec: &ArchitectureSpec, seed: u64) -> Result<Network<T>> {
    let init = match spec.name {
        ArchName::Wrn => Init::He,
        _ => Init::Xavier,
    };
    let eps = spec.bn_epsilon;
    let mom = spec.bn_momentum;
    let mut layers = Vec::new();
    let mut channels = spec.input[2];
    let mut spatial = (spec.input[0], spec.input[1]);
    let mut n_conv = 0u64;
    let mut n_drop = 0u64;
    let mut n_bn = 0usize;
    let mut n_block = 0usize;
    for item in spec.plan()? {
        match item {
            PlanItem::Conv {
                out,
                kernel,
                stride,
                bias,
            } => {
                let mut c = Conv2d::new(&format!("conv{n_conv}"), channels, out, kernel, stride, bias);
                init_conv(&mut c, init, seed, n_conv);
                n_conv += 1;
                layers.push(Layer::Conv(c));
                channels = out;
                spatial = (spatial.0.div_ceil(stride), spatial.1.div_ceil(stride));
            }
            PlanItem::BatchNorm => {
                layers.push(Layer::BatchNorm(BatchNorm::new(&format!("bn{n_bn}"), channels, eps, mom)));
                n_bn += 1;
            }
            PlanItem::Relu => layers.push(Layer::Relu(Relu::new())),
            PlanItem::Dropout(rate) => {
                layers.push(Layer::Dropout(Dropout::new(rate, seed, n_drop)?));
                n_drop += 1;
            }
            PlanItem::GlobalAvgPool => {
                layers.push(Layer::GlobalAvgPool(GlobalAvgPool::new()));
                spatial = (1, 1);
            }
            PlanItem::AvgPool(s) => {
                layers.push(Layer::AvgPool(AvgPool::new(s)));
                spatial = (spatial.0 / s, spatial.1 / s);
            }
            PlanItem::Dense(out) => {
                let inputs = channels * spatial.0 * spatial.1;
                let mut d = Dense::new("fc", inputs, out);
                let mut r = rng::keyed(seed, Domain::Init, n_conv, 1);
                d.weight.value = match init {
                    Init::He => he_normal(&[inputs, out], inputs, &mut r),
                    Init::Xavier => xavier_uniform(&[inputs, out], inputs, out, &mut r),
                };
                layers.push(Layer::Dense(d));
                channels = out;
                spatial = (1, 1);
            }
            PlanItem::Residual { out, stride, dropout } => {
                let name = format!("block{n_block}");
                let mut conv1 = Conv2d::new(&format!("{name}.conv1"), channels, out, 3, stride, false);
                init_conv(&mut conv1, init, seed, n_conv);
                let mut conv2 = Conv2d::new(&format!("{name}.conv2"), out, out, 3, 1, false);
                init_conv(&mut conv2, init, seed, n_conv + 1);
                n_conv += 2;
                let shortcut = if channels != out || stride != 1 {
                    let mut s = Conv2d::new(&format!("{name}.shortcut"), channels, out, 1, stride, false);
                    init_conv(&mut s, init, seed, n_conv);
                    n_conv += 1;
                    Some(s)
                } else {
                    None
                };
                let dropout = if dropout > 0.0 {
                    let d = Dropout::new(dropout, seed, n_drop)?;
                    n_drop += 1;
                    Some(d)
                } else {
                    None
                };
                layers.push(Layer::Residual(Box::new(ResidualBlock {
                    bn1: BatchNorm::new(&format!("{name}.bn1"), channels, eps, mom),
                    relu1: Relu::new(),
                    conv1,
                    bn2: BatchNorm::new(&format!("{name}.bn2"), out, eps, mom),
                    relu2: Relu::new(),
                    dropout,
                    conv2,
                    shortcut,
                })));
                n_block += 1;
                channels = out;
                spatial = (spatial.0.div_ceil(stride), spatial.1.div_ceil(stride));
            }
        }
    }
    Ok(Network {
        spec: spec.clone(),
        layers,
    })
}

/// All-CNN for the CIFAR or ImageNet layout.
pub fn build_allcnn<T: Real>(
    imagenet: bool,
    num_classes: usize,
    width: WidthScale,
    regularized: bool,
    seed: u64,
) -> Result<Network<T>> {
    let spec = if imagenet {
        ArchitectureSpec::allcnn_imagenet(num_classes)
    } else {
        ArchitectureSpec::allcnn_cifar(num_classes)
    };
    build(&spec.with_width(width).regularized(regularized), seed)
}

pub fn build_wrn<T: Real>(
    num_classes: usize,
    width: WidthScale,
    imagenet: bool,
    regularized: bool,
    seed: u64,
) -> Result<Network<T>> {
    build(
        &ArchitectureSpec::wrn(num_classes, imagenet)
            .with_width(width)
            .regularized(regularized),
        seed,
    )
}

impl<T: Real> Network<T> {
    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, h, w, c) = x.dims4()?;
        if [h, w, c] != self.spec.input {
            return Err(Error::Shape(format!(
                "network expects inputs of {:?}, got {:?}",
                self.spec.input,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Logits, `[batch, num_classes]`.
    pub fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        self.check_input(&x)?;
        let mut h = x;
        for layer in &mut self.layers {
            h = layer.forward(h, mode)?;
        }
        Ok(h)
    }

    /// Class posteriors in evaluation mode.
    pub fn predict(&mut self, x: Tensor<T>) -> Result<Tensor<T>> {
        let logits = self.forward(x, Mode::Eval)?;
        softmax(&logits)
    }

    /// Back-propagates `grad_logits`, leaving one gradient in every
    /// parameter's `grad` field. Returns the input gradient.
    pub fn backward(&mut self, grad_logits: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_logits;
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(g)?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        for l in &self.layers {
            l.visit_params(&mut |p| out.push(p));
        }
        out
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for l in &mut self.layers {
            l.visit_params_mut(f);
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Squared L2 norm of every convolution kernel.
    pub fn conv_kernel_sq_norm(&self) -> f64 {
        self.params()
            .iter()
            .filter(|p| p.decay && p.value.shape().len() == 4)
            .map(|p| p.value.sum_squares().to_f64().unwrap())
            .sum()
    }

    /// Total number of dropout masks drawn so far.
    pub fn dropout_mask_draws(&self) -> u64 {
        let mut n = 0;
        for l in &self.layers {
            match l {
                Layer::Dropout(d) => n += d.mask_draws,
                Layer::Residual(b) => n += b.dropout.as_ref().map_or(0, |d| d.mask_draws),
                _ => {}
            }
        }
        n
    }

    pub fn dropout_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| match l {
                Layer::Dropout(_) => true,
                Layer::Residual(b) => b.dropout.is_some(),
                _ => false,
            })
            .count()
    }

    /// Restarts every dropout stream from `seed`.
    pub fn reseed_dropout(&mut self, seed: u64) {
        let mut i = 0;
        for l in &mut self.layers {
            let d = match l {
                Layer::Dropout(d) => Some(d),
                Layer::Residual(b) => b.dropout.as_mut(),
                _ => None,
            };
            if let Some(d) = d {
                d.reseed(seed, i);
                i += 1;
            }
        }
    }

    /// Parameters and batch-norm statistics as `f32` tensors, preceded by an
    /// architecture tag.
    pub fn to_named_tensors(&mut self) -> Vec<NamedTensor> {
        let mut out = vec![NamedTensor {
            name: self.spec.tag(),
            shape: vec![0],
            values: vec![],
        }];
        for l in &mut self.layers {
            l.visit_params_mut(&mut |p| {
                out.push(NamedTensor {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    values: T::to_f32_vec(p.value.data()),
                })
            });
            l.visit_buffers_mut(&mut |name, v| {
                out.push(NamedTensor {
                    name: name.to_string(),
                    shape: vec![v.len()],
                    values: T::to_f32_vec(v),
                })
            });
        }
        out
    }

    fn load_named_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        let lookup = |name: &str, shape: &[usize]| -> Result<Vec<T>> {
            let t = tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            Ok(T::from_f32_slice(&t.values))
        };
        let mut err = None;
        for l in &mut self.layers {
            l.visit_params_mut(&mut |p| match lookup(&p.name, p.value.shape()) {
                Ok(v) => p.value.data_mut().copy_from_slice(&v),
                Err(e) => err = err.take().or(Some(e)),
            });
            l.visit_buffers_mut(&mut |name, buf| match lookup(name, &[buf.len()]) {
                Ok(v) => *buf = v,
                Err(e) => err = err.take().or(Some(e)),
            });
        }
        err.map_or(Ok(()), Err)
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let tensors = self.to_named_tensors();
        checkpoint::write_tensors(BufWriter::new(File::create(path)?), &tensors)
    }

    /// Rebuilds a network from a checkpoint written by [`Network::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let tensors = checkpoint::read_tensors(BufReader::new(File::open(path)?))?;
        let spec_json = tensors
            .first()
            .and_then(|t| t.name.strip_prefix("__arch__:"))
            .ok_or_else(|| Error::Checkpoint("missing architecture tag".into()))?;
        let spec: ArchitectureSpec = serde_json::from_str(spec_json)?;
        let mut net = build(&spec, 0)?;
        net.load_named_tensors(&tensors)?;
        Ok(net)
    }
}
