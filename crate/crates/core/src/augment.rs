//! Augmentation schemes: parameter sampling, affine warping, photometric
//! adjustment and cropping.
//!
//! Pixel coordinates are `(x, y) = (column, row)` with pixel centers on the
//! integer grid. Affine matrices map input coordinates to output coordinates;
//! warping inverts them and pulls from the input (bilinear, mirrored border).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Half-widths of the uniform ranges, each centered on the identity value.
pub mod ranges {
    /// Translation, as a fraction of the image extent.
    pub const TRANSLATION: f64 = 0.1;
    pub const SCALE: f64 = 0.15;
    /// 22.5 degrees.
    pub const ROTATION: f64 = 22.5 * std::f64::consts::PI / 180.0;
    pub const SHEAR: f64 = 0.15;
    pub const CONTRAST: f64 = 0.5;
    pub const BRIGHTNESS: f64 = 0.25;
}

/// One draw of the nine transformation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Horizontal flip sign, `+1` or `-1`.
    pub flip: f64,
    /// Horizontal translation as a fraction of the width.
    pub tx: f64,
    /// Vertical translation as a fraction of the height.
    pub ty: f64,
    pub zx: f64,
    pub zy: f64,
    /// Rotation, radians.
    pub theta: f64,
    /// Shear, radians.
    pub phi: f64,
    /// Contrast factor.
    pub gamma: f64,
    /// Brightness offset.
    pub delta: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        flip: 1.0,
        tx: 0.0,
        ty: 0.0,
        zx: 1.0,
        zy: 1.0,
        theta: 0.0,
        phi: 0.0,
        gamma: 1.0,
        delta: 0.0,
    };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

// center + radius * (2u - 1): the midpoint u = 0.5 lands exactly on `center`.
fn uniform<R: RngCore + ?Sized>(rng: &mut R, center: f64, radius: f64) -> f64 {
    let u: f64 = rng.gen();
    center + radius * (2.0 * u - 1.0)
}

// 1 - 2 B(0.5), with B = 1 iff u < 0.5.
fn flip_sign<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    if u < 0.5 {
        -1.0
    } else {
        1.0
    }
}

/// Draws every field independently, in declaration order.
pub fn sample_heavier<R: RngCore + ?Sized>(rng: &mut R) -> AugmentParams {
    AugmentParams {
        flip: flip_sign(rng),
        tx: uniform(rng, 0.0, ranges::TRANSLATION),
        ty: uniform(rng, 0.0, ranges::TRANSLATION),
        zx: uniform(rng, 1.0, ranges::SCALE),
        zy: uniform(rng, 1.0, ranges::SCALE),
        theta: uniform(rng, 0.0, ranges::ROTATION),
        phi: uniform(rng, 0.0, ranges::SHEAR),
        gamma: uniform(rng, 1.0, ranges::CONTRAST),
        delta: uniform(rng, 0.0, ranges::BRIGHTNESS),
    }
}

/// Flip and continuous translation only; everything else stays at identity.
pub fn sample_light<R: RngCore + ?Sized>(rng: &mut R) -> AugmentParams {
    AugmentParams {
        flip: flip_sign(rng),
        tx: uniform(rng, 0.0, ranges::TRANSLATION),
        ty: uniform(rng, 0.0, ranges::TRANSLATION),
        ..AugmentParams::IDENTITY
    }
}

/// 3×3 homogeneous transform. The bottom row is always `[0, 0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    m: [[f64; 3]; 3],
}

impl AffineTransform {
    pub const IDENTITY: AffineTransform = AffineTransform {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// From the top two rows; the bottom row is fixed.
    pub fn from_rows(r0: [f64; 3], r1: [f64; 3]) -> Self {
        Self {
            m: [r0, r1, [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self::from_rows([1.0, 0.0, dx], [0.0, 1.0, dy])
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.m
    }

    /// `self · other`: apply `other` first.
    pub fn compose(&self, other: &AffineTransform) -> AffineTransform {
        let (a, b) = (&self.m, &other.m);
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate().take(2) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        out[2] = [0.0, 0.0, 1.0];
        AffineTransform { m: out }
    }

    pub fn determinant(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inverse(&self) -> Result<AffineTransform> {
        let det = self.determinant();
        if !det.is_finite() || det.abs() < 1e-12 {
            return Err(Error::InvalidTransform(format!(
                "linear part is singular (det = {det:e})"
            )));
        }
        let [[a, b, tx], [c, d, ty], _] = self.m;
        let (ia, ib, ic, id) = (d / det, -b / det, -c / det, a / det);
        Ok(AffineTransform::from_rows(
            [ia, ib, -(ia * tx + ib * ty)],
            [ic, id, -(ic * tx + id * ty)],
        ))
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.m[0][0] * x + self.m[0][1] * y + self.m[0][2],
            self.m[1][0] * x + self.m[1][1] * y + self.m[1][2],
        )
    }
}

/// The raw parameter matrix with translations converted to pixels
/// (`tx · width`, `ty · height`), anchored at the coordinate origin.
pub fn raw_affine(p: &AugmentParams, width: usize, height: usize) -> AffineTransform {
    let (s, c) = p.theta.sin_cos();
    let (ss, cs) = (p.theta + p.phi).sin_cos();
    AffineTransform::from_rows(
        [p.flip * p.zx * c, -p.zy * ss, p.tx * width as f64],
        [p.zx * s, p.zy * cs, p.ty * height as f64],
    )
}

/// [`raw_affine`] conjugated so that flip, rotation, scale and shear act about
/// the image center.
pub fn build_affine(p: &AugmentParams, width: usize, height: usize) -> AffineTransform {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    AffineTransform::translation(cx, cy)
        .compose(&raw_affine(p, width, height))
        .compose(&AffineTransform::translation(-cx, -cy))
}

/// Mirror a continuous coordinate into `[0, n - 1]` without repeating the edge
/// sample (`… 2 1 | 0 1 2 … n-1 | n-2 …`).
#[inline]
fn reflect(x: f64, n: usize) -> f64 {
    if n == 1 {
        return 0.0;
    }
    let last = (n - 1) as f64;
    let period = 2.0 * last;
    let mut r = x.rem_euclid(period);
    if r > last {
        r = period - r;
    }
    r
}

// Coordinates this close to the grid are treated as exact so that integer
// shifts and flips copy pixels bit-for-bit.
const GRID_SNAP: f64 = 1e-9;

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < GRID_SNAP {
        r
    } else {
        v
    }
}

/// Inverse-mapped bilinear warp with mirrored borders. Output has the input's
/// shape and stays in `[0, 1]`.
pub fn warp(img: &Image, t: &AffineTransform) -> Result<Image> {
    let inv = t.inverse()?;
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let src = img.data();
    let mut out = Image::zeros(h, w, ch);
    let dst = out.data_mut();
    let mut acc = vec![0.0f64; ch];
    for row in 0..h {
        for col in 0..w {
            let (x, y) = inv.apply(col as f64, row as f64);
            let x = reflect(snap(x), w);
            let y = reflect(snap(y), h);
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            let (x0, y0) = (x0 as usize, y0 as usize);
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let p00 = (y0 * w + x0) * ch;
            let p01 = (y0 * w + x1) * ch;
            let p10 = (y1 * w + x0) * ch;
            let p11 = (y1 * w + x1) * ch;
            for (k, a) in acc.iter_mut().enumerate() {
                let top = src[p00 + k] as f64 + fx * (src[p01 + k] as f64 - src[p00 + k] as f64);
                let bot = src[p10 + k] as f64 + fx * (src[p11 + k] as f64 - src[p10 + k] as f64);
                *a = top + fy * (bot - top);
            }
            let o = (row * w + col) * ch;
            for (k, a) in acc.iter().enumerate() {
                dst[o + k] = a.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Ok(out)
}

/// `x' = γ (x - x̄) + x̄`, with `x̄` the mean over every pixel and channel;
/// clipped to `[0, 1]`.
pub fn adjust_contrast(img: &Image, gamma: f64) -> Image {
    if gamma == 1.0 {
        return img.clone();
    }
    let mean = img.mean();
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (gamma * (*v as f64 - mean) + mean).clamp(0.0, 1.0) as f32;
    }
    out
}

/// `x' = x + δ`, clipped to `[0, 1]`.
pub fn adjust_brightness(img: &Image, delta: f64) -> Image {
    if delta == 0.0 {
        return img.clone();
    }
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (*v as f64 + delta).clamp(0.0, 1.0) as f32;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropMode {
    Random,
    Center,
}

/// Contiguous `height × width` window. Random mode draws the top-left corner
/// uniformly over every valid position; center mode floors the offsets.
pub fn crop<R: RngCore + ?Sized>(
    img: &Image,
    mode: CropMode,
    height: usize,
    width: usize,
    rng: &mut R,
) -> Result<Image> {
    let (sh, sw, ch) = (img.height(), img.width(), img.channels());
    if height == 0 || width == 0 || height > sh || width > sw {
        return Err(Error::InvalidCrop {
            target_h: height,
            target_w: width,
            src_h: sh,
            src_w: sw,
        });
    }
    let (top, left) = match mode {
        CropMode::Center => ((sh - height) / 2, (sw - width) / 2),
        CropMode::Random => (rng.gen_range(0..=sh - height), rng.gen_range(0..=sw - width)),
    };
    let mut data = Vec::with_capacity(height * width * ch);
    for row in top..top + height {
        let start = img.index(row, left, 0);
        data.extend_from_slice(&img.data()[start..start + width * ch]);
    }
    Image::new(height, width, ch, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    None,
    Light,
    Heavier,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::None, SchemeKind::Light, SchemeKind::Heavier];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::None => "none",
            SchemeKind::Light => "light",
            SchemeKind::Heavier => "heavier",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SchemeKind::None),
            "light" => Ok(SchemeKind::Light),
            "heavier" | "heavy" => Ok(SchemeKind::Heavier),
            other => Err(Error::Config(format!("unknown augmentation scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropSpec {
    pub mode: CropMode,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scheme {
    pub kind: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropSpec>,
}

impl Scheme {
    pub fn new(kind: SchemeKind) -> Self {
        Self { kind, crop: None }
    }

    pub fn with_crop(mut self, crop: CropSpec) -> Self {
        self.crop = Some(crop);
        self
    }
}

/// Geometric warp followed by contrast then brightness.
pub fn apply_params(img: &Image, p: &AugmentParams) -> Result<Image> {
    let warped = warp(img, &build_affine(p, img.width(), img.height()))?;
    let contrasted = adjust_contrast(&warped, p.gamma);
    Ok(adjust_brightness(&contrasted, p.delta))
}

/// Runs one scheme end to end. The untrained path (`None`) only ever crops
/// centrally; the augmented paths honour the configured crop mode.
pub fn apply_scheme<R: RngCore + ?Sized>(img: &Image, s: &Scheme, rng: &mut R) -> Result<Image> {
    let out = match s.kind {
        SchemeKind::None => img.clone(),
        SchemeKind::Light => {
            let p = sample_light(rng);
            warp(img, &build_affine(&p, img.width(), img.height()))?
        }
        SchemeKind::Heavier => {
            let p = sample_heavier(rng);
            apply_params(img, &p)?
        }
    };
    match s.crop {
        None => Ok(out),
        Some(c) => {
            let mode = if s.kind == SchemeKind::None {
                CropMode::Center
            } else {
                c.mode
            };
            crop(&out, mode, c.height, c.width, rng)
        }
    }
}
