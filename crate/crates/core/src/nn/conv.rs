//! 2-D convolution over `[batch, height, width, channels]` with "same" zero
//! padding: the output extent is `ceil(input / stride)`.
//!
//! Lowered to GEMMs via im2col, a few images at a time. Patch columns are ordered
//! `(ky, kx, c_in)`, matching the `[D, D, C_in, K]` kernel layout.

use crate::error::{Error, Result};
use crate::nn::{Mode, Module, Param, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

/// "Same" padding; any odd leftover pad goes to the bottom/right.
pub fn same_geometry(h: usize, w: usize, kernel: usize, stride: usize) -> ConvGeometry {
    let out_h = h.div_ceil(stride);
    let out_w = w.div_ceil(stride);
    let pad_h = ((out_h - 1) * stride + kernel).saturating_sub(h);
    let pad_w = ((out_w - 1) * stride + kernel).saturating_sub(w);
    ConvGeometry {
        out_h,
        out_w,
        pad_top: pad_h / 2,
        pad_left: pad_w / 2,
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[kernel, kernel, in_channels, out_channels]`
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        with_bias: bool,
    ) -> Self {
        assert!(in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0);
        let weight = Param::new(
            format!("{name}.weight"),
            Tensor::zeros(&[kernel, kernel, in_channels, out_channels]),
            true,
        );
        let bias = with_bias
            .then(|| Param::new(format!("{name}.bias"), Tensor::zeros(&[out_channels]), false));
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight,
            bias,
            cache: None,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }

    pub fn fan_out(&self) -> usize {
        self.kernel * self.kernel * self.out_channels
    }

    fn lowering(&self, h: usize, w: usize, c: usize, g: ConvGeometry) -> Lowering {
        Lowering {
            h,
            w,
            c,
            kernel: self.kernel,
            stride: self.stride,
            g,
        }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
        let dims = x.dims4()?;
        if dims.3 != self.in_channels {
            return Err(Error::Shape(format!(
                "{}: expected {} input channels, got {}",
                self.weight.name, self.in_channels, dims.3
            )));
        }
        Ok(dims)
    }
}

/// Upper bound on the im2col scratch size, in elements. Batches are lowered
/// a few images at a time so the scratch stays cache- and page-friendly.
const SCRATCH_ELEMS: usize = 1 << 20;

#[derive(Debug, Clone, Copy)]
struct Lowering {
    h: usize,
    w: usize,
    c: usize,
    kernel: usize,
    stride: usize,
    g: ConvGeometry,
}

impl Lowering {
    fn rows_per_image(&self) -> usize {
        self.g.out_h * self.g.out_w
    }

    fn cols(&self) -> usize {
        self.kernel * self.kernel * self.c
    }

    fn images_per_chunk(&self) -> usize {
        (SCRATCH_ELEMS / (self.rows_per_image() * self.cols()).max(1)).max(1)
    }

    /// Visits every in-bounds `(patch row, column offset, pixel offset)`
    /// triple for `n` images starting at the beginning of `x`.
    fn for_each_tap(&self, n: usize, mut f: impl FnMut(usize, usize, usize)) {
        let (h, w, c, kernel, stride, g) = (self.h, self.w, self.c, self.kernel, self.stride, self.g);
        let mut row = 0;
        for b in 0..n {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - g.pad_top as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - g.pad_left as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let px = ((b * h + iy as usize) * w + ix as usize) * c;
                            f(row, (ky * kernel + kx) * c, px);
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    /// Patch matrix of `n` images into `out` (`n · rows_per_image × cols`).
    fn im2col<T: Real>(&self, x: &[T], n: usize, out: &mut [T]) {
        let (cols, c) = (self.cols(), self.c);
        out.iter_mut().for_each(|v| *v = T::zero());
        self.for_each_tap(n, |row, off, px| {
            let dst = row * cols + off;
            out[dst..dst + c].copy_from_slice(&x[px..px + c]);
        });
    }

    /// Scatter-adds a patch-gradient matrix back onto `dx` (zeroed first).
    fn col2im<T: Real>(&self, dcols: &[T], n: usize, dx: &mut [T]) {
        let (cols, c) = (self.cols(), self.c);
        dx.iter_mut().for_each(|v| *v = T::zero());
        self.for_each_tap(n, |row, off, px| {
            let src = row * cols + off;
            for (d, &s) in dx[px..px + c].iter_mut().zip(&dcols[src..src + c]) {
                *d += s;
            }
        });
    }
}

impl<T: Real> Module<T> for Conv2d<T> {
    fn forward(&mut self, x: Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, h, w, c) = self.check_input(&x)?;
        let g = same_geometry(h, w, self.kernel, self.stride);
        let rows = n * g.out_h * g.out_w;
        let k = self.fan_in();
        let mut out = vec![T::zero(); rows * self.out_channels];
        if let Some(bias) = &self.bias {
            for row in out.chunks_exact_mut(self.out_channels) {
                row.copy_from_slice(bias.value.data());
            }
        }
        let beta = if self.bias.is_some() { T::one() } else { T::zero() };
        if self.is_pointwise() {
            T::gemm(rows, k, self.out_channels, T::one(), x.data(), false, self.weight.value.data(), false, beta, &mut out);
        } else {
            let low = self.lowering(h, w, c, g);
            let per = low.images_per_chunk();
            let (rpi, in_len, kout) = (low.rows_per_image(), h * w * c, self.out_channels);
            let mut scratch = vec![T::zero(); per.min(n) * rpi * k];
            for b0 in (0..n).step_by(per) {
                let nb = per.min(n - b0);
                let cols = &mut scratch[..nb * rpi * k];
                low.im2col(&x.data()[b0 * in_len..(b0 + nb) * in_len], nb, cols);
                let dst = &mut out[b0 * rpi * kout..(b0 + nb) * rpi * kout];
                T::gemm(nb * rpi, k, kout, T::one(), cols, false, self.weight.value.data(), false, beta, dst);
            }
        }
        self.cache = Some(x);
        Tensor::new(vec![n, g.out_h, g.out_w, self.out_channels], out)
    }

    fn backward(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::State(format!("{}: backward without forward", self.weight.name)))?;
        let (n, h, w, c) = x.dims4()?;
        let g = same_geometry(h, w, self.kernel, self.stride);
        let expect = [n, g.out_h, g.out_w, self.out_channels];
        if grad_out.shape() != expect {
            return Err(Error::Shape(format!(
                "{}: gradient shape {:?}, expected {expect:?}",
                self.weight.name,
                grad_out.shape()
            )));
        }
        let rows = n * g.out_h * g.out_w;
        let k = self.fan_in();
        let kout = self.out_channels;
        let gd = grad_out.data();

        if let Some(bias) = &mut self.bias {
            let db = bias.grad.data_mut();
            db.iter_mut().for_each(|v| *v = T::zero());
            for row in gd.chunks_exact(kout) {
                for (d, &v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
        }

        let dx = if self.is_pointwise() {
            T::gemm(k, rows, kout, T::one(), x.data(), true, gd, false, T::zero(), self.weight.grad.data_mut());
            let mut dx = vec![T::zero(); rows * k];
            T::gemm(rows, kout, k, T::one(), gd, false, self.weight.value.data(), true, T::zero(), &mut dx);
            dx
        } else {
            let low = self.lowering(h, w, c, g);
            let per = low.images_per_chunk();
            let (rpi, in_len) = (low.rows_per_image(), h * w * c);
            let mut cols = vec![T::zero(); per.min(n) * rpi * k];
            let mut dcols = cols.clone();
            let mut dx = vec![T::zero(); n * in_len];
            for b0 in (0..n).step_by(per) {
                let nb = per.min(n - b0);
                let r = nb * rpi;
                let gchunk = &gd[b0 * rpi * kout..(b0 + nb) * rpi * kout];
                low.im2col(&x.data()[b0 * in_len..(b0 + nb) * in_len], nb, &mut cols[..r * k]);
                let beta = if b0 == 0 { T::zero() } else { T::one() };
                T::gemm(k, r, kout, T::one(), &cols[..r * k], true, gchunk, false, beta, self.weight.grad.data_mut());
                T::gemm(r, kout, k, T::one(), gchunk, false, self.weight.value.data(), true, T::zero(), &mut dcols[..r * k]);
                low.col2im(&dcols[..r * k], nb, &mut dx[b0 * in_len..(b0 + nb) * in_len]);
            }
            dx
        };
        Tensor::new(vec![n, h, w, c], dx)
    }

    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_module, random_tensor};

    /// Direct nested-loop convolution with explicit zero padding.
    fn naive_conv(x: &Tensor<f64>, conv: &Conv2d<f64>) -> Tensor<f64> {
        let (n, h, w, c) = x.dims4().unwrap();
        let (d, s, k) = (conv.kernel, conv.stride, conv.out_channels);
        let oh = (h + s - 1) / s;
        let ow = (w + s - 1) / s;
        let ph = ((oh - 1) * s + d).saturating_sub(h) / 2;
        let pw = ((ow - 1) * s + d).saturating_sub(w) / 2;
        let wt = conv.weight.value.data();
        let mut out = vec![0.0; n * oh * ow * k];
        for b in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for co in 0..k {
                        let mut acc = conv.bias.as_ref().map_or(0.0, |p| p.value.data()[co]);
                        for ky in 0..d {
                            for kx in 0..d {
                                let iy = (oy * s + ky) as i64 - ph as i64;
                                let ix = (ox * s + kx) as i64 - pw as i64;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                    continue;
                                }
                                for ci in 0..c {
                                    let xv = x.data()[((b * h + iy as usize) * w + ix as usize) * c + ci];
                                    acc += xv * wt[((ky * d + kx) * c + ci) * k + co];
                                }
                            }
                        }
                        out[((b * oh + oy) * ow + ox) * k + co] = acc;
                    }
                }
            }
        }
        Tensor::new(vec![n, oh, ow, k], out).unwrap()
    }

    fn randomized(c: usize, k: usize, d: usize, s: usize, bias: bool, seed: u64) -> Conv2d<f64> {
        let mut conv = Conv2d::<f64>::new("c", c, k, d, s, bias);
        conv.weight.value = random_tensor(&[d, d, c, k], seed);
        if let Some(b) = &mut conv.bias {
            b.value = random_tensor(&[k], seed + 1);
        }
        conv
    }

    #[test]
    fn same_padding_extents() {
        assert_eq!(same_geometry(32, 32, 3, 2).out_h, 16);
        assert_eq!(same_geometry(5, 5, 3, 2), ConvGeometry { out_h: 3, out_w: 3, pad_top: 1, pad_left: 1 });
        assert_eq!(same_geometry(6, 6, 3, 2), ConvGeometry { out_h: 3, out_w: 3, pad_top: 0, pad_left: 0 });
        assert_eq!(same_geometry(7, 7, 1, 1).pad_top, 0);
    }

    #[test]
    fn pointwise_identity_kernel_is_identity() {
        let c = 4;
        let mut conv = Conv2d::<f32>::new("c", c, c, 1, 1, false);
        for i in 0..c {
            conv.weight.value.data_mut()[i * c + i] = 1.0;
        }
        let x = random_tensor::<f32>(&[2, 3, 3, c], 5);
        let y = conv.forward(x.clone(), Mode::Train).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_sums_neighbourhood() {
        let mut conv = Conv2d::<f32>::new("c", 1, 1, 3, 1, false);
        conv.weight.value.fill(1.0);
        let x = Tensor::full(&[1, 5, 5, 1], 1.0f32);
        let y = conv.forward(x, Mode::Eval).unwrap();
        for r in 1..4 {
            for c in 1..4 {
                assert_eq!(y.data()[r * 5 + c], 9.0);
            }
        }
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn matches_naive_loops() {
        for (d, s, bias) in [(3, 2, true), (3, 1, false), (1, 1, true), (5, 2, false), (1, 2, true)] {
            let mut conv = randomized(3, 4, d, s, bias, 10 + d as u64);
            let x = random_tensor::<f64>(&[2, 5, 5, 3], 99);
            let want = naive_conv(&x, &conv);
            let got = conv.forward(x, Mode::Train).unwrap();
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-6, "d={d} s={s}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let mut conv = Conv2d::<f32>::new("c", 3, 4, 3, 1, false);
        let err = conv.forward(Tensor::zeros(&[1, 4, 4, 2]), Mode::Train);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut conv = Conv2d::<f32>::new("c", 1, 1, 3, 1, false);
        assert!(matches!(conv.backward(Tensor::zeros(&[1, 2, 2, 1])), Err(Error::State(_))));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut conv = randomized(2, 3, 3, 2, true, 1);
        let y = conv.forward(random_tensor(&[2, 4, 4, 2], 2), Mode::Train).unwrap();
        let dx = conv.backward(Tensor::zeros_like(&y)).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(conv.weight.grad.data().iter().all(|&v| v == 0.0));
        assert!(conv.bias.as_ref().unwrap().grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let mut conv = randomized(2, 3, 3, 1, true, 3);
        let x = random_tensor(&[2, 4, 4, 2], 4);
        let y = conv.forward(x.clone(), Mode::Train).unwrap();
        let g = random_tensor(y.shape(), 5);
        let dx1 = conv.backward(g.clone()).unwrap();
        let dw1 = conv.weight.grad.clone();
        conv.forward(x, Mode::Train).unwrap();
        let mut g2 = g;
        g2.scale(2.0);
        let dx2 = conv.backward(g2).unwrap();
        for (a, b) in dx1.data().iter().zip(dx2.data()) {
            assert!((2.0 * a - b).abs() < 1e-6);
        }
        for (a, b) in dw1.data().iter().zip(conv.weight.grad.data()) {
            assert!((2.0 * a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (d, s, bias) in [(3, 1, true), (3, 2, false), (1, 1, true), (1, 2, false)] {
            let mut conv = randomized(3, 2, d, s, bias, 20 + s as u64);
            let x = random_tensor(&[2, 5, 5, 3], 21);
            let err = check_module(&mut conv, &x, Mode::Train, 1e-6);
            assert!(err <= 1e-4, "d={d} s={s}: rel err {err}");
        }
    }

    #[test]
    fn chunked_lowering_matches_per_image_passes() {
        // 32×32×64 with a 3×3 kernel lowers one image per chunk.
        let mut conv = randomized(64, 3, 3, 1, true, 41);
        let x = random_tensor::<f64>(&[3, 32, 32, 64], 42);
        let gy = random_tensor::<f64>(&[3, 32, 32, 3], 43);
        let y = conv.forward(x.clone(), Mode::Train).unwrap();
        let dx = conv.backward(gy.clone()).unwrap();
        let dw = conv.weight.grad.clone();
        let mut dw_sum = Tensor::zeros_like(&dw);
        let per = 32 * 32 * 64;
        let per_out = 32 * 32 * 3;
        for b in 0..3 {
            let xb = Tensor::new(vec![1, 32, 32, 64], x.data()[b * per..(b + 1) * per].to_vec()).unwrap();
            let gb = Tensor::new(vec![1, 32, 32, 3], gy.data()[b * per_out..(b + 1) * per_out].to_vec()).unwrap();
            let yb = conv.forward(xb, Mode::Train).unwrap();
            assert_eq!(yb.data(), &y.data()[b * per_out..(b + 1) * per_out]);
            let dxb = conv.backward(gb).unwrap();
            assert_eq!(dxb.data(), &dx.data()[b * per..(b + 1) * per]);
            dw_sum.add_assign(&conv.weight.grad).unwrap();
        }
        for (a, b) in dw.data().iter().zip(dw_sum.data()) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
