use crate::error::{Error, Result};
use crate::nn::{Mode, Module, Real, Tensor};

/// `[N, H, W, C] -> [N, C]`, the mean of each feature map.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    dims: Option<(usize, usize, usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<T: Real> Module<T> for GlobalAvgPool {
    fn forward(&mut self, x: Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, h, w, c) = x.dims4()?;
        let area = T::from_usize_lossy(h * w);
        let mut out = vec![T::zero(); n * c];
        for (b, img) in x.data().chunks_exact(h * w * c).enumerate() {
            let acc = &mut out[b * c..(b + 1) * c];
            for px in img.chunks_exact(c) {
                for (a, &v) in acc.iter_mut().zip(px) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= area);
        }
        self.dims = Some((n, h, w, c));
        Tensor::new(vec![n, c], out)
    }

    fn backward(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let (n, h, w, c) = self
            .dims
            .take()
            .ok_or_else(|| Error::State("global pool: backward without forward".into()))?;
        if grad_out.shape() != [n, c] {
            return Err(Error::Shape("global pool: gradient shape mismatch".into()));
        }
        let area = T::from_usize_lossy(h * w);
        let mut dx = Vec::with_capacity(n * h * w * c);
        for g in grad_out.data().chunks_exact(c) {
            for _ in 0..h * w {
                dx.extend(g.iter().map(|&v| v / area));
            }
        }
        Tensor::new(vec![n, h, w, c], dx)
    }
}

/// Non-overlapping `size × size` average pooling. Extents must divide evenly.
#[derive(Debug, Clone)]
pub struct AvgPool {
    pub size: usize,
    dims: Option<(usize, usize, usize, usize)>,
}

impl AvgPool {
    pub fn new(size: usize) -> Self {
        assert!(size > 0);
        Self { size, dims: None }
    }
}

impl<T: Real> Module<T> for AvgPool {
    fn forward(&mut self, x: Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let (n, h, w, c) = x.dims4()?;
        let s = self.size;
        if h % s != 0 || w % s != 0 {
            return Err(Error::Shape(format!(
                "average pool of size {s} does not divide {h}x{w}"
            )));
        }
        let (oh, ow) = (h / s, w / s);
        let area = T::from_usize_lossy(s * s);
        let mut out = vec![T::zero(); n * oh * ow * c];
        let xd = x.data();
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let src = ((b * h + y) * w + xx) * c;
                    let dst = ((b * oh + y / s) * ow + xx / s) * c;
                    for k in 0..c {
                        out[dst + k] += xd[src + k];
                    }
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= area);
        self.dims = Some((n, h, w, c));
        Tensor::new(vec![n, oh, ow, c], out)
    }

    fn backward(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let (n, h, w, c) = self
            .dims
            .take()
            .ok_or_else(|| Error::State("average pool: backward without forward".into()))?;
        let s = self.size;
        let (oh, ow) = (h / s, w / s);
        if grad_out.shape() != [n, oh, ow, c] {
            return Err(Error::Shape("average pool: gradient shape mismatch".into()));
        }
        let area = T::from_usize_lossy(s * s);
        let gd = grad_out.data();
        let mut dx = vec![T::zero(); n * h * w * c];
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let dst = ((b * h + y) * w + xx) * c;
                    let src = ((b * oh + y / s) * ow + xx / s) * c;
                    for k in 0..c {
                        dx[dst + k] = gd[src + k] / area;
                    }
                }
            }
        }
        Tensor::new(vec![n, h, w, c], dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_module, random_tensor};

    #[test]
    fn constant_map_averages_to_constant() {
        let mut p = GlobalAvgPool::new();
        let y = p.forward(Tensor::full(&[2, 3, 3, 4], 0.75f32), Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[2, 4]);
        assert!(y.data().iter().all(|&v| (v - 0.75).abs() < 1e-7));
    }

    #[test]
    fn full_window_pool_equals_global() {
        let x = random_tensor::<f64>(&[2, 8, 8, 3], 1);
        let g = GlobalAvgPool::new().forward(x.clone(), Mode::Eval).unwrap();
        let s = AvgPool::new(8).forward(x, Mode::Eval).unwrap();
        assert_eq!(s.shape(), &[2, 1, 1, 3]);
        for (a, b) in g.data().iter().zip(s.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn indivisible_extent_is_rejected() {
        let err = Module::<f32>::forward(&mut AvgPool::new(3), Tensor::zeros(&[1, 4, 4, 1]), Mode::Eval);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = random_tensor(&[2, 4, 4, 3], 2);
        assert!(check_module(&mut GlobalAvgPool::new(), &x, Mode::Train, 1e-6) <= 1e-4);
        assert!(check_module(&mut AvgPool::new(2), &x, Mode::Train, 1e-6) <= 1e-4);
    }
}
