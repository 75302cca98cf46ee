use crate::error::{Error, Result};
use crate::nn::{Mode, Module, Param, Real, Tensor};

/// Affine map `y = x W + b`; any trailing axes of the input are flattened.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[inputs, outputs]`
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(name: &str, inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: Param::new(format!("{name}.weight"), Tensor::zeros(&[inputs, outputs]), true),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[outputs]), false),
            cache: None,
        }
    }
}

impl<T: Real> Module<T> for Dense<T> {
    fn forward(&mut self, x: Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let n = *x.shape().first().unwrap_or(&0);
        if n == 0 || x.len() != n * self.inputs {
            return Err(Error::Shape(format!(
                "dense: expected {} features per example, got shape {:?}",
                self.inputs,
                x.shape()
            )));
        }
        let x = x.reshape(vec![n, self.inputs])?;
        let mut out = Vec::with_capacity(n * self.outputs);
        for _ in 0..n {
            out.extend_from_slice(self.bias.value.data());
        }
        T::gemm(n, self.inputs, self.outputs, T::one(), x.data(), false, self.weight.value.data(), false, T::one(), &mut out);
        self.cache = Some(x);
        Tensor::new(vec![n, self.outputs], out)
    }

    fn backward(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::State("dense: backward without forward".into()))?;
        let n = x.shape()[0];
        if grad_out.shape() != [n, self.outputs] {
            return Err(Error::Shape("dense: gradient shape mismatch".into()));
        }
        let g = grad_out.data();
        T::gemm(self.inputs, n, self.outputs, T::one(), x.data(), true, g, false, T::zero(), self.weight.grad.data_mut());
        let db = self.bias.grad.data_mut();
        db.iter_mut().for_each(|v| *v = T::zero());
        for row in g.chunks_exact(self.outputs) {
            for (d, &v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        let mut dx = vec![T::zero(); n * self.inputs];
        T::gemm(n, self.outputs, self.inputs, T::one(), g, false, self.weight.value.data(), true, T::zero(), &mut dx);
        Tensor::new(vec![n, self.inputs], dx)
    }

    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}
