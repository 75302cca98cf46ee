use crate::error::Result;
use crate::nn::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor together with its gradient from the last backward pass.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    /// Whether weight decay applies (kernels and dense weights only).
    pub decay: bool,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>, decay: bool) -> Self {
        let grad = Tensor::zeros_like(&value);
        Self {
            name: name.into(),
            value,
            grad,
            decay,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Non-trainable state that still belongs in a checkpoint.
#[derive(Debug, Clone)]
pub struct Buffer<'a, T> {
    pub name: String,
    pub values: &'a [T],
}

/// Forward/backward contract shared by every layer.
///
/// `forward` caches whatever `backward` needs; `backward` overwrites the
/// parameter gradients and returns the gradient with respect to the input.
pub trait Module<T: Real> {
    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>>;

    fn backward(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>>;

    fn visit_params<'a>(&'a self, _f: &mut dyn FnMut(&'a Param<T>)) {}

    fn visit_params_mut(&mut self, _f: &mut dyn FnMut(&mut Param<T>)) {}

    /// Named non-trainable buffers, mutable, for checkpoint restore.
    fn visit_buffers_mut(&mut self, _f: &mut dyn FnMut(&str, &mut Vec<T>)) {}
}
