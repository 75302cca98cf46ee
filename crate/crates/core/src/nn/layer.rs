use crate::error::{Error, Result};
use crate::nn::{
    AvgPool, BatchNorm, Conv2d, Dense, Dropout, GlobalAvgPool, Mode, Module, Param, Real, Relu, Tensor,
};

/// Pre-activation residual block:
/// `BN-ReLU-conv(stride)-BN-ReLU-[dropout]-conv`, added to either the block
/// input or, when the shape changes, a 1×1 projection of the pre-activated
/// input.
#[derive(Debug, Clone)]
pub struct ResidualBlock<T> {
    pub bn1: BatchNorm<T>,
    pub relu1: Relu<T>,
    pub conv1: Conv2d<T>,
    pub bn2: BatchNorm<T>,
    pub relu2: Relu<T>,
    pub dropout: Option<Dropout<T>>,
    pub conv2: Conv2d<T>,
    pub shortcut: Option<Conv2d<T>>,
}

impl<T: Real> Module<T> for ResidualBlock<T> {
    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let a = self.relu1.forward(self.bn1.forward(x.clone(), mode)?, mode)?;
        let skip = match &mut self.shortcut {
            Some(proj) => proj.forward(a.clone(), mode)?,
            None => x,
        };
        let mut r = self.conv1.forward(a, mode)?;
        r = self.relu2.forward(self.bn2.forward(r, mode)?, mode)?;
        if let Some(d) = &mut self.dropout {
            r = d.forward(r, mode)?;
        }
        let mut out = self.conv2.forward(r, mode)?;
        if out.shape() != skip.shape() {
            return Err(Error::Shape(format!(
                "residual addition of {:?} and {:?}",
                out.shape(),
                skip.shape()
            )));
        }
        out.add_assign(&skip)?;
        Ok(out)
    }

    fn backward(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = self.conv2.backward(grad_out.clone())?;
        if let Some(d) = &mut self.dropout {
            g = d.backward(g)?;
        }
        g = self.bn2.backward(self.relu2.backward(g)?)?;
        let mut ga = self.conv1.backward(g)?;
        match &mut self.shortcut {
            Some(proj) => {
                ga.add_assign(&proj.backward(grad_out)?)?;
                self.bn1.backward(self.relu1.backward(ga)?)
            }
            None => {
                let mut gx = self.bn1.backward(self.relu1.backward(ga)?)?;
                gx.add_assign(&grad_out)?;
                Ok(gx)
            }
        }
    }

    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        self.bn1.visit_params(f);
        self.conv1.visit_params(f);
        self.bn2.visit_params(f);
        self.conv2.visit_params(f);
        if let Some(s) = &self.shortcut {
            s.visit_params(f);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.bn1.visit_params_mut(f);
        self.conv1.visit_params_mut(f);
        self.bn2.visit_params_mut(f);
        self.conv2.visit_params_mut(f);
        if let Some(s) = &mut self.shortcut {
            s.visit_params_mut(f);
        }
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Vec<T>)) {
        self.bn1.visit_buffers_mut(f);
        self.bn2.visit_buffers_mut(f);
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Relu(Relu<T>),
    Dropout(Dropout<T>),
    GlobalAvgPool(GlobalAvgPool),
    AvgPool(AvgPool),
    Dense(Dense<T>),
    Residual(Box<ResidualBlock<T>>),
}

macro_rules! dispatch {
    ($self:expr, $l:ident => $e:expr) => {
        match $self {
            Layer::Conv($l) => $e,
            Layer::BatchNorm($l) => $e,
            Layer::Relu($l) => $e,
            Layer::Dropout($l) => $e,
            Layer::GlobalAvgPool($l) => $e,
            Layer::AvgPool($l) => $e,
            Layer::Dense($l) => $e,
            Layer::Residual($l) => $e,
        }
    };
}

impl<T: Real> Module<T> for Layer<T> {
    fn forward(&mut self, x: Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        dispatch!(self, l => l.forward(x, mode))
    }

    fn backward(&mut self, grad_out: Tensor<T>) -> Result<Tensor<T>> {
        dispatch!(self, l => l.backward(grad_out))
    }

    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&'a Param<T>)) {
        dispatch!(self, l => l.visit_params(f))
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        dispatch!(self, l => l.visit_params_mut(f))
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, &mut Vec<T>)) {
        dispatch!(self, l => l.visit_buffers_mut(f))
    }
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::Relu(_) => "relu",
            Layer::Dropout(_) => "dropout",
            Layer::GlobalAvgPool(_) => "global_avg_pool",
            Layer::AvgPool(_) => "spatial_avg_pool",
            Layer::Dense(_) => "fully_connected",
            Layer::Residual(_) => "residual",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::batchnorm::{DEFAULT_EPSILON, DEFAULT_MOMENTUM};
    use crate::nn::gradcheck::{check_module, random_tensor};

    fn block(cin: usize, cout: usize, stride: usize, seed: u64) -> ResidualBlock<f64> {
        let mut conv1 = Conv2d::new("b.conv1", cin, cout, 3, stride, false);
        conv1.weight.value = random_tensor(&[3, 3, cin, cout], seed);
        let mut conv2 = Conv2d::new("b.conv2", cout, cout, 3, 1, false);
        conv2.weight.value = random_tensor(&[3, 3, cout, cout], seed + 1);
        let shortcut = (cin != cout || stride != 1).then(|| {
            let mut s = Conv2d::new("b.proj", cin, cout, 1, stride, false);
            s.weight.value = random_tensor(&[1, 1, cin, cout], seed + 2);
            s
        });
        ResidualBlock {
            bn1: BatchNorm::new("b.bn1", cin, DEFAULT_EPSILON, DEFAULT_MOMENTUM),
            relu1: Relu::new(),
            conv1,
            bn2: BatchNorm::new("b.bn2", cout, DEFAULT_EPSILON, DEFAULT_MOMENTUM),
            relu2: Relu::new(),
            dropout: None,
            conv2,
            shortcut,
        }
    }

    #[test]
    fn identity_block_gradients() {
        let mut b = block(2, 2, 1, 1);
        let x = random_tensor(&[2, 4, 4, 2], 2);
        let err = check_module(&mut b, &x, Mode::Train, 1e-5);
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn projection_block_gradients() {
        let mut b = block(2, 3, 2, 3);
        let x = random_tensor(&[2, 4, 4, 2], 4);
        let y = b.forward(x.clone(), Mode::Train).unwrap();
        assert_eq!(y.shape(), &[2, 2, 2, 3]);
        let err = check_module(&mut b, &x, Mode::Train, 1e-5);
        assert!(err <= 1e-4, "{err}");
    }
}
