//! Minimal tensor and layer library: convolution, batch normalization,
//! activations, dropout, pooling, dense layers, softmax cross-entropy and
//! the two fan-based initializers. Generic over `f32`/`f64`.

pub mod activation;
pub mod batchnorm;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod layer;
pub mod loss;
pub mod param;
pub mod pool;
pub mod real;
pub mod tensor;

pub use activation::{Dropout, Relu};
pub use batchnorm::BatchNorm;
pub use conv::Conv2d;
pub use dense::Dense;
pub use layer::{Layer, ResidualBlock};
pub use loss::{softmax, softmax_cross_entropy};
pub use param::{Mode, Module, Param};
pub use pool::{AvgPool, GlobalAvgPool};
pub use real::Real;
pub use tensor::Tensor;
