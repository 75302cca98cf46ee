//! Image augmentation engine, compact convolutional-network training core and
//! an ablation harness comparing weight decay + dropout against data
//! augmentation.

pub mod arch;
pub mod augment;
pub mod data;
pub mod error;
pub mod harness;
pub mod image;
pub mod nn;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};
