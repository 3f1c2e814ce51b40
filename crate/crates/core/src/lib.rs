//! Differencing convolutions (central, recurrent inter-convolution and
//! illumination-affinitive intra-convolution), a Retinex enhancement head and
//! a small dual-branch depth-completion network, with the reverse-mode
//! gradients, synthetic data, metrics and training loop needed to exercise
//! them on a desk-sized CPU budget.

pub mod autograd;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod diffconv;
pub mod enhance;
pub mod params;
pub mod error;
pub mod model;
pub mod metrics;
pub mod tensor;
pub mod train;

pub use autograd::Var;
pub use error::{Error, Result};
pub use tensor::{ConvKernel, Shape, Tensor};
