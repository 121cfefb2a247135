//! A small CPU tensor library with reverse-mode autodiff, sized for the
//! segmentation network in [`crate::model`].

pub mod adam;
pub mod autograd;
pub mod conv;
mod gemm;
pub mod norm;
pub mod ops;
pub mod params;
pub mod tensor;

pub use adam::Adam;
pub use autograd::{backward, Gradients, Var};
pub use conv::{conv2d, ConvSpec};
pub use params::{BatchNorm, Conv, Init, Mode, ParamId, ParamStore, Session};
pub use tensor::Tensor;
