//! Layers with hand-written backward passes.
//!
//! Every layer exposes a forward pass plus a backward pass that consumes the
//! upstream gradient and returns the gradient with respect to its input,
//! accumulating parameter gradients into [`Param::grad`] when asked to.

mod activation;
mod conv;
mod fca;
mod param;
mod resample;

pub use activation::{leaky_relu, leaky_relu_backward, relu, relu_backward};
pub use conv::Conv2d;
pub use fca::{sigmoid, Fca, FcaCache};
pub use param::{Module, Param};
pub use resample::{
    bilinear_resize, bilinear_resize_backward, blur_pool_down, blur_pool_down_backward,
};
