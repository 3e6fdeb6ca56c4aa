//! Layer primitives: convolution, pooling, activations.

mod activation;
mod conv;
mod pool;

pub use activation::{activation, activation_backward, Activation, SELU_ALPHA, SELU_SCALE};
pub use conv::{conv2d, conv2d_backward};
pub use pool::{maxpool2, maxpool2_backward, maxpool2_floor, PoolMask};

pub(crate) use activation::{apply_activation, apply_activation_grad};
pub(crate) use conv::{conv_backward_into, conv_forward_into, ConvGeometry};
pub(crate) use pool::{pool_backward_into, pool_forward_into};
