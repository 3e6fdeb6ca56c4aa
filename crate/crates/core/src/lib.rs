//! Metric-learning toolkit: a small convolutional network trained from scratch
//! with embedding-shaping losses, plus export and plotting of the 2-D/3-D
//! embedded spaces it learns.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); training, the
//! checkpoint format and the command-line tools use `f64`.

pub mod data;
pub mod error;
pub mod gradcheck;
mod kv;
pub mod losses;
pub mod network;
pub mod ops;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::{l2_normalize, matmul, softmax_rows, Tensor};

/// Double-precision tensor, the type training runs on.
pub type Tensor64 = Tensor<f64>;
/// Single-precision tensor.
pub type Tensor32 = Tensor<f32>;
pub type FeatureExtractor64 = network::FeatureExtractor<f64>;
pub type ClassifierHead64 = network::ClassifierHead<f64>;
pub type Dataset64 = data::Dataset<f64>;
pub type Model64 = train::Model<f64>;
