//! Lightweight face embedding network with pose-aware verification tooling.
//!
//! The crate contains a small CPU inference and training engine for a
//! SqueezeNet-derived face embedding network (with optional depthwise
//! separable convolutions and a global depthwise convolution head), plus the
//! full verification pipeline around it: preprocessing, template averaging,
//! χ² matching, same-pose and cross-pose pairing protocols, and DET/EER
//! metrics.

pub mod error;
pub mod io;
pub mod metrics;
pub mod network;
pub mod tensor;
pub mod training;
pub mod verification;

pub use error::{Error, Result, WeightError};
pub use network::{count_params, Embedding, Init, Mode, Network, NetworkConfig, ParamScope, Variant, WeightStore};
pub use tensor::{Scalar, Shape, Tensor};
