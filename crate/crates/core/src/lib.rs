//! Key-shot video summarization with an encoder-decoder transformer whose
//! encoder uses local-global sparse attention.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for the common cases. Gradient checks run in
//! `f64`, training and inference in `f32`.

pub mod attention;
pub mod data_io;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod segmentation;
pub mod selection;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix32 = numerics::Matrix<f32>;
pub type Matrix64 = numerics::Matrix<f64>;
pub type ParameterStore32 = numerics::ParameterStore<f32>;
pub type ParameterStore64 = numerics::ParameterStore<f64>;
pub type Tape32 = numerics::Tape<f32>;
pub type Tape64 = numerics::Tape<f64>;
