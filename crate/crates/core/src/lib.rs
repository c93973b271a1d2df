//! Simulation, reconstruction and evaluation toolkit for video-level
//! spectral compressive imaging.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the 64-bit compute type used throughout the toolkit.

pub mod cube;
pub mod error;
pub mod io;
pub mod metrics;
pub mod optics;
pub mod rgb;
pub mod scalar;
pub mod solver;
pub mod synth;
pub mod tensor;

pub use cube::{CodedMask, MaskKind, MeasurementSequence, SpectralCube};
pub use error::{Error, Result};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;

pub type Cube = SpectralCube<f64>;
pub type Cube32 = SpectralCube<f32>;
pub type Measurement = MeasurementSequence<f64>;
pub type Mask = CodedMask<f64>;
pub type System = optics::SystemConfig<f64>;
pub type Tensor64 = Tensor<f64>;
