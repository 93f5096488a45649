//! Streaming, mixed-precision speech enhancement.
//!
//! A dual-path time-frequency network runs chunk by chunk over 16 kHz mono
//! audio with 10 ms algorithmic latency. The numeric core is generic over
//! [`Scalar`] (`f32` or `f64`); the `*F32` aliases at the crate root are the
//! deployment types.

pub mod dsp;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod quant;
pub mod scalar;
pub mod signalgen;
pub mod stream;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type StftF32 = dsp::Stft<f32>;
pub type SpectralFrameF32 = dsp::SpectralFrame<f32>;
pub type FeatureTensorF32 = model::FeatureTensor<f32>;
pub type NetworkF32 = model::Network<f32>;
pub type StreamStateF32 = stream::StreamState<f32>;
pub type StreamEngineF32 = stream::StreamEngine<f32>;
