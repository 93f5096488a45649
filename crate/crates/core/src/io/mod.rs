//! Audio files, the weight container and the engine configuration.

mod config;
mod container;
mod wav;

pub use config::{BenchOptions, EngineConfig, MetricOptions, ENGINE_CONFIG_SCHEMA};
pub use container::{Container, MAGIC, VERSION};
pub use wav::{read_wav, write_wav, WavClip, WavSink, WavSource};
