//! Dual-path time-frequency network: weights, layers and the offline pass.

mod config;
mod layers;
mod network;
mod tensor;
mod weights;

pub use config::{Activation, ModelConfig};
pub use layers::{Dense, GruCell, LstmCell, NoProbe, Probe, Side};
pub use network::{Block, Network};
pub use tensor::FeatureTensor;
pub use weights::{random_init, DType, Tensor, TensorData, WeightStore};
