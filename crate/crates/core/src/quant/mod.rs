//! Uniform quantization, calibration and mixed-precision execution support.

mod bf16;
mod calibrate;
mod grads;
pub mod kernels;
mod observer;
mod ops;
mod plan;
mod recurrent;
mod spec;

pub use bf16::{bf16_bits, bf16_round, bf16_round_slice, bf16_to_f32};
pub use calibrate::{calibrate, ActivationSpecs, Calibration, CalibrationRow};
pub use grads::{lsq_grad_scale, quantizer_grads, QuantizerGrads};
pub use kernels::{q_conv1d, q_deconv1d, q_matmul, quantize_bias};
pub use observer::{min_max, ObserverState, DEFAULT_MOMENTUM};
pub use ops::{dequantize, fake_quant, fake_quant_value, quantize, quantize_value, QuantizedTensor};
pub use plan::{Precision, PrecisionMode, PrecisionPlan};
pub use recurrent::{q_gru_step, q_lstm_step};
pub use spec::{scale_asym, scale_sym, signed_range, QuantSpec, Scheme};
