use crate::quant::QuantSpec;
use crate::scalar::{round_half_even, Scalar};

/// Backward factors of fake quantization for one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerGrads<T> {
    /// Straight-through gradient: 1 inside the clamp range, 0 outside.
    pub input: T,
    /// Step-size gradient, already multiplied by the gradient normalizer.
    pub scale: T,
}

/// Step-size gradient normalizer `1 / sqrt(numel * qmax)`.
pub fn lsq_grad_scale(numel: usize, qmax: i32) -> f64 {
    1.0 / ((numel as f64) * f64::from(qmax.max(1))).sqrt()
}

/// Gradients of `S * (clamp(round(r/S) + Z) - Z)` with respect to `r` and `S`
/// under the straight-through rounding rule.
///
/// `numel` is the size of the tensor that shares this step size.
pub fn quantizer_grads<T: Scalar>(r: T, scale: T, spec: &QuantSpec, numel: usize) -> QuantizerGrads<T> {
    let v = r / scale;
    let q = round_half_even(v) + T::lit(f64::from(spec.zero_point));
    let g = T::lit(lsq_grad_scale(numel, spec.qmax));
    let zp = spec.zero_point;
    if q < T::lit(f64::from(spec.qmin)) {
        QuantizerGrads {
            input: T::zero(),
            scale: T::lit(f64::from(spec.qmin - zp)) * g,
        }
    } else if q > T::lit(f64::from(spec.qmax)) {
        QuantizerGrads {
            input: T::zero(),
            scale: T::lit(f64::from(spec.qmax - zp)) * g,
        }
    } else {
        QuantizerGrads {
            input: T::one(),
            scale: (round_half_even(v) - v) * g,
        }
    }
}
