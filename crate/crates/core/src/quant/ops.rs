use crate::error::{Error, Result};
use crate::quant::{QuantSpec, Scheme};
use crate::scalar::{round_half_even, Scalar};

/// Integer payload plus the spec that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub data: Vec<i8>,
    pub shape: Vec<usize>,
    pub spec: QuantSpec,
}

impl QuantizedTensor {
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Elements per channel along axis 0.
    pub fn inner(&self) -> usize {
        match self.spec.scheme {
            Scheme::PerTensorAffine => self.data.len().max(1),
            Scheme::PerChannelSymmetric => self.data.len() / self.spec.scales.len().max(1),
        }
    }
}

/// `clamp(round(r / S) + Z)` for a single value.
#[inline]
pub fn quantize_value(r: f64, scale: f64, spec: &QuantSpec) -> i32 {
    let q = round_half_even(r / scale) + f64::from(spec.zero_point);
    q.clamp(f64::from(spec.qmin), f64::from(spec.qmax)) as i32
}

/// Quantize `values` (shape `shape`, channel axis 0 for per-channel specs).
pub fn quantize<T: Scalar>(values: &[T], shape: &[usize], spec: &QuantSpec) -> Result<QuantizedTensor> {
    spec.validate()?;
    let numel: usize = shape.iter().product();
    if numel != values.len() {
        return Err(Error::shape(format!(
            "{} values for shape {shape:?}",
            values.len()
        )));
    }
    let inner = match spec.scheme {
        Scheme::PerTensorAffine => numel.max(1),
        Scheme::PerChannelSymmetric => {
            let channels = shape.first().copied().unwrap_or(1);
            if channels != spec.scales.len() {
                return Err(Error::shape(format!(
                    "{} channel scales for leading dimension {channels}",
                    spec.scales.len()
                )));
            }
            numel / channels.max(1)
        }
    };
    let data = values
        .iter()
        .enumerate()
        .map(|(i, v)| quantize_value(v.as_f64(), spec.scale_at(i, inner), spec) as i8)
        .collect();
    Ok(QuantizedTensor {
        data,
        shape: shape.to_vec(),
        spec: spec.clone(),
    })
}

/// `S (q - Z)`.
pub fn dequantize<T: Scalar>(q: &QuantizedTensor) -> Vec<T> {
    let inner = q.inner();
    let zp = f64::from(q.spec.zero_point);
    q.data
        .iter()
        .enumerate()
        .map(|(i, &v)| T::lit(q.spec.scale_at(i, inner) * (f64::from(v) - zp)))
        .collect()
}

/// Quantize then dequantize, element by element.
pub fn fake_quant<T: Scalar>(values: &[T], shape: &[usize], spec: &QuantSpec) -> Result<Vec<T>> {
    Ok(dequantize(&quantize(values, shape, spec)?))
}

/// Per-tensor fake quantization of a single value.
#[inline]
pub fn fake_quant_value(r: f64, scale: f64, spec: &QuantSpec) -> f64 {
    scale * f64::from(quantize_value(r, scale, spec) - spec.zero_point)
}
