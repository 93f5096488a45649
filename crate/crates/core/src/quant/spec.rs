use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::round_half_even;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// One `(S, Z)` for the whole tensor.
    PerTensorAffine,
    /// One `S` per slice along axis 0, `Z = 0`.
    PerChannelSymmetric,
}

/// Uniform quantizer parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bits: u8,
    pub scheme: Scheme,
    pub scales: Vec<f64>,
    pub zero_point: i32,
    pub qmin: i32,
    pub qmax: i32,
}

/// Signed integer range for `bits`.
pub fn signed_range(bits: u8) -> (i32, i32) {
    let half = 1i32 << (bits - 1);
    (-half, half - 1)
}

/// Asymmetric scale and zero-point for the range `[alpha, beta]`.
pub fn scale_asym(alpha: f64, beta: f64, bits: u8) -> Result<(f64, i32)> {
    if !(beta > alpha) {
        return Err(Error::DegenerateRange { alpha, beta });
    }
    let (qmin, qmax) = signed_range(bits);
    let scale = (beta - alpha) / ((1u64 << bits) - 1) as f64;
    let zp = round_half_even(qmin as f64 - alpha / scale).clamp(qmin as f64, qmax as f64);
    Ok((scale, zp as i32))
}

/// Symmetric scale for the range `[alpha, beta]`; the zero-point is always 0.
///
/// An all-zero range falls back to machine epsilon.
pub fn scale_sym(alpha: f64, beta: f64, bits: u8) -> (f64, i32) {
    let m = (-alpha).max(beta);
    if !(m > 0.0) {
        log::warn!("symmetric range [{alpha}, {beta}] is empty, using epsilon scale");
        return (f64::EPSILON, 0);
    }
    (m / ((1i64 << (bits - 1)) - 1) as f64, 0)
}

impl QuantSpec {
    /// Per-tensor asymmetric spec; a degenerate range is widened by epsilon
    /// on both sides.
    pub fn affine(alpha: f64, beta: f64, bits: u8) -> Self {
        let (scale, zp) = match scale_asym(alpha, beta, bits) {
            Ok(v) => v,
            Err(_) => {
                let eps = f64::from(f32::EPSILON).max(alpha.abs().max(beta.abs()) * 1e-6);
                log::warn!("degenerate range [{alpha}, {beta}], widening by {eps:e}");
                scale_asym(alpha.min(beta) - eps, alpha.max(beta) + eps, bits)
                    .expect("widened range is non-degenerate")
            }
        };
        let (qmin, qmax) = signed_range(bits);
        Self {
            bits,
            scheme: Scheme::PerTensorAffine,
            scales: vec![scale],
            zero_point: zp,
            qmin,
            qmax,
        }
    }

    pub fn symmetric(alpha: f64, beta: f64, bits: u8) -> Self {
        Self::per_channel(&[(alpha, beta)], bits)
    }

    /// Per-channel symmetric spec from per-channel `(min, max)` ranges.
    pub fn per_channel(ranges: &[(f64, f64)], bits: u8) -> Self {
        let (qmin, qmax) = signed_range(bits);
        Self {
            bits,
            scheme: Scheme::PerChannelSymmetric,
            scales: ranges.iter().map(|&(a, b)| scale_sym(a, b, bits).0).collect(),
            zero_point: 0,
            qmin,
            qmax,
        }
    }

    /// Per-channel symmetric spec computed directly from a tensor whose
    /// leading axis has `channels` entries.
    pub fn per_channel_from(values: &[f32], channels: usize, bits: u8) -> Result<Self> {
        if channels == 0 || values.len() % channels != 0 {
            return Err(Error::shape(format!(
                "{} values do not split into {channels} channels",
                values.len()
            )));
        }
        let inner = values.len() / channels;
        let ranges: Vec<(f64, f64)> = values
            .chunks(inner.max(1))
            .map(|ch| {
                ch.iter().fold((0.0f64, 0.0f64), |(lo, hi), &v| {
                    (lo.min(f64::from(v)), hi.max(f64::from(v)))
                })
            })
            .collect();
        Ok(Self::per_channel(&ranges, bits))
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 || self.bits > 8 {
            return Err(Error::config(format!("unsupported bit width {}", self.bits)));
        }
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::config("quantizer scales must be positive and finite"));
        }
        if self.qmin >= self.qmax {
            return Err(Error::config("qmin must be below qmax"));
        }
        match self.scheme {
            Scheme::PerChannelSymmetric if self.zero_point != 0 => {
                Err(Error::config("symmetric spec with nonzero zero-point"))
            }
            Scheme::PerTensorAffine if self.scales.len() != 1 => {
                Err(Error::config("per-tensor spec must have exactly one scale"))
            }
            Scheme::PerTensorAffine if !(self.qmin..=self.qmax).contains(&self.zero_point) => {
                Err(Error::config("zero-point outside the integer range"))
            }
            _ => Ok(()),
        }
    }

    /// Scale that applies to flat index `i` of a tensor with `inner`
    /// elements per channel.
    #[inline]
    pub fn scale_at(&self, i: usize, inner: usize) -> f64 {
        if self.scales.len() == 1 {
            self.scales[0]
        } else {
            self.scales[i / inner.max(1)]
        }
    }

    pub fn max_scale(&self) -> f64 {
        self.scales.iter().copied().fold(0.0, f64::max)
    }
}
