//! Seeded test signals and mixtures.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    Pink,
    Brown,
}

/// A noise recipe. `amplitude` is the standard deviation for white noise
/// and the post-normalization scale for coloured noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub amplitude: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn generate(&self, n: usize) -> Result<Vec<f32>> {
        if !(self.amplitude >= 0.0) {
            return Err(Error::Signal(format!("negative noise amplitude {}", self.amplitude)));
        }
        match self.kind {
            NoiseKind::White => Ok(white_noise(n, self.amplitude, self.seed)),
            NoiseKind::Pink => colored_noise(n, 1.0, self.amplitude, self.seed),
            NoiseKind::Brown => colored_noise(n, 2.0, self.amplitude, self.seed),
        }
    }
}

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

/// Gaussian noise with standard deviation `std`.
pub fn white_noise(n: usize, std: f64, seed: u64) -> Vec<f32> {
    gaussian(n, seed).into_iter().map(|v| (v * std) as f32).collect()
}

/// `1/f^exponent` noise by spectral shaping of white noise, normalized to
/// unit standard deviation and then multiplied by `scale`.
pub fn colored_noise(n: usize, exponent: f64, scale: f64, seed: u64) -> Result<Vec<f32>> {
    if n < 2 {
        return Err(Error::Signal(format!("coloured noise needs at least 2 samples, got {n}")));
    }
    if exponent != 1.0 && exponent != 2.0 {
        return Err(Error::Signal(format!("colour exponent must be 1 or 2, got {exponent}")));
    }
    let mut spec: Vec<Complex<f64>> = gaussian(n, seed).into_iter().map(|v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut spec);
    spec[0] = Complex::new(0.0, 0.0);
    for (k, c) in spec.iter_mut().enumerate().skip(1) {
        // two-sided index so the shaping stays Hermitian
        let f = k.min(n - k) as f64;
        *c = *c / f.powf(exponent / 2.0);
    }
    planner.plan_fft_inverse(n).process(&mut spec);
    let x: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; n]);
    }
    Ok(x.iter().map(|v| ((v - mean) / std * scale) as f32).collect())
}

/// Linear convolution truncated to the signal length.
pub fn fir_convolve(signal: &[f32], ir: &[f32]) -> Result<Vec<f32>> {
    if ir.is_empty() {
        return Err(Error::Signal("empty impulse response".into()));
    }
    Ok((0..signal.len())
        .map(|n| {
            let taps = ir.len().min(n + 1);
            (0..taps)
                .map(|k| f64::from(ir[k]) * f64::from(signal[n - k]))
                .sum::<f64>() as f32
        })
        .collect())
}

/// Scale `noise` to `snr_db` below `speech` and add. Returns the mixture
/// and the scaled noise; an infinite target means no noise.
pub fn mix(speech: &[f32], noise: &[f32], snr_db: f64) -> Result<(Vec<f32>, Vec<f32>)> {
    if speech.len() != noise.len() {
        return Err(Error::Signal(format!(
            "speech has {} samples, noise {}",
            speech.len(),
            noise.len()
        )));
    }
    let energy = |x: &[f32]| x.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>();
    let es = energy(speech);
    if es == 0.0 {
        return Err(Error::Signal("speech is all zeros".into()));
    }
    if snr_db.is_nan() {
        return Err(Error::Signal("target SNR is NaN".into()));
    }
    let gain = if snr_db == f64::INFINITY {
        0.0
    } else {
        let en = energy(noise);
        if en == 0.0 {
            return Err(Error::Signal("noise is all zeros".into()));
        }
        (es / (en * 10f64.powf(snr_db / 10.0))).sqrt()
    };
    let scaled: Vec<f32> = noise.iter().map(|&v| (f64::from(v) * gain) as f32).collect();
    let mixture = speech.iter().zip(&scaled).map(|(a, b)| a + b).collect();
    Ok((mixture, scaled))
}

const SINC_TAPS: usize = 32;
const KAISER_BETA: f64 = 8.0;

// modified Bessel function of the first kind, order zero
fn bessel_i0(x: f64) -> f64 {
    let (mut sum, mut term, mut k) = (1.0, 1.0, 1.0);
    while term > 1e-16 * sum {
        term *= (x / (2.0 * k)).powi(2);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Change speed (and pitch) by `factor` with a Kaiser-windowed sinc
/// interpolator. The output has `round(n / factor)` samples.
pub fn speed_perturb(signal: &[f32], factor: f64) -> Result<Vec<f32>> {
    if !(0.8..=1.2).contains(&factor) {
        return Err(Error::Signal(format!("speed factor {factor} outside [0.8, 1.2]")));
    }
    let out_len = (signal.len() as f64 / factor).round() as usize;
    let cutoff = (1.0 / factor).min(1.0);
    let half = (SINC_TAPS / 2) as f64;
    let i0b = bessel_i0(KAISER_BETA);
    Ok((0..out_len)
        .map(|m| {
            let t = m as f64 * factor;
            let base = t.floor() as isize;
            let mut acc = 0.0;
            for j in (base - SINC_TAPS as isize / 2 + 1)..=(base + SINC_TAPS as isize / 2) {
                if j < 0 || j as usize >= signal.len() {
                    continue;
                }
                let d = t - j as f64;
                if d.abs() >= half {
                    continue;
                }
                let w = bessel_i0(KAISER_BETA * (1.0 - (d / half).powi(2)).sqrt()) / i0b;
                let x = std::f64::consts::PI * cutoff * d;
                let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
                acc += f64::from(signal[j as usize]) * cutoff * sinc * w;
            }
            acc as f32
        })
        .collect())
}
