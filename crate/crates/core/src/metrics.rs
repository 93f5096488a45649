//! Objective speech metrics and training losses.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative guard on energy ratios; it also sets the +/-80 dB limits.
pub const EPS: f64 = 1e-8;
/// Upper bound on every ratio in dB.
pub const CAP_DB: f64 = 80.0;
/// `(fft_size, hop)` pairs used by [`mrstft_loss`] when none are given.
pub const DEFAULT_RESOLUTIONS: [(usize, usize); 3] = [(512, 128), (1024, 256), (2048, 512)];
const MAG_FLOOR: f64 = 1e-7;

/// One line of a metric report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub value_db: f64,
    pub file: String,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Signal(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::Signal("empty signal".into()));
    }
    Ok(())
}

fn energy(x: impl Iterator<Item = f64>) -> f64 {
    x.map(|v| v * v).sum()
}

// The guard scales with the numerator so the ratio stays exactly
// scale-invariant.
fn ratio_db(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        return -CAP_DB;
    }
    (10.0 * (num / (den + EPS * num) + EPS).log10()).clamp(-CAP_DB, CAP_DB)
}

/// Scale-invariant signal-to-distortion ratio in dB.
pub fn sisdr<T: Scalar>(est: &[T], reference: &[T]) -> Result<f64> {
    check_lengths(est.len(), reference.len())?;
    let r: Vec<f64> = reference.iter().map(|v| v.as_f64()).collect();
    let e: Vec<f64> = est.iter().map(|v| v.as_f64()).collect();
    let rr = energy(r.iter().copied());
    if rr == 0.0 {
        return Err(Error::Signal("reference is all zeros".into()));
    }
    let alpha = e.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target = energy(r.iter().map(|v| alpha * v));
    let residual = energy(e.iter().zip(&r).map(|(a, b)| a - alpha * b));
    Ok(ratio_db(target, residual))
}

/// SI-SDR improvement of `est` over the unprocessed `mix`.
pub fn sisdri<T: Scalar>(est: &[T], mix: &[T], reference: &[T]) -> Result<f64> {
    Ok(sisdr(est, reference)? - sisdr(mix, reference)?)
}

/// Plain SNR in dB.
pub fn snr_db<T: Scalar>(est: &[T], reference: &[T]) -> Result<f64> {
    check_lengths(est.len(), reference.len())?;
    let num = energy(reference.iter().map(|v| v.as_f64()));
    let den = energy(est.iter().zip(reference).map(|(a, b)| b.as_f64() - a.as_f64()));
    Ok(ratio_db(num, den))
}

/// Magnitude spectrogram with a periodic Hann window and no centring,
/// `frames x (fft_size / 2 + 1)`.
pub fn magnitude_spectrogram<T: Scalar>(x: &[T], fft_size: usize, hop: usize) -> Result<Vec<Vec<f64>>> {
    if fft_size == 0 || hop == 0 {
        return Err(Error::config("fft size and hop must be positive"));
    }
    if x.len() < fft_size {
        return Err(Error::Signal(format!(
            "signal of {} samples is shorter than fft size {fft_size}",
            x.len()
        )));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let window: Vec<f64> = (0..fft_size)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / fft_size as f64).cos())
        .collect();
    let frames = 1 + (x.len() - fft_size) / hop;
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    Ok((0..frames)
        .map(|i| {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(x[i * hop + k].as_f64() * window[k], 0.0);
            }
            fft.process(&mut buf);
            buf[..fft_size / 2 + 1].iter().map(|c| c.norm()).collect()
        })
        .collect())
}

fn spectrograms<T: Scalar>(est: &[T], reference: &[T], fft_size: usize, hop: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(est.len(), reference.len())?;
    let flat = |x: &[T]| -> Result<Vec<f64>> { Ok(magnitude_spectrogram(x, fft_size, hop)?.concat()) };
    Ok((flat(est)?, flat(reference)?))
}

/// `‖|R| - |E|‖_F / ‖|R|‖_F`; normalised by the reference, so not symmetric.
pub fn spectral_convergence<T: Scalar>(est: &[T], reference: &[T], fft_size: usize, hop: usize) -> Result<f64> {
    let (e, r) = spectrograms(est, reference, fft_size, hop)?;
    let num = energy(e.iter().zip(&r).map(|(a, b)| b - a)).sqrt();
    let den = energy(r.iter().copied()).sqrt();
    Ok(num / (den + EPS))
}

/// Mean `|log|R| - log|E||` over all time-frequency cells.
pub fn log_magnitude_l1<T: Scalar>(est: &[T], reference: &[T], fft_size: usize, hop: usize) -> Result<f64> {
    let (e, r) = spectrograms(est, reference, fft_size, hop)?;
    let total: f64 = e
        .iter()
        .zip(&r)
        .map(|(a, b)| (b.max(MAG_FLOOR).ln() - a.max(MAG_FLOOR).ln()).abs())
        .sum();
    Ok(total / e.len() as f64)
}

/// Multi-resolution STFT loss: mean over resolutions of spectral
/// convergence plus log-magnitude L1.
pub fn mrstft_loss<T: Scalar>(est: &[T], reference: &[T], resolutions: &[(usize, usize)]) -> Result<f64> {
    if resolutions.is_empty() {
        return Err(Error::config("no STFT resolutions given"));
    }
    let mut total = 0.0;
    for &(n, hop) in resolutions {
        total += spectral_convergence(est, reference, n, hop)? + log_magnitude_l1(est, reference, n, hop)?;
    }
    Ok(total / resolutions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn identical_signals_hit_the_cap() {
        let r = noise(1000, 1);
        assert_eq!(sisdr(&r, &r).unwrap(), CAP_DB);
        assert_eq!(snr_db(&r, &r).unwrap(), CAP_DB);
    }

    #[test]
    fn sisdr_ignores_scale() {
        let r = noise(4000, 2);
        let e: Vec<f64> = r.iter().zip(noise(4000, 3)).map(|(a, b)| a + 0.3 * b).collect();
        let base = sisdr(&e, &r).unwrap();
        for s in [0.01, 0.5, 2.0, 1000.0] {
            let scaled: Vec<f64> = e.iter().map(|v| v * s).collect();
            assert!((sisdr(&scaled, &r).unwrap() - base).abs() < 1e-6);
        }
    }

    #[test]
    fn orthogonal_noise_at_ten_db() {
        let r = noise(8000, 4);
        let mut n = noise(8000, 5);
        let k = dot(&n, &r) / dot(&r, &r);
        for (a, b) in n.iter_mut().zip(&r) {
            *a -= k * b;
        }
        let g = (dot(&r, &r) / (10.0 * dot(&n, &n))).sqrt();
        let e: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + g * b).collect();
        assert!((sisdr(&e, &r).unwrap() - 10.0).abs() < 1e-4);
    }

    #[test]
    fn improvement_of_mixture_is_zero() {
        let r = noise(500, 6);
        let m: Vec<f64> = r.iter().zip(noise(500, 7)).map(|(a, b)| a + b).collect();
        assert_eq!(sisdri(&m, &m, &r).unwrap(), 0.0);
        let cap = sisdri(&r, &m, &r).unwrap();
        assert!((cap - (CAP_DB - sisdr(&m, &r).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn snr_hand_cases() {
        let r = noise(2000, 8);
        assert!(snr_db(&vec![0.0; 2000], &r).unwrap().abs() < 1e-6);
        let d = noise(2000, 9);
        let g = (dot(&r, &r) / 100.0 / dot(&d, &d)).sqrt();
        let e: Vec<f64> = r.iter().zip(&d).map(|(a, b)| a + g * b).collect();
        assert!((snr_db(&e, &r).unwrap() - 20.0).abs() < 1e-4);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(sisdr(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(sisdr(&[1.0], &[1.0, 2.0]).is_err());
        assert!(snr_db::<f64>(&[], &[]).is_err());
        assert!(mrstft_loss(&noise(1000, 1), &noise(1000, 2), &DEFAULT_RESOLUTIONS).is_err());
    }

    #[test]
    fn mrstft_zero_for_equal_and_nonnegative() {
        let r = noise(4096, 10);
        assert_eq!(mrstft_loss(&r, &r, &DEFAULT_RESOLUTIONS).unwrap(), 0.0);
        for s in 0..5 {
            let e = noise(4096, 20 + s);
            assert!(mrstft_loss(&e, &r, &DEFAULT_RESOLUTIONS).unwrap() >= 0.0);
        }
    }

    // single-frame Hann spectrum by direct DFT
    fn hann_mag(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in x.iter().enumerate() {
                    let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * t as f64 / n as f64).cos();
                    let ph = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                    re += v * w * ph.cos();
                    im += v * w * ph.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn swapping_changes_only_convergence() {
        let sine = |f: f64, a: f64| -> Vec<f64> {
            (0..512)
                .map(|n| a * (2.0 * std::f64::consts::PI * f * n as f64 / 16_000.0).sin())
                .collect()
        };
        let (x, y) = (sine(440.0, 1.0), sine(1000.0, 0.5));
        let (mx, my) = (hann_mag(&x), hann_mag(&y));
        let sc = |e: &[f64], r: &[f64]| {
            let num: f64 = e.iter().zip(r).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
            num / r.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let fwd = spectral_convergence(&x, &y, 512, 128).unwrap();
        let bwd = spectral_convergence(&y, &x, 512, 128).unwrap();
        assert!((fwd - sc(&mx, &my)).abs() < 1e-9);
        assert!((bwd - sc(&my, &mx)).abs() < 1e-9);
        assert!((fwd - bwd).abs() > 0.1);
        let l1 = log_magnitude_l1(&x, &y, 512, 128).unwrap();
        assert_eq!(l1, log_magnitude_l1(&y, &x, 512, 128).unwrap());
    }
}
