use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::dsp::{cola_coverage, raw_synthesis_window, synthesis_window, FramingConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One-sided spectrum of a real frame (`n_bins` complex values).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrame<T> {
    pub bins: Vec<Complex<T>>,
}

impl<T: Scalar> SpectralFrame<T> {
    pub fn zeros(n_bins: usize) -> Self {
        Self {
            bins: vec![Complex::new(T::zero(), T::zero()); n_bins],
        }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }
}

/// Overlap-add carry for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct OlaState<T> {
    /// Windowed samples that still overlap the next chunk (`lookahead` long).
    pub tail: Vec<T>,
    /// Coverage of the raw synthesis window at each window offset.
    pub coverage: Vec<T>,
    /// Previous raw input sample, for pre-emphasis.
    pub emphasis_carry: T,
}

impl<T: Scalar> OlaState<T> {
    pub fn new(cfg: &FramingConfig) -> Result<Self> {
        let raw = raw_synthesis_window::<T>(cfg)?;
        Ok(Self {
            tail: vec![T::zero(); cfg.lookahead],
            coverage: cola_coverage(cfg, &raw)?,
            emphasis_carry: T::zero(),
        })
    }
}

/// Rectangular-analysis / short-synthesis STFT pair.
#[derive(Clone)]
pub struct Stft<T: Scalar> {
    cfg: FramingConfig,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    window: Vec<T>,
}

impl<T: Scalar> std::fmt::Debug for Stft<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl<T: Scalar> Stft<T> {
    pub fn new(cfg: FramingConfig) -> Result<Self> {
        Self::with_window(cfg, synthesis_window(&cfg)?)
    }

    /// Use an arbitrary synthesis window (mostly for negative controls).
    pub fn with_window(cfg: FramingConfig, window: Vec<T>) -> Result<Self> {
        cfg.validate()?;
        if window.len() != cfg.synthesis_len() {
            return Err(Error::shape(format!(
                "synthesis window has {} taps, expected {}",
                window.len(),
                cfg.synthesis_len()
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg,
            forward: planner.plan_fft_forward(cfg.fft_size()),
            inverse: planner.plan_fft_inverse(cfg.fft_size()),
            window,
        })
    }

    pub fn config(&self) -> &FramingConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    /// DFT of an unwindowed `[lookback | chunk | lookahead]` frame.
    pub fn analysis(&self, frame: &[T]) -> Result<SpectralFrame<T>> {
        let n = self.cfg.fft_size();
        if frame.len() != n {
            return Err(Error::shape(format!(
                "analysis frame has {} samples, expected {n}",
                frame.len()
            )));
        }
        let mut buf: Vec<Complex<T>> = frame.iter().map(|&x| Complex::new(x, T::zero())).collect();
        self.forward.process(&mut buf);
        buf.truncate(self.cfg.n_bins());
        buf[0].im = T::zero();
        if n % 2 == 0 {
            buf[n / 2].im = T::zero();
        }
        Ok(SpectralFrame { bins: buf })
    }

    /// Real inverse DFT of a one-sided spectrum (length `fft_size`).
    pub fn inverse(&self, spec: &SpectralFrame<T>) -> Result<Vec<T>> {
        let n = self.cfg.fft_size();
        let nb = self.cfg.n_bins();
        if spec.len() != nb {
            return Err(Error::shape(format!(
                "spectrum has {} bins, expected {nb}",
                spec.len()
            )));
        }
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        buf[..nb].copy_from_slice(&spec.bins);
        buf[0].im = T::zero();
        if n % 2 == 0 {
            buf[n / 2].im = T::zero();
        }
        for k in nb..n {
            buf[k] = buf[n - k].conj();
        }
        self.inverse.process(&mut buf);
        let scale = T::one() / T::lit(n as f64);
        Ok(buf.iter().map(|c| c.re * scale).collect())
    }

    /// Inverse DFT, lookback discarded, synthesis window applied.
    pub fn windowed_segment(&self, spec: &SpectralFrame<T>) -> Result<Vec<T>> {
        let time = self.inverse(spec)?;
        Ok(time[self.cfg.lookback..]
            .iter()
            .zip(&self.window)
            .map(|(x, w)| *x * *w)
            .collect())
    }

    /// Synthesize one chunk: overlap-add the windowed segment with the carried
    /// tail, emit `chunk` finished samples and keep the last `lookahead` ones.
    pub fn synthesis_chunk(&self, spec: &SpectralFrame<T>, state: &mut OlaState<T>) -> Result<Vec<T>> {
        let seg = self.windowed_segment(spec)?;
        let (lc, lf) = (self.cfg.chunk, self.cfg.lookahead);
        let mut out = seg[..lc].to_vec();
        for (o, t) in out.iter_mut().zip(&state.tail) {
            *o = *o + *t;
        }
        state.tail.copy_from_slice(&seg[lc..lc + lf]);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn impulse_is_flat() {
        let stft = Stft::<f64>::new(FramingConfig::default()).unwrap();
        let mut frame = vec![0.0; 256];
        frame[0] = 1.0;
        let spec = stft.analysis(&frame).unwrap();
        assert_eq!(spec.len(), 129);
        for b in &spec.bins {
            assert!((b.re - 1.0).abs() < 1e-12 && b.im.abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_lands_in_its_bin() {
        let stft = Stft::<f64>::new(FramingConfig::default()).unwrap();
        let k0 = 17;
        let frame: Vec<f64> = (0..256)
            .map(|n| (2.0 * std::f64::consts::PI * k0 as f64 * n as f64 / 256.0).cos())
            .collect();
        let spec = stft.analysis(&frame).unwrap();
        for (k, b) in spec.bins.iter().enumerate() {
            if k == k0 {
                assert!((b.re - 128.0).abs() < 1e-9);
            } else {
                assert!(b.norm() < 1e-9, "bin {k} leaked {}", b.norm());
            }
        }
    }

    #[test]
    fn round_trip() {
        let stft = Stft::<f32>::new(FramingConfig::default()).unwrap();
        let frame = random(256, 1);
        let back = stft.inverse(&stft.analysis(&frame).unwrap()).unwrap();
        let err = frame.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn wrong_frame_length() {
        let stft = Stft::<f32>::new(FramingConfig::default()).unwrap();
        assert!(stft.analysis(&[0.0; 255]).is_err());
        assert!(stft.inverse(&SpectralFrame::zeros(128)).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = FramingConfig::default();
        let stft = Stft::<f32>::new(cfg).unwrap();
        let mut st = OlaState::new(&cfg).unwrap();
        let out = stft.synthesis_chunk(&SpectralFrame::zeros(129), &mut st).unwrap();
        assert_eq!(out, vec![0.0; 96]);
        assert_eq!(st.tail, vec![0.0; 64]);
    }

    #[test]
    fn flat_spectrum_emits_windowed_impulse() {
        // all-ones spectrum is a unit impulse at n = 0, which lies in the
        // discarded lookback unless lookback = 0
        let cfg = FramingConfig::new(0, 96, 64).unwrap();
        let stft = Stft::<f64>::new(cfg).unwrap();
        let mut st = OlaState::new(&cfg).unwrap();
        let spec = SpectralFrame {
            bins: vec![Complex::new(1.0, 0.0); cfg.n_bins()],
        };
        let out = stft.synthesis_chunk(&spec, &mut st).unwrap();
        let w = synthesis_window::<f64>(&cfg).unwrap();
        assert!((out[0] - w[0]).abs() < 1e-12);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-12));
        assert!(st.tail.iter().all(|v| v.abs() < 1e-12));

        let cfg = FramingConfig::default();
        let stft = Stft::<f64>::new(cfg).unwrap();
        let mut st = OlaState::new(&cfg).unwrap();
        let spec = SpectralFrame {
            bins: vec![Complex::new(1.0, 0.0); cfg.n_bins()],
        };
        let out = stft.synthesis_chunk(&spec, &mut st).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn identity_path_is_a_pure_delay() {
        let cfg = FramingConfig::default();
        let stft = Stft::<f32>::new(cfg).unwrap();
        let x = random(16_000, 5);
        let mut st = OlaState::new(&cfg).unwrap();
        let mut ring = vec![0.0f32; cfg.fft_size()];
        let mut y = Vec::new();
        for chunk in x.chunks_exact(cfg.chunk) {
            let spec = stft.analysis(&ring).unwrap();
            y.extend(stft.synthesis_chunk(&spec, &mut st).unwrap());
            ring.rotate_left(cfg.chunk);
            let n = ring.len();
            ring[n - cfg.chunk..].copy_from_slice(chunk);
        }
        let delay = cfg.latency();
        let err = (delay..y.len()).map(|n| (y[n] - x[n - delay]).abs()).fold(0.0, f32::max);
        assert!(err <= 1e-5, "{err}");
        assert!(y[..delay].iter().all(|v| v.abs() <= 1e-6));
    }
}
