use num_complex::Complex;

use crate::dsp::{pre_emphasis_in_place, SpectralFrame, Stft, PRE_EMPHASIS_COEFF};
use crate::error::{Error, Result};
use crate::model::{Activation, Dense, FeatureTensor, GruCell, LstmCell, ModelConfig, NoProbe, Probe, WeightStore};
#[cfg(test)]
use crate::model::Tensor;
use crate::quant::{ActivationSpecs, Precision, PrecisionPlan};
use crate::scalar::Scalar;

/// Layers of one dual-path block.
#[derive(Debug, Clone)]
pub struct Block<T> {
    pub conv: Dense<T>,
    pub gru_fwd: GruCell<T>,
    pub gru_bwd: GruCell<T>,
    pub deconv: Dense<T>,
    pub lstm: LstmCell<T>,
    pub proj: Dense<T>,
}

/// Executable model at a fixed precision plan. Immutable once built and
/// shareable between streams.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar> {
    cfg: ModelConfig,
    stft: Stft<T>,
    passthrough: bool,
    encoder: Option<Dense<T>>,
    blocks: Vec<Block<T>>,
    decoder: Option<Dense<T>>,
}

impl<T: Scalar> Network<T> {
    /// Build every layer from `store` at the precision the plan assigns it.
    pub fn build(
        cfg: &ModelConfig,
        store: &WeightStore,
        plan: &PrecisionPlan,
        acts: Option<&ActivationSpecs>,
    ) -> Result<Self> {
        cfg.validate()?;
        plan.validate(cfg)?;
        store.validate(cfg)?;
        let mut id = 0;
        let mut layer = |path: String| -> Result<Dense<T>> {
            let d = Dense::build(id, &path, cfg, store, plan.get(&path)?, acts)?;
            id += 1;
            Ok(d)
        };
        let encoder = layer("encoder".into())?;
        let mut blocks = Vec::with_capacity(cfg.n_blocks);
        for b in 0..cfg.n_blocks {
            let p = |s: &str| format!("block.{b}.{s}");
            blocks.push(Block {
                conv: layer(p("spectral.conv"))?,
                gru_fwd: GruCell {
                    ih: layer(p("spectral.gru.fwd.ih"))?,
                    hh: layer(p("spectral.gru.fwd.hh"))?,
                },
                gru_bwd: GruCell {
                    ih: layer(p("spectral.gru.bwd.ih"))?,
                    hh: layer(p("spectral.gru.bwd.hh"))?,
                },
                deconv: layer(p("spectral.deconv"))?,
                lstm: LstmCell {
                    ih: layer(p("temporal.lstm.ih"))?,
                    hh: layer(p("temporal.lstm.hh"))?,
                },
                proj: layer(p("temporal.proj"))?,
            });
        }
        let decoder = layer("decoder".into())?;
        Ok(Self {
            cfg: *cfg,
            stft: Stft::new(cfg.framing)?,
            passthrough: false,
            encoder: Some(encoder),
            blocks,
            decoder: Some(decoder),
        })
    }

    /// All layers in f32.
    pub fn float(cfg: &ModelConfig, store: &WeightStore) -> Result<Self> {
        Self::build(cfg, store, &PrecisionPlan::uniform(cfg, Precision::F32), None)
    }

    /// Network replaced by an identity on the spectra; only the framing and
    /// pre-emphasis settings of `cfg` matter.
    pub fn passthrough(cfg: &ModelConfig) -> Result<Self> {
        Self::passthrough_with(cfg, Stft::new(cfg.framing)?)
    }

    /// Passthrough with a custom STFT (for example a corrupted window).
    pub fn passthrough_with(cfg: &ModelConfig, stft: Stft<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: *cfg,
            stft,
            passthrough: true,
            encoder: None,
            blocks: Vec::new(),
            decoder: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn stft(&self) -> &Stft<T> {
        &self.stft
    }

    pub fn is_passthrough(&self) -> bool {
        self.passthrough
    }

    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    /// Every dense layer in execution order.
    pub fn layers(&self) -> Vec<&Dense<T>> {
        let mut out: Vec<&Dense<T>> = self.encoder.iter().collect();
        for b in &self.blocks {
            out.extend([
                &b.conv,
                &b.gru_fwd.ih,
                &b.gru_fwd.hh,
                &b.gru_bwd.ih,
                &b.gru_bwd.hh,
                &b.deconv,
                &b.lstm.ih,
                &b.lstm.hh,
                &b.proj,
            ]);
        }
        out.extend(self.decoder.iter());
        out
    }

    fn encoder(&self) -> &Dense<T> {
        self.encoder.as_ref().expect("passthrough network has no encoder")
    }

    fn decoder(&self) -> &Dense<T> {
        self.decoder.as_ref().expect("passthrough network has no decoder")
    }

    /// Encode the newest frame. `history` holds the last `k_t` spectra,
    /// oldest first; `out` receives `bins x channels` features.
    pub fn encode_frame<P: Probe<T>>(&self, history: &[&SpectralFrame<T>], out: &mut [T], probe: &mut P) {
        let (kt, kf) = self.cfg.enc_kernel;
        debug_assert_eq!(history.len(), kt);
        let nb = self.cfg.n_bins();
        let pad = kf / 2;
        let k = kt * kf * 2;
        let mut patches = vec![T::zero(); nb * k];
        for (f, patch) in patches.chunks_exact_mut(k).enumerate() {
            for (j, frame) in history.iter().enumerate() {
                for kk in 0..kf {
                    let fi = f + kk;
                    if fi < pad || fi - pad >= nb {
                        continue;
                    }
                    let v = frame.bins[fi - pad];
                    let idx = (j * kf + kk) * 2;
                    patch[idx] = v.re;
                    patch[idx + 1] = v.im;
                }
            }
        }
        self.encoder().forward_batch(&patches, out, probe);
        if self.cfg.encoder_activation == Activation::Tanh {
            for v in out.iter_mut() {
                *v = v.tanh();
            }
        }
    }

    /// Causal input convolution over a sequence of spectra.
    pub fn encode(&self, frames: &[SpectralFrame<T>]) -> Result<FeatureTensor<T>> {
        self.encode_probed(frames, &mut NoProbe)
    }

    fn encode_probed<P: Probe<T>>(&self, frames: &[SpectralFrame<T>], probe: &mut P) -> Result<FeatureTensor<T>> {
        let nb = self.cfg.n_bins();
        if let Some(bad) = frames.iter().find(|f| f.len() != nb) {
            return Err(Error::shape(format!("spectrum with {} bins, expected {nb}", bad.len())));
        }
        let kt = self.cfg.enc_kernel.0;
        let zero = SpectralFrame::zeros(nb);
        let mut x = FeatureTensor::zeros(self.cfg.channels, frames.len(), nb);
        for t in 0..frames.len() {
            let history: Vec<&SpectralFrame<T>> = (0..kt)
                .map(|j| {
                    let back = kt - 1 - j;
                    if t >= back {
                        &frames[t - back]
                    } else {
                        &zero
                    }
                })
                .collect();
            self.encode_frame(&history, x.frame_mut(t), probe);
        }
        Ok(x)
    }

    /// Frequency-compressed GRU stage on one frame (`bins x channels`),
    /// applied in place with its residual connection.
    pub fn spectral_stage<P: Probe<T>>(&self, block: usize, x: &mut [T], probe: &mut P) {
        let blk = &self.blocks[block];
        let (nb, d, h, q) = (self.cfg.n_bins(), self.cfg.channels, self.cfg.hidden, self.cfg.freq_compress);
        let fc = self.cfg.compressed_bins();
        let mut padded = vec![T::zero(); fc * q * d];
        padded[..nb * d].copy_from_slice(x);
        let mut compressed = vec![T::zero(); fc * d];
        blk.conv.forward_batch(&padded, &mut compressed, probe);

        let mut gx_f = vec![T::zero(); fc * 3 * h];
        let mut gx_b = vec![T::zero(); fc * 3 * h];
        blk.gru_fwd.ih.forward_batch(&compressed, &mut gx_f, probe);
        blk.gru_bwd.ih.forward_batch(&compressed, &mut gx_b, probe);
        let mut seq = vec![T::zero(); fc * 2 * h];
        let mut state = vec![T::zero(); h];
        for p in 0..fc {
            blk.gru_fwd.step(&gx_f[p * 3 * h..(p + 1) * 3 * h], &mut state, probe);
            seq[p * 2 * h..p * 2 * h + h].copy_from_slice(&state);
        }
        state.fill(T::zero());
        for p in (0..fc).rev() {
            blk.gru_bwd.step(&gx_b[p * 3 * h..(p + 1) * 3 * h], &mut state, probe);
            seq[p * 2 * h + h..(p + 1) * 2 * h].copy_from_slice(&state);
        }

        let mut expanded = vec![T::zero(); fc * d * q];
        blk.deconv.forward_batch(&seq, &mut expanded, probe);
        // rows of each position are ordered (channel, tap)
        for (p, rows) in expanded.chunks_exact(d * q).enumerate() {
            for j in 0..q {
                let f = p * q + j;
                if f >= nb {
                    break;
                }
                for c in 0..d {
                    x[f * d + c] = x[f * d + c] + rows[c * q + j];
                }
            }
        }
    }

    /// One LSTM time step for every bin of a frame, in place with residual.
    /// `hs` and `cs` hold `bins x hidden` recurrent state.
    pub fn temporal_step<P: Probe<T>>(&self, block: usize, x: &mut [T], hs: &mut [T], cs: &mut [T], probe: &mut P) {
        let blk = &self.blocks[block];
        let (nb, d, h) = (self.cfg.n_bins(), self.cfg.channels, self.cfg.hidden);
        let mut gx = vec![T::zero(); nb * 4 * h];
        blk.lstm.ih.forward_batch(x, &mut gx, probe);
        blk.lstm.step_batch(&gx, hs, cs, probe);
        let mut y = vec![T::zero(); nb * d];
        blk.proj.forward_batch(hs, &mut y, probe);
        for (a, b) in x.iter_mut().zip(&y) {
            *a = *a + *b;
        }
    }

    /// Causal LSTM stage over the time sequence of one bin.
    ///
    /// `seq` is `frames x channels`; `(h, c)` is carried in and out.
    pub fn temporal_stage<P: Probe<T>>(
        &self,
        block: usize,
        seq: &[T],
        h: &mut [T],
        c: &mut [T],
        probe: &mut P,
    ) -> Vec<T> {
        let blk = &self.blocks[block];
        let (d, hd) = (self.cfg.channels, self.cfg.hidden);
        let frames = seq.len() / d;
        let mut gx = vec![T::zero(); frames * 4 * hd];
        blk.lstm.ih.forward_batch(seq, &mut gx, probe);
        let mut hist = vec![T::zero(); frames * hd];
        for t in 0..frames {
            blk.lstm.step(&gx[t * 4 * hd..(t + 1) * 4 * hd], h, c, probe);
            hist[t * hd..(t + 1) * hd].copy_from_slice(h);
        }
        let mut y = vec![T::zero(); frames * d];
        blk.proj.forward_batch(&hist, &mut y, probe);
        seq.iter().zip(&y).map(|(a, b)| *a + *b).collect()
    }

    /// Output deconvolution for the newest frame. `history` holds the last
    /// `k_t` block outputs (`bins x channels` each), oldest first.
    pub fn decode_frame<P: Probe<T>>(&self, history: &[&[T]], probe: &mut P) -> SpectralFrame<T> {
        let (kt, kf) = self.cfg.dec_kernel;
        debug_assert_eq!(history.len(), kt);
        let (nb, d) = (self.cfg.n_bins(), self.cfg.channels);
        let pad = kf / 2;
        let k = kt * kf * d;
        let mut patches = vec![T::zero(); nb * k];
        for (f, patch) in patches.chunks_exact_mut(k).enumerate() {
            for j in 0..kt {
                // tap j reads frame t - j
                let frame = history[kt - 1 - j];
                for kk in 0..kf {
                    let src = f + pad;
                    if src < kk || src - kk >= nb {
                        continue;
                    }
                    let fi = src - kk;
                    let idx = (j * kf + kk) * d;
                    patch[idx..idx + d].copy_from_slice(&frame[fi * d..(fi + 1) * d]);
                }
            }
        }
        let mut out = vec![T::zero(); nb * 2];
        self.decoder().forward_batch(&patches, &mut out, probe);
        SpectralFrame {
            bins: out.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect(),
        }
    }

    /// Causal output deconvolution over a whole feature tensor.
    pub fn decode(&self, y: &FeatureTensor<T>) -> Result<Vec<SpectralFrame<T>>> {
        self.decode_probed(y, &mut NoProbe)
    }

    fn decode_probed<P: Probe<T>>(&self, y: &FeatureTensor<T>, probe: &mut P) -> Result<Vec<SpectralFrame<T>>> {
        if y.channels != self.cfg.channels || y.bins != self.cfg.n_bins() {
            return Err(Error::shape(format!(
                "decoder input has {} channels x {} bins, expected {} x {}",
                y.channels,
                y.bins,
                self.cfg.channels,
                self.cfg.n_bins()
            )));
        }
        let kt = self.cfg.dec_kernel.0;
        let zero = vec![T::zero(); y.bins * y.channels];
        Ok((0..y.frames)
            .map(|t| {
                let history: Vec<&[T]> = (0..kt)
                    .map(|j| {
                        let back = kt - 1 - j;
                        if t >= back {
                            y.frame(t - back)
                        } else {
                            zero.as_slice()
                        }
                    })
                    .collect();
                self.decode_frame(&history, probe)
            })
            .collect())
    }

    /// Run the dual-path block stack over a whole utterance, in place.
    pub fn blocks_offline<P: Probe<T>>(&self, x: &mut FeatureTensor<T>, probe: &mut P) {
        let (nb, d, h) = (self.cfg.n_bins(), self.cfg.channels, self.cfg.hidden);
        let frames = x.frames;
        for b in 0..self.blocks.len() {
            for t in 0..frames {
                self.spectral_stage(b, x.frame_mut(t), probe);
            }
            let mut seq = vec![T::zero(); frames * d];
            for f in 0..nb {
                for t in 0..frames {
                    let base = (t * nb + f) * d;
                    seq[t * d..(t + 1) * d].copy_from_slice(&x.data[base..base + d]);
                }
                let (mut hs, mut cs) = (vec![T::zero(); h], vec![T::zero(); h]);
                let out = self.temporal_stage(b, &seq, &mut hs, &mut cs, probe);
                for t in 0..frames {
                    let base = (t * nb + f) * d;
                    x.data[base..base + d].copy_from_slice(&out[t * d..(t + 1) * d]);
                }
            }
        }
    }

    /// Enhance a whole utterance at once.
    ///
    /// Output sample `n` is aligned with input sample `n - latency`; the
    /// output length is the input length truncated to whole chunks.
    pub fn forward_offline(&self, signal: &[T]) -> Result<Vec<T>> {
        self.forward_offline_probed(signal, &mut NoProbe)
    }

    pub fn forward_offline_probed<P: Probe<T>>(&self, signal: &[T], probe: &mut P) -> Result<Vec<T>> {
        let fr = self.cfg.framing;
        let (n, lc, lf) = (fr.fft_size(), fr.chunk, fr.lookahead);
        if signal.len() < n {
            return Err(Error::Signal(format!(
                "offline pass needs at least {n} samples, got {}",
                signal.len()
            )));
        }
        let chunks = signal.len() / lc;
        let mut x = signal[..chunks * lc].to_vec();
        if self.cfg.pre_emphasis {
            pre_emphasis_in_place(&mut x, T::zero(), T::lit(PRE_EMPHASIS_COEFF));
        }
        let mut frame = vec![T::zero(); n];
        let mut spectra = Vec::with_capacity(chunks);
        for i in 0..chunks {
            // frame i ends where chunk i starts
            let end = i * lc;
            frame.fill(T::zero());
            let start = end.saturating_sub(n);
            frame[n - (end - start)..].copy_from_slice(&x[start..end]);
            spectra.push(self.stft.analysis(&frame)?);
        }
        let enhanced = if self.passthrough {
            spectra
        } else {
            let mut feats = self.encode_probed(&spectra, probe)?;
            self.blocks_offline(&mut feats, probe);
            self.decode_probed(&feats, probe)?
        };
        let mut out = vec![T::zero(); chunks * lc + lf];
        for (i, spec) in enhanced.iter().enumerate() {
            let seg = self.stft.windowed_segment(spec)?;
            for (o, s) in out[i * lc..i * lc + lc + lf].iter_mut().zip(&seg) {
                *o = *o + *s;
            }
        }
        out.truncate(chunks * lc);
        Ok(out)
    }
}
