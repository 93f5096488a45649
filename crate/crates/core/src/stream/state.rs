use std::collections::VecDeque;
use std::sync::Arc;

use crate::dsp::{pre_emphasis_in_place, OlaState, SpectralFrame, PRE_EMPHASIS_COEFF};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Network, NoProbe};
use crate::scalar::Scalar;

/// Everything carried from one chunk to the next.
///
/// `ola` holds the pending overlap of earlier decoder outputs after the
/// inverse transform, so it plays the role of the deconvolution buffer.
#[derive(Debug, Clone)]
pub struct StreamState<T: Scalar> {
    /// Last `fft_size` pre-emphasized input samples.
    pub ring: Vec<T>,
    /// Last `k_t - 1` input spectra for the causal encoder, oldest first.
    pub stft_cache: VecDeque<SpectralFrame<T>>,
    /// Last `k_t - 1` block-stack outputs (`bins x channels`) for the decoder.
    pub block_out_cache: VecDeque<Vec<T>>,
    /// Per-block LSTM `(h, c)`, each `bins x hidden`.
    pub recurrent: Vec<(Vec<T>, Vec<T>)>,
    pub ola: OlaState<T>,
    pub chunk_index: u64,
}

impl<T: Scalar> StreamState<T> {
    /// Bytes held by the state; constant over the life of a stream.
    pub fn size_bytes(&self) -> usize {
        let scalars = self.ring.len()
            + self.stft_cache.iter().map(|f| 2 * f.len()).sum::<usize>()
            + self.block_out_cache.iter().map(Vec::len).sum::<usize>()
            + self.recurrent.iter().map(|(h, c)| h.len() + c.len()).sum::<usize>()
            + self.ola.tail.len()
            + self.ola.coverage.len()
            + 1;
        scalars * std::mem::size_of::<T>() + std::mem::size_of::<u64>()
    }

    pub fn is_finite(&self) -> bool {
        self.recurrent
            .iter()
            .all(|(h, c)| h.iter().chain(c).all(|v| v.is_finite()))
    }
}

/// Zeroed state for `cfg`.
pub fn init_state<T: Scalar>(cfg: &ModelConfig) -> Result<StreamState<T>> {
    cfg.validate()?;
    let nb = cfg.n_bins();
    let recur = nb * cfg.hidden;
    Ok(StreamState {
        ring: vec![T::zero(); cfg.framing.fft_size()],
        stft_cache: (1..cfg.enc_kernel.0).map(|_| SpectralFrame::zeros(nb)).collect(),
        block_out_cache: (1..cfg.dec_kernel.0)
            .map(|_| vec![T::zero(); nb * cfg.channels])
            .collect(),
        recurrent: (0..cfg.n_blocks)
            .map(|_| (vec![T::zero(); recur], vec![T::zero(); recur]))
            .collect(),
        ola: OlaState::new(&cfg.framing)?,
        chunk_index: 0,
    })
}

/// Consume one chunk of raw input and emit one chunk of output.
///
/// The frame analysed for chunk `i` is the ring as it stood before the chunk
/// arrived, so output sample `n` corresponds to input sample `n - latency`.
pub fn process_chunk<T: Scalar>(net: &Network<T>, state: &mut StreamState<T>, chunk: &[T]) -> Result<Vec<T>> {
    let cfg = net.config();
    let lc = cfg.framing.chunk;
    if chunk.len() != lc {
        return Err(Error::Signal(format!("chunk has {} samples, expected {lc}", chunk.len())));
    }
    let spec = net.stft().analysis(&state.ring)?;

    let mut fresh = chunk.to_vec();
    if cfg.pre_emphasis {
        state.ola.emphasis_carry =
            pre_emphasis_in_place(&mut fresh, state.ola.emphasis_carry, T::lit(PRE_EMPHASIS_COEFF));
    }
    state.ring.rotate_left(lc);
    let n = state.ring.len();
    state.ring[n - lc..].copy_from_slice(&fresh);

    let out_spec = if net.is_passthrough() {
        spec.clone()
    } else {
        let (nb, d) = (cfg.n_bins(), cfg.channels);
        let mut x = vec![T::zero(); nb * d];
        {
            let history: Vec<&SpectralFrame<T>> = state.stft_cache.iter().chain([&spec]).collect();
            net.encode_frame(&history, &mut x, &mut NoProbe);
        }
        for (b, (h, c)) in state.recurrent.iter_mut().enumerate() {
            net.spectral_stage(b, &mut x, &mut NoProbe);
            net.temporal_step(b, &mut x, h, c, &mut NoProbe);
        }
        let decoded = {
            let history: Vec<&[T]> = state
                .block_out_cache
                .iter()
                .map(Vec::as_slice)
                .chain([x.as_slice()])
                .collect();
            net.decode_frame(&history, &mut NoProbe)
        };
        if !state.block_out_cache.is_empty() {
            state.block_out_cache.pop_front();
            state.block_out_cache.push_back(x);
        }
        decoded
    };
    if !state.stft_cache.is_empty() {
        state.stft_cache.pop_front();
        state.stft_cache.push_back(spec);
    }
    let out = net.stft().synthesis_chunk(&out_spec, &mut state.ola)?;
    state.chunk_index += 1;
    Ok(out)
}

/// Drain what is still buffered by feeding zero chunks.
///
/// Emits exactly `latency` samples (nothing if no chunk was processed) and
/// resets the state, so a second flush is empty.
pub fn flush<T: Scalar>(net: &Network<T>, state: &mut StreamState<T>) -> Result<Vec<T>> {
    if state.chunk_index == 0 {
        return Ok(Vec::new());
    }
    let fr = net.config().framing;
    let latency = fr.latency();
    let zeros = vec![T::zero(); fr.chunk];
    let mut out = Vec::with_capacity(latency + fr.chunk);
    while out.len() < latency {
        out.extend(process_chunk(net, state, &zeros)?);
    }
    out.truncate(latency);
    *state = init_state(net.config())?;
    Ok(out)
}

/// A network shared behind an `Arc` plus the state of one stream.
#[derive(Debug, Clone)]
pub struct StreamEngine<T: Scalar> {
    net: Arc<Network<T>>,
    state: StreamState<T>,
}

impl<T: Scalar> StreamEngine<T> {
    pub fn new(net: Arc<Network<T>>) -> Result<Self> {
        let state = init_state(net.config())?;
        Ok(Self { net, state })
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn state(&self) -> &StreamState<T> {
        &self.state
    }

    pub fn chunk_len(&self) -> usize {
        self.net.config().framing.chunk
    }

    pub fn process(&mut self, chunk: &[T]) -> Result<Vec<T>> {
        process_chunk(&self.net, &mut self.state, chunk)
    }

    pub fn flush(&mut self) -> Result<Vec<T>> {
        flush(&self.net, &mut self.state)
    }

    pub fn reset(&mut self) -> Result<()> {
        self.state = init_state(self.net.config())?;
        Ok(())
    }
}
