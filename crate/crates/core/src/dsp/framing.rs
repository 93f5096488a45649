use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Chunk geometry of the streaming front end.
///
/// Each analysis frame is `[lookback | chunk | lookahead]` samples long and
/// consecutive frames advance by one chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FramingConfig {
    pub sample_rate: u32,
    pub lookback: usize,
    pub chunk: usize,
    pub lookahead: usize,
}

impl Default for FramingConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            lookback: 96,
            chunk: 96,
            lookahead: 64,
        }
    }
}

impl FramingConfig {
    pub const SAMPLE_RATE: u32 = 16_000;

    pub fn new(lookback: usize, chunk: usize, lookahead: usize) -> Result<Self> {
        let cfg = Self {
            sample_rate: Self::SAMPLE_RATE,
            lookback,
            chunk,
            lookahead,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != Self::SAMPLE_RATE {
            return Err(Error::config(format!(
                "sample rate {} Hz is not supported (only {} Hz)",
                self.sample_rate,
                Self::SAMPLE_RATE
            )));
        }
        if self.chunk <= self.lookahead {
            return Err(Error::config(format!(
                "chunk ({}) must be longer than lookahead ({})",
                self.chunk, self.lookahead
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn fft_size(&self) -> usize {
        self.lookback + self.chunk + self.lookahead
    }

    #[inline]
    pub fn n_bins(&self) -> usize {
        self.fft_size() / 2 + 1
    }

    /// Length of the synthesis window (the frame with its lookback discarded).
    #[inline]
    pub fn synthesis_len(&self) -> usize {
        self.chunk + self.lookahead
    }

    /// Algorithmic latency in samples.
    #[inline]
    pub fn latency(&self) -> usize {
        self.chunk + self.lookahead
    }

    /// Wall-clock budget for one chunk.
    pub fn chunk_seconds(&self) -> f64 {
        self.chunk as f64 / self.sample_rate as f64
    }
}
