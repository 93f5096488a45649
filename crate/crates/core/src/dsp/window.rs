use crate::dsp::FramingConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Unnormalized synthesis window over the post-discard segment of
/// `chunk + lookahead` samples: one on `[lookahead, chunk)`, and
/// `1 / (floor((chunk + lookback) / chunk) + 1)` elsewhere.
pub fn raw_synthesis_window<T: Scalar>(cfg: &FramingConfig) -> Result<Vec<T>> {
    if cfg.chunk <= cfg.lookahead {
        return Err(Error::config(format!(
            "synthesis window needs chunk > lookahead, got {} <= {}",
            cfg.chunk, cfg.lookahead
        )));
    }
    let off = T::one() / T::lit(((cfg.chunk + cfg.lookback) / cfg.chunk + 1) as f64);
    Ok((0..cfg.synthesis_len())
        .map(|i| {
            if (cfg.lookahead..cfg.chunk).contains(&i) {
                T::one()
            } else {
                off
            }
        })
        .collect())
}

/// Sum of every hop-shifted copy of `raw` at each window offset.
pub fn cola_coverage<T: Scalar>(cfg: &FramingConfig, raw: &[T]) -> Result<Vec<T>> {
    let len = cfg.synthesis_len();
    if raw.len() != len {
        return Err(Error::shape(format!(
            "synthesis window has {} taps, expected {len}",
            raw.len()
        )));
    }
    let hop = cfg.chunk;
    let coverage: Vec<T> = (0..len)
        .map(|t| {
            // offsets congruent to t modulo the hop
            let mut s = T::zero();
            let mut u = t % hop;
            while u < len {
                s = s + raw[u];
                u += hop;
            }
            s
        })
        .collect();
    if let Some(t) = coverage.iter().position(|c| *c <= T::zero()) {
        return Err(Error::config(format!("zero window coverage at offset {t}")));
    }
    Ok(coverage)
}

/// Synthesis window normalized so that hop-shifted copies sum to one.
pub fn synthesis_window<T: Scalar>(cfg: &FramingConfig) -> Result<Vec<T>> {
    let raw = raw_synthesis_window::<T>(cfg)?;
    let coverage = cola_coverage(cfg, &raw)?;
    Ok(raw.iter().zip(&coverage).map(|(w, c)| *w / *c).collect())
}
