//! Chunked STFT analysis, dual-window overlap-add synthesis and pre-emphasis.

mod emphasis;
mod framing;
mod stft;
mod window;

pub use emphasis::{de_emphasis, pre_emphasis, pre_emphasis_in_place, PRE_EMPHASIS_COEFF};
pub use framing::FramingConfig;
pub use stft::{OlaState, SpectralFrame, Stft};
pub use window::{cola_coverage, raw_synthesis_window, synthesis_window};
