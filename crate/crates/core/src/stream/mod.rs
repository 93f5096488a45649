//! Chunk-by-chunk inference with carried cache state.

mod run;
mod state;

pub use run::{run_stream, ChunkTiming, SampleSink, SampleSource, SliceSource, StreamSummary};
pub use state::{flush, init_state, process_chunk, StreamEngine, StreamState};
