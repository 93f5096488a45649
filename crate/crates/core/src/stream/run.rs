use std::io;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stream::StreamEngine;

/// Pull-based mono sample input.
pub trait SampleSource {
    /// Fill `buf` from the front and return how many samples were written.
    /// Fewer than `buf.len()` means the stream has ended.
    fn read_chunk(&mut self, buf: &mut [f32]) -> io::Result<usize>;
}

/// Push-based mono sample output.
pub trait SampleSink {
    fn write(&mut self, samples: &[f32]) -> io::Result<()>;
}

/// In-memory source.
#[derive(Debug, Clone)]
pub struct SliceSource<'a> {
    data: &'a [f32],
    pos: usize,
}

impl<'a> SliceSource<'a> {
    pub fn new(data: &'a [f32]) -> Self {
        Self { data, pos: 0 }
    }
}

impl SampleSource for SliceSource<'_> {
    fn read_chunk(&mut self, buf: &mut [f32]) -> io::Result<usize> {
        let n = buf.len().min(self.data.len() - self.pos);
        buf[..n].copy_from_slice(&self.data[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

impl SampleSink for Vec<f32> {
    fn write(&mut self, samples: &[f32]) -> io::Result<()> {
        self.extend_from_slice(samples);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkTiming {
    pub index: usize,
    pub seconds: f64,
    pub deadline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub chunks: usize,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub rtf: f64,
}

impl StreamSummary {
    /// Nearest-rank percentiles over the recorded chunk times.
    pub fn from_timings(timings: &[ChunkTiming]) -> Self {
        if timings.is_empty() {
            return Self {
                chunks: 0,
                p50_ms: 0.0,
                p95_ms: 0.0,
                max_ms: 0.0,
                rtf: 0.0,
            };
        }
        let mut ms: Vec<f64> = timings.iter().map(|t| t.seconds * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let rank = |p: f64| ms[((p * ms.len() as f64).ceil() as usize).clamp(1, ms.len()) - 1];
        let mean = timings.iter().map(|t| t.seconds).sum::<f64>() / timings.len() as f64;
        Self {
            chunks: timings.len(),
            p50_ms: rank(0.5),
            p95_ms: rank(0.95),
            max_ms: ms[ms.len() - 1],
            rtf: mean / timings[0].deadline,
        }
    }
}

/// Drive `engine` over `reader` and write latency-compensated output:
/// the first `latency` samples are dropped and the tail is flushed, so the
/// output has exactly as many samples as the input.
///
/// One timing record is appended per input chunk (a partial last chunk is
/// zero-padded).
pub fn run_stream<T: Scalar, R: SampleSource, W: SampleSink>(
    engine: &mut StreamEngine<T>,
    reader: &mut R,
    writer: &mut W,
    timings: &mut Vec<ChunkTiming>,
) -> Result<StreamSummary> {
    let fr = engine.network().config().framing;
    let (lc, latency) = (fr.chunk, fr.latency());
    let deadline = fr.chunk_seconds();
    let first = timings.len();
    let mut buf = vec![0.0f32; lc];
    let mut chunk = vec![T::zero(); lc];
    let (mut consumed, mut skipped, mut written) = (0usize, 0usize, 0usize);
    let mut emit = |out: &[T], limit: usize, index: usize, skipped: &mut usize, written: &mut usize| -> Result<()> {
        let drop = (latency - *skipped).min(out.len());
        *skipped += drop;
        let take = (out.len() - drop).min(limit - *written);
        if take > 0 {
            let samples: Vec<f32> = out[drop..drop + take].iter().map(|v| v.as_f32()).collect();
            writer
                .write(&samples)
                .map_err(|source| Error::Stream { index, source })?;
            *written += take;
        }
        Ok(())
    };
    let mut index = 0;
    loop {
        let n = reader
            .read_chunk(&mut buf)
            .map_err(|source| Error::Stream { index, source })?;
        if n == 0 {
            break;
        }
        buf[n..].fill(0.0);
        for (c, b) in chunk.iter_mut().zip(&buf) {
            *c = T::lit(f64::from(*b));
        }
        let start = Instant::now();
        let out = engine.process(&chunk)?;
        timings.push(ChunkTiming {
            index,
            seconds: start.elapsed().as_secs_f64(),
            deadline,
        });
        consumed += n;
        emit(&out, consumed, index, &mut skipped, &mut written)?;
        index += 1;
        if n < lc {
            break;
        }
    }
    let tail = engine.flush()?;
    emit(&tail, consumed, index, &mut skipped, &mut written)?;
    Ok(StreamSummary::from_timings(&timings[first..]))
}
