use std::fs::File;
use std::io::{self, BufReader, BufWriter};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::stream::{SampleSink, SampleSource};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono 16 kHz audio in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl WavClip {
    pub fn new(samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }
}

fn wav_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Wav(format!("{}: {e}", path.display()))
}

fn io_or_wav(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => wav_err(path, other),
    }
}

#[derive(Debug, Clone, Copy)]
enum Format {
    Pcm16,
    Float32,
}

fn check_spec(path: &Path, spec: &WavSpec) -> Result<Format> {
    if spec.channels != 1 {
        return Err(wav_err(path, format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(wav_err(
            path,
            format!("expected {SAMPLE_RATE} Hz, found {} Hz (no resampling)", spec.sample_rate),
        ));
    }
    match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => Ok(Format::Pcm16),
        (SampleFormat::Float, 32) => Ok(Format::Float32),
        (f, b) => Err(wav_err(path, format!("unsupported sample format {f:?} with {b} bits"))),
    }
}

/// Streaming reader for mono 16 kHz PCM16 or float32 WAV files.
pub struct WavSource {
    reader: WavReader<BufReader<File>>,
    format: Format,
}

impl WavSource {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = WavReader::open(path).map_err(|e| io_or_wav(path, e))?;
        let format = check_spec(path, &reader.spec())?;
        Ok(Self { reader, format })
    }

    /// Samples in the file.
    pub fn len(&self) -> usize {
        self.reader.len() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn to_io(e: hound::Error) -> io::Error {
    match e {
        hound::Error::IoError(io) => io,
        other => io::Error::new(io::ErrorKind::InvalidData, other),
    }
}

impl SampleSource for WavSource {
    fn read_chunk(&mut self, buf: &mut [f32]) -> io::Result<usize> {
        let mut n = 0;
        match self.format {
            Format::Pcm16 => {
                for (slot, s) in buf.iter_mut().zip(self.reader.samples::<i16>()) {
                    *slot = f32::from(s.map_err(to_io)?) / 32768.0;
                    n += 1;
                }
            }
            Format::Float32 => {
                for (slot, s) in buf.iter_mut().zip(self.reader.samples::<f32>()) {
                    *slot = s.map_err(to_io)?;
                    n += 1;
                }
            }
        }
        Ok(n)
    }
}

/// Streaming float32 WAV writer. Call [`WavSink::finalize`] to complete
/// the header.
pub struct WavSink {
    writer: WavWriter<BufWriter<File>>,
}

pub(crate) fn float_spec() -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    }
}

impl WavSink {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let writer = WavWriter::create(path, float_spec()).map_err(|e| io_or_wav(path, e))?;
        Ok(Self { writer })
    }

    pub fn finalize(self) -> Result<()> {
        self.writer.finalize().map_err(|e| match e {
            hound::Error::IoError(io) => Error::Io(io),
            other => Error::Wav(other.to_string()),
        })
    }
}

impl SampleSink for WavSink {
    fn write(&mut self, samples: &[f32]) -> io::Result<()> {
        for &s in samples {
            self.writer.write_sample(s).map_err(to_io)?;
        }
        Ok(())
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WavClip> {
    let mut src = WavSource::open(path)?;
    let mut samples = vec![0.0; src.len()];
    let n = src.read_chunk(&mut samples)?;
    samples.truncate(n);
    Ok(WavClip::new(samples))
}

/// Write `clip` as 32-bit float.
pub fn write_wav(path: impl AsRef<Path>, clip: &WavClip) -> Result<()> {
    let path = path.as_ref();
    if clip.sample_rate != SAMPLE_RATE {
        return Err(wav_err(path, format!("refusing to write {} Hz audio", clip.sample_rate)));
    }
    let mut sink = WavSink::create(path)?;
    sink.write(&clip.samples)?;
    sink.finalize()
}
