//! Binary weight container, little-endian throughout:
//!
//! ```text
//! magic "NAW1" | version u16 | config_len u16 | config u32 x N
//! tensor_count u32 | activation_count u32
//! tensor table:     name_len u16, name, dtype u8, ndim u8, dims u32 x ndim,
//!                   spec_offset u64 (u64::MAX if none), data_offset u64, byte_len u64
//! activation table: name_len u16, name, spec_offset u64
//! spec records:     scheme u8, bits u8, qmin i32, qmax i32, zero_point i32,
//!                   n_scales u32, scales f64 x n_scales
//! payload
//! ```
//!
//! Offsets are absolute file positions.

use std::path::Path;

use crate::dsp::FramingConfig;
use crate::error::{Error, Result};
use crate::model::{Activation, ModelConfig, Tensor, TensorData, WeightStore};
use crate::quant::{ActivationSpecs, QuantSpec, Scheme};

pub const MAGIC: &[u8; 4] = b"NAW1";
pub const VERSION: u16 = 1;
const NO_SPEC: u64 = u64::MAX;

/// Everything needed to run a model: configuration, weights and (for int8
/// layers) calibrated activation specs.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub config: ModelConfig,
    pub weights: WeightStore,
    pub activations: ActivationSpecs,
}

fn cfg_words(cfg: &ModelConfig) -> Vec<u32> {
    let f = &cfg.framing;
    [
        f.sample_rate as usize,
        f.lookback,
        f.chunk,
        f.lookahead,
        cfg.n_blocks,
        cfg.channels,
        cfg.hidden,
        cfg.freq_compress,
        cfg.enc_kernel.0,
        cfg.enc_kernel.1,
        cfg.dec_kernel.0,
        cfg.dec_kernel.1,
        match cfg.encoder_activation {
            Activation::None => 0,
            Activation::Tanh => 1,
        },
        usize::from(cfg.pre_emphasis),
    ]
    .iter()
    .map(|&v| v as u32)
    .collect()
}

fn cfg_from_words(w: &[u32]) -> Result<ModelConfig> {
    if w.len() != 14 {
        return Err(Error::Container(format!("config block has {} fields, expected 14", w.len())));
    }
    let u = |i: usize| w[i] as usize;
    let cfg = ModelConfig {
        framing: FramingConfig {
            sample_rate: w[0],
            lookback: u(1),
            chunk: u(2),
            lookahead: u(3),
        },
        n_blocks: u(4),
        channels: u(5),
        hidden: u(6),
        freq_compress: u(7),
        enc_kernel: (u(8), u(9)),
        dec_kernel: (u(10), u(11)),
        encoder_activation: match w[12] {
            0 => Activation::None,
            1 => Activation::Tanh,
            v => return Err(Error::Container(format!("unknown activation code {v}"))),
        },
        pre_emphasis: match w[13] {
            0 => false,
            1 => true,
            v => return Err(Error::Container(format!("invalid pre-emphasis flag {v}"))),
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn spec_bytes(spec: &QuantSpec) -> Vec<u8> {
    let mut b = Vec::with_capacity(18 + 8 * spec.scales.len());
    b.push(match spec.scheme {
        Scheme::PerTensorAffine => 0,
        Scheme::PerChannelSymmetric => 1,
    });
    b.push(spec.bits);
    b.extend(spec.qmin.to_le_bytes());
    b.extend(spec.qmax.to_le_bytes());
    b.extend(spec.zero_point.to_le_bytes());
    b.extend((spec.scales.len() as u32).to_le_bytes());
    for s in &spec.scales {
        b.extend(s.to_le_bytes());
    }
    b
}

fn put_name(out: &mut Vec<u8>, name: &str) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::Container(format!("name too long: {name}")))?;
    out.extend(len.to_le_bytes());
    out.extend(name.as_bytes());
    Ok(())
}

fn table_entry_len(name: &str, t: &Tensor) -> usize {
    2 + name.len() + 2 + 4 * t.shape.len() + 24
}

impl Container {
    pub fn new(config: ModelConfig, weights: WeightStore, activations: ActivationSpecs) -> Result<Self> {
        weights.validate(&config)?;
        Ok(Self {
            config,
            weights,
            activations,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let words = cfg_words(&self.config);
        let mut header = Vec::new();
        header.extend(MAGIC);
        header.extend(VERSION.to_le_bytes());
        header.extend(((4 * words.len()) as u16).to_le_bytes());
        for w in &words {
            header.extend(w.to_le_bytes());
        }
        header.extend((self.weights.tensors.len() as u32).to_le_bytes());
        header.extend((self.activations.sites.len() as u32).to_le_bytes());

        let tables_len: usize = self
            .weights
            .tensors
            .iter()
            .map(|(n, t)| table_entry_len(n, t))
            .sum::<usize>()
            + self.activations.sites.keys().map(|n| 2 + n.len() + 8).sum::<usize>();

        // spec section, tensor specs first then activation specs
        let mut specs = Vec::new();
        let spec_base = header.len() + tables_len;
        let mut tensor_spec_off = Vec::new();
        for t in self.weights.tensors.values() {
            match &t.data {
                TensorData::I8 { spec, .. } => {
                    tensor_spec_off.push((spec_base + specs.len()) as u64);
                    specs.extend(spec_bytes(spec));
                }
                _ => tensor_spec_off.push(NO_SPEC),
            }
        }
        let mut act_spec_off = Vec::new();
        for spec in self.activations.sites.values() {
            act_spec_off.push((spec_base + specs.len()) as u64);
            specs.extend(spec_bytes(spec));
        }

        let mut payload = Vec::new();
        let payload_base = spec_base + specs.len();
        let mut out = header;
        for ((name, t), spec_off) in self.weights.tensors.iter().zip(&tensor_spec_off) {
            let data_off = (payload_base + payload.len()) as u64;
            let dtype = match &t.data {
                TensorData::F32(v) => {
                    v.iter().for_each(|x| payload.extend(x.to_le_bytes()));
                    0u8
                }
                TensorData::Bf16(v) => {
                    v.iter().for_each(|x| payload.extend(x.to_le_bytes()));
                    1
                }
                TensorData::I8 { data, .. } => {
                    payload.extend(data.iter().map(|&x| x as u8));
                    2
                }
            };
            put_name(&mut out, name)?;
            out.push(dtype);
            out.push(u8::try_from(t.shape.len()).map_err(|_| Error::Container(format!("{name}: too many dims")))?);
            for &d in &t.shape {
                out.extend((d as u32).to_le_bytes());
            }
            out.extend(spec_off.to_le_bytes());
            out.extend(data_off.to_le_bytes());
            out.extend((t.payload_bytes() as u64).to_le_bytes());
        }
        for (name, off) in self.activations.sites.keys().zip(&act_spec_off) {
            put_name(&mut out, name)?;
            out.extend(off.to_le_bytes());
        }
        debug_assert_eq!(out.len(), spec_base);
        out.extend(specs);
        out.extend(payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Container("bad magic".into()));
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let cfg_len = r.u16()? as usize;
        if cfg_len % 4 != 0 {
            return Err(Error::Container(format!("config block of {cfg_len} bytes")));
        }
        let words = (0..cfg_len / 4).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let config = cfg_from_words(&words)?;
        let n_tensors = r.u32()? as usize;
        let n_acts = r.u32()? as usize;

        struct Entry {
            name: String,
            dtype: u8,
            shape: Vec<usize>,
            spec: u64,
            data: u64,
            len: u64,
        }
        let mut entries = Vec::new();
        for _ in 0..n_tensors {
            let name = r.name()?;
            let dtype = r.u8()?;
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            entries.push(Entry {
                name,
                dtype,
                shape,
                spec: r.u64()?,
                data: r.u64()?,
                len: r.u64()?,
            });
        }
        let mut acts = Vec::new();
        for _ in 0..n_acts {
            let name = r.name()?;
            acts.push((name, r.u64()?));
        }
        let tables_end = r.pos;

        // every region must lie past the tables, inside the file, and not
        // overlap any other
        let mut regions: Vec<(u64, u64, String)> = Vec::new();
        let mut read_spec = |off: u64, owner: &str| -> Result<QuantSpec> {
            let mut s = Reader::at(bytes, off, owner)?;
            let scheme = match s.u8()? {
                0 => Scheme::PerTensorAffine,
                1 => Scheme::PerChannelSymmetric,
                v => return Err(Error::Container(format!("{owner}: unknown scheme {v}"))),
            };
            let bits = s.u8()?;
            let (qmin, qmax, zero_point) = (s.i32()?, s.i32()?, s.i32()?);
            let n = s.u32()? as usize;
            let scales = (0..n).map(|_| s.f64()).collect::<Result<Vec<_>>>()?;
            regions.push((off, s.pos as u64 - off, format!("{owner} spec")));
            let spec = QuantSpec {
                bits,
                scheme,
                scales,
                zero_point,
                qmin,
                qmax,
            };
            spec.validate()?;
            Ok(spec)
        };
        let mut weights = WeightStore::default();
        let mut pending = Vec::new();
        for e in &entries {
            let spec = if e.spec == NO_SPEC { None } else { Some(read_spec(e.spec, &e.name)?) };
            pending.push(spec);
        }
        let mut activations = ActivationSpecs::default();
        for (name, off) in &acts {
            let spec = read_spec(*off, name)?;
            activations.insert(name.clone(), spec);
        }
        for (e, spec) in entries.iter().zip(pending) {
            let numel: usize = e.shape.iter().product();
            let width = match e.dtype {
                0 => 4,
                1 => 2,
                2 => 1,
                v => return Err(Error::Container(format!("{}: unknown dtype {v}", e.name))),
            };
            if e.len != (numel * width) as u64 {
                return Err(Error::Container(format!(
                    "{}: {} payload bytes for shape {:?}",
                    e.name, e.len, e.shape
                )));
            }
            let raw = Reader::at(bytes, e.data, &e.name)?.take(e.len as usize)?;
            regions.push((e.data, e.len, e.name.clone()));
            let data = match (e.dtype, spec) {
                (0, None) => TensorData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
                (1, None) => TensorData::Bf16(raw.chunks_exact(2).map(|c| u16::from_le_bytes(c.try_into().unwrap())).collect()),
                (2, Some(spec)) => TensorData::I8 {
                    data: raw.iter().map(|&b| b as i8).collect(),
                    spec,
                },
                (2, None) => return Err(Error::Container(format!("{}: int8 tensor without spec", e.name))),
                (_, Some(_)) => return Err(Error::Container(format!("{}: spec on a float tensor", e.name))),
                _ => unreachable!(),
            };
            if weights.tensors.contains_key(&e.name) {
                return Err(Error::Container(format!("duplicate tensor {}", e.name)));
            }
            weights.insert(e.name.clone(), Tensor { shape: e.shape.clone(), data });
        }
        if activations.len() != acts.len() {
            return Err(Error::Container("duplicate activation site".into()));
        }
        regions.sort_by_key(|r| r.0);
        let mut end = tables_end as u64;
        for (off, len, name) in &regions {
            if *off < end {
                return Err(Error::Container(format!("{name} overlaps the preceding region")));
            }
            end = off + len;
        }
        weights.validate(&config)?;
        Ok(Self {
            config,
            weights,
            activations,
        })
    }

    /// Write to `path` and return the number of bytes on disk.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<usize> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, &bytes)?;
        Ok(bytes.len())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn at(bytes: &'a [u8], off: u64, owner: &str) -> Result<Self> {
        let pos = usize::try_from(off)
            .ok()
            .filter(|&p| p <= bytes.len())
            .ok_or_else(|| Error::Container(format!("{owner}: offset {off} past end of file")))?;
        Ok(Self { bytes, pos })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Container(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn name(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Container("name is not UTF-8".into()))
    }
}
