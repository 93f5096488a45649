use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::quant::{bf16_bits, bf16_to_f32, dequantize, quantize, Precision, PrecisionPlan, QuantSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    Bf16,
    I8,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    Bf16(Vec<u16>),
    I8 { data: Vec<i8>, spec: QuantSpec },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(shape: Vec<usize>, values: Vec<f32>) -> Self {
        Self {
            shape,
            data: TensorData::F32(values),
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::Bf16(_) => DType::Bf16,
            TensorData::I8 { .. } => DType::I8,
        }
    }

    pub fn payload_bytes(&self) -> usize {
        match &self.data {
            TensorData::F32(v) => 4 * v.len(),
            TensorData::Bf16(v) => 2 * v.len(),
            TensorData::I8 { data, .. } => data.len(),
        }
    }

    /// Values as `f32`, dequantizing or widening as needed.
    pub fn to_f32(&self) -> Vec<f32> {
        match &self.data {
            TensorData::F32(v) => v.clone(),
            TensorData::Bf16(v) => v.iter().map(|&b| bf16_to_f32(b)).collect(),
            TensorData::I8 { data, spec } => dequantize(&crate::quant::QuantizedTensor {
                data: data.clone(),
                shape: self.shape.clone(),
                spec: spec.clone(),
            }),
        }
    }

    fn len_matches(&self) -> bool {
        let n = self.numel();
        match &self.data {
            TensorData::F32(v) => v.len() == n,
            TensorData::Bf16(v) => v.len() == n,
            TensorData::I8 { data, .. } => data.len() == n,
        }
    }
}

/// Named parameter tensors, keyed by canonical path
/// (`block.3.spectral.gru.fwd.ih.weight`, `decoder.bias`, ...).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightStore {
    pub tensors: BTreeMap<String, Tensor>,
}

impl WeightStore {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::shape(format!("missing tensor {name}")))
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn payload_bytes(&self) -> usize {
        self.tensors.values().map(Tensor::payload_bytes).sum()
    }

    /// Check that every layer of `cfg` is present with the derived shape.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        for path in cfg.layer_paths() {
            let shape = cfg.weight_shape(&path).expect("layer paths have shapes");
            let w = self.get(&format!("{path}.weight"))?;
            let b = self.get(&format!("{path}.bias"))?;
            if w.shape != shape || b.shape != [shape[0]] {
                return Err(Error::shape(format!(
                    "{path}: weight {:?} / bias {:?}, expected {shape:?} / [{}]",
                    w.shape, b.shape, shape[0]
                )));
            }
            if !w.len_matches() || !b.len_matches() {
                return Err(Error::shape(format!("{path}: payload length does not match shape")));
            }
            if matches!(b.data, TensorData::I8 { .. }) {
                return Err(Error::shape(format!("{path}: biases must not be int8")));
            }
        }
        if self.tensors.len() != 2 * cfg.layer_paths().len() {
            return Err(Error::shape("weight store holds tensors the model does not use"));
        }
        Ok(())
    }

    pub fn zero_biases(&mut self) {
        for (name, t) in self.tensors.iter_mut() {
            if name.ends_with(".bias") {
                *t = Tensor::f32(t.shape.clone(), vec![0.0; t.numel()]);
            }
        }
    }

    /// Store weights in the plan's storage format: per-channel symmetric
    /// int8 or bfloat16. Biases stay `f32`.
    pub fn quantize_for_plan(&self, cfg: &ModelConfig, plan: &PrecisionPlan) -> Result<WeightStore> {
        plan.validate(cfg)?;
        self.validate(cfg)?;
        let mut out = self.clone();
        for path in cfg.layer_paths() {
            let name = format!("{path}.weight");
            let t = self.get(&name)?;
            let values = t.to_f32();
            let data = match plan.get(&path)? {
                Precision::F32 => TensorData::F32(values),
                Precision::Bf16 => TensorData::Bf16(values.iter().map(|&v| bf16_bits(v)).collect()),
                Precision::Int8 => {
                    let spec = QuantSpec::per_channel_from(&values, t.shape[0], 8)?;
                    let q = quantize(&values, &t.shape, &spec)?;
                    TensorData::I8 { data: q.data, spec }
                }
            };
            out.insert(
                name,
                Tensor {
                    shape: t.shape.clone(),
                    data,
                },
            );
        }
        Ok(out)
    }
}

/// Seeded uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn random_init(cfg: &ModelConfig, seed: u64) -> Result<WeightStore> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::default();
    for path in cfg.layer_paths() {
        let shape = cfg.weight_shape(&path).expect("layer paths have shapes");
        let fan_in: usize = shape[1..].iter().product();
        let bound = 1.0 / (fan_in as f32).sqrt();
        let w: Vec<f32> = (0..shape.iter().product::<usize>())
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let b: Vec<f32> = (0..shape[0]).map(|_| rng.gen_range(-bound..bound)).collect();
        store.insert(format!("{path}.bias"), Tensor::f32(vec![shape[0]], b));
        store.insert(format!("{path}.weight"), Tensor::f32(shape, w));
    }
    Ok(store)
}
