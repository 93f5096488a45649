use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    Bf16,
    Int8,
}

/// Whole-model precision presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionMode {
    F32,
    Bf16,
    Int8,
    /// bfloat16 input convolution and output deconvolution, int8 elsewhere.
    Mixed,
}

impl FromStr for PrecisionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Self::F32),
            "bf16" => Ok(Self::Bf16),
            "int8" => Ok(Self::Int8),
            "mixed" => Ok(Self::Mixed),
            other => Err(Error::config(format!("unknown precision mode {other:?}"))),
        }
    }
}

impl fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::F32 => "f32",
            Self::Bf16 => "bf16",
            Self::Int8 => "int8",
            Self::Mixed => "mixed",
        })
    }
}

/// Precision assignment for every dense layer of the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionPlan {
    pub layers: BTreeMap<String, Precision>,
}

impl PrecisionPlan {
    pub fn uniform(cfg: &ModelConfig, precision: Precision) -> Self {
        Self {
            layers: cfg.layer_paths().into_iter().map(|p| (p, precision)).collect(),
        }
    }

    pub fn mixed(cfg: &ModelConfig) -> Self {
        let mut plan = Self::uniform(cfg, Precision::Int8);
        plan.layers.insert("encoder".into(), Precision::Bf16);
        plan.layers.insert("decoder".into(), Precision::Bf16);
        plan
    }

    pub fn from_mode(cfg: &ModelConfig, mode: PrecisionMode) -> Self {
        match mode {
            PrecisionMode::F32 => Self::uniform(cfg, Precision::F32),
            PrecisionMode::Bf16 => Self::uniform(cfg, Precision::Bf16),
            PrecisionMode::Int8 => Self::uniform(cfg, Precision::Int8),
            PrecisionMode::Mixed => Self::mixed(cfg),
        }
    }

    pub fn get(&self, layer: &str) -> Result<Precision> {
        self.layers
            .get(layer)
            .copied()
            .ok_or_else(|| Error::config(format!("precision plan has no entry for layer {layer}")))
    }

    pub fn needs_int8(&self) -> bool {
        self.layers.values().any(|p| *p == Precision::Int8)
    }

    /// The plan must name exactly the model's layers.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = cfg.layer_paths();
        for path in &expected {
            self.get(path)?;
        }
        if self.layers.len() != expected.len() {
            let extra: Vec<_> = self.layers.keys().filter(|k| !expected.contains(k)).collect();
            return Err(Error::config(format!("precision plan names unknown layers {extra:?}")));
        }
        Ok(())
    }
}
