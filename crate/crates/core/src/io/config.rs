use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DEFAULT_RESOLUTIONS;
use crate::model::ModelConfig;
use crate::quant::{Precision, PrecisionMode, PrecisionPlan, DEFAULT_MOMENTUM};

/// JSON schema describing [`EngineConfig`] documents.
pub const ENGINE_CONFIG_SCHEMA: &str = include_str!("../../schema/engine_config.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchOptions {
    pub seconds: f64,
    pub seed: u64,
    /// Standard deviation of the synthetic white-noise input.
    pub noise_std: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            seconds: 10.0,
            seed: 0,
            noise_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricOptions {
    /// `(fft_size, hop)` pairs for the multi-resolution STFT loss.
    pub resolutions: Vec<(usize, usize)>,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            resolutions: DEFAULT_RESOLUTIONS.to_vec(),
        }
    }
}

/// Top-level engine configuration, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub model: ModelConfig,
    pub mode: PrecisionMode,
    /// Per-layer precision overrides applied on top of `mode`.
    pub overrides: BTreeMap<String, Precision>,
    pub observer_momentum: f64,
    pub bench: BenchOptions,
    pub metrics: MetricOptions,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            mode: PrecisionMode::Mixed,
            overrides: BTreeMap::new(),
            observer_momentum: DEFAULT_MOMENTUM,
            bench: BenchOptions::default(),
            metrics: MetricOptions::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.plan()?;
        if !(self.observer_momentum > 0.0 && self.observer_momentum <= 1.0) {
            return Err(Error::config(format!(
                "observer_momentum {} outside (0, 1]",
                self.observer_momentum
            )));
        }
        if !(self.bench.seconds > 0.0 && self.bench.seconds.is_finite()) {
            return Err(Error::config(format!("bench.seconds {} must be positive", self.bench.seconds)));
        }
        if !(self.bench.noise_std >= 0.0 && self.bench.noise_std.is_finite()) {
            return Err(Error::config("bench.noise_std must be a finite non-negative number"));
        }
        if self.metrics.resolutions.is_empty() {
            return Err(Error::config("metrics.resolutions must not be empty"));
        }
        if let Some(&(n, h)) = self.metrics.resolutions.iter().find(|(n, h)| *n == 0 || *h == 0 || h > n) {
            return Err(Error::config(format!("invalid resolution ({n}, {h})")));
        }
        Ok(())
    }

    /// The precision plan: `mode` with `overrides` applied.
    pub fn plan(&self) -> Result<PrecisionPlan> {
        let mut plan = PrecisionPlan::from_mode(&self.model, self.mode);
        for (layer, p) in &self.overrides {
            if !plan.layers.contains_key(layer) {
                return Err(Error::config(format!("override for unknown layer {layer}")));
            }
            plan.layers.insert(layer.clone(), *p);
        }
        plan.validate(&self.model)?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn default_round_trips() {
        let cfg = EngineConfig::default();
        assert_eq!(EngineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert_eq!(EngineConfig::from_json("{}").unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_documents() {
        for doc in [
            r#"{"colour": 1}"#,
            r#"{"model": {"n_blocks": 6}}"#,
            r#"{"mode": "int4"}"#,
            r#"{"observer_momentum": 0}"#,
            r#"{"overrides": {"nope": "int8"}}"#,
            r#"{"bench": {"seconds": -1, "seed": 0, "noise_std": 0.1}}"#,
            r#"{"metrics": {"resolutions": []}}"#,
            "not json",
        ] {
            assert!(matches!(EngineConfig::from_json(doc), Err(Error::Config(_))), "{doc}");
        }
        let mut cfg = EngineConfig::default();
        cfg.model.framing.sample_rate = 48_000;
        assert!(EngineConfig::from_json(&cfg.to_json()).is_err());
    }

    #[test]
    fn overrides_apply() {
        let cfg = EngineConfig::from_json(r#"{"mode": "f32", "overrides": {"decoder": "bf16"}}"#).unwrap();
        let plan = cfg.plan().unwrap();
        assert_eq!(plan.get("decoder").unwrap(), Precision::Bf16);
        assert_eq!(plan.get("encoder").unwrap(), Precision::F32);
    }

    // every key the serializer emits is described by the schema and vice versa
    fn check(schema: &Value, doc: &Value, at: &str) {
        match doc {
            Value::Object(_) if schema["additionalProperties"].is_object() => {}
            Value::Object(map) => {
                let props = schema["properties"].as_object().unwrap_or_else(|| panic!("{at}: no properties"));
                let mut a: Vec<&String> = props.keys().collect();
                let mut b: Vec<&String> = map.keys().collect();
                a.sort();
                b.sort();
                assert_eq!(a, b, "{at}");
                assert_eq!(schema["additionalProperties"], Value::Bool(false), "{at}");
                for (k, v) in map {
                    check(&props[k], v, &format!("{at}.{k}"));
                }
            }
            _ => assert!(schema.get("type").is_some() || schema.get("enum").is_some(), "{at}: untyped"),
        }
    }

    #[test]
    fn schema_matches_serializer() {
        let schema: Value = serde_json::from_str(ENGINE_CONFIG_SCHEMA).unwrap();
        let doc = serde_json::to_value(EngineConfig::default()).unwrap();
        check(&schema, &doc, "$");
    }
}
