//! Post-training calibration of activation ranges.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Network, Probe, Side, WeightStore};
use crate::quant::{ObserverState, Precision, PrecisionPlan, QuantSpec, Scheme};

/// Per-tensor activation specs keyed by site (`{layer}.in`, `{layer}.out`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpecs {
    pub sites: BTreeMap<String, QuantSpec>,
}

impl ActivationSpecs {
    pub fn get(&self, site: &str) -> Result<&QuantSpec> {
        self.sites
            .get(site)
            .ok_or_else(|| Error::config(format!("no activation spec for site {site}")))
    }

    pub fn insert(&mut self, site: impl Into<String>, spec: QuantSpec) {
        self.sites.insert(site.into(), spec);
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// One line of the calibration report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub site: String,
    pub alpha: f64,
    pub beta: f64,
    pub scales: Vec<f64>,
    pub zero_point: i32,
    pub scheme: Scheme,
}

/// Calibration output: specs plus the observed ranges behind them.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub specs: ActivationSpecs,
    pub rows: Vec<CalibrationRow>,
}

#[derive(Default)]
struct RangeProbe {
    ranges: BTreeMap<(usize, bool), (f64, f64)>,
}

impl Probe<f32> for RangeProbe {
    fn record(&mut self, layer: usize, side: Side, values: &[f32]) {
        let Some((lo, hi)) = crate::quant::min_max(values) else {
            return;
        };
        let e = self
            .ranges
            .entry((layer, side == Side::Output))
            .or_insert((lo, hi));
        e.0 = e.0.min(lo);
        e.1 = e.1.max(hi);
    }
}

/// Observe every activation site of the int8 layers in `plan` over a float
/// forward pass of each clip, folding one min/max per clip into a moving
/// average observer.
pub fn calibrate(
    cfg: &ModelConfig,
    store: &WeightStore,
    plan: &PrecisionPlan,
    clips: &[Vec<f32>],
    momentum: f64,
) -> Result<Calibration> {
    if clips.is_empty() {
        return Err(Error::config("calibration needs at least one clip"));
    }
    if !(momentum > 0.0 && momentum <= 1.0) {
        return Err(Error::config(format!("observer momentum {momentum} outside (0, 1]")));
    }
    plan.validate(cfg)?;
    let net = Network::<f32>::float(cfg, store)?;
    let names: Vec<String> = net.layers().iter().map(|d| d.name.clone()).collect();
    let mut observers: BTreeMap<(usize, bool), ObserverState> = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        if plan.get(name)? == Precision::Int8 {
            observers.insert((i, false), ObserverState::new(momentum));
            observers.insert((i, true), ObserverState::new(momentum));
        }
    }
    for clip in clips {
        let mut probe = RangeProbe::default();
        net.forward_offline_probed(clip, &mut probe)?;
        for (key, obs) in observers.iter_mut() {
            if let Some(&(lo, hi)) = probe.ranges.get(key) {
                obs.observe_range(lo, hi);
            }
        }
    }
    let mut specs = ActivationSpecs::default();
    let mut rows = Vec::with_capacity(observers.len());
    for ((layer, out), obs) in observers {
        let site = format!("{}.{}", names[layer], if out { "out" } else { "in" });
        if !obs.initialized {
            return Err(Error::config(format!("site {site} was never reached")));
        }
        let spec = QuantSpec::affine(obs.alpha, obs.beta, 8);
        rows.push(CalibrationRow {
            site: site.clone(),
            alpha: obs.alpha,
            beta: obs.beta,
            scales: spec.scales.clone(),
            zero_point: spec.zero_point,
            scheme: spec.scheme,
        });
        specs.insert(site, spec);
    }
    Ok(Calibration { specs, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_init;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            n_blocks: 1,
            channels: 4,
            hidden: 4,
            ..ModelConfig::default()
        }
    }

    fn clip(seed: u64, n: usize, amp: f32) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
    }

    #[test]
    fn empty_set_is_rejected() {
        let cfg = small();
        let store = random_init(&cfg, 1).unwrap();
        let plan = PrecisionPlan::uniform(&cfg, Precision::Int8);
        assert!(calibrate(&cfg, &store, &plan, &[], 0.9).is_err());
    }

    #[test]
    fn zero_clip_gives_widened_specs() {
        let cfg = small();
        let mut store = random_init(&cfg, 1).unwrap();
        store.zero_biases();
        let plan = PrecisionPlan::uniform(&cfg, Precision::Int8);
        let cal = calibrate(&cfg, &store, &plan, &[vec![0.0; 960]], 0.9).unwrap();
        assert_eq!(cal.specs.len(), 2 * cfg.layer_paths().len());
        let enc = cal.specs.get("encoder.in").unwrap();
        assert!(enc.scales[0] > 0.0 && enc.scales[0].is_finite());
    }

    #[test]
    fn two_clips_follow_moving_average() {
        let cfg = small();
        let store = random_init(&cfg, 2).unwrap();
        let plan = PrecisionPlan::mixed(&cfg);
        let clips = [clip(1, 1920, 0.5), clip(2, 1920, 0.1)];
        let cal = calibrate(&cfg, &store, &plan, &clips, 0.9).unwrap();

        // per-clip ranges through a single-clip run each
        let per_clip: Vec<Calibration> = clips
            .iter()
            .map(|c| calibrate(&cfg, &store, &plan, std::slice::from_ref(c), 1.0).unwrap())
            .collect();
        for row in &cal.rows {
            let a = per_clip[0].rows.iter().find(|r| r.site == row.site).unwrap();
            let b = per_clip[1].rows.iter().find(|r| r.site == row.site).unwrap();
            let alpha = a.alpha + 0.9 * (b.alpha - a.alpha);
            let beta = a.beta + 0.9 * (b.beta - a.beta);
            assert!((row.alpha - alpha).abs() < 1e-12, "{}", row.site);
            assert!((row.beta - beta).abs() < 1e-12, "{}", row.site);
        }
        assert!(cal.specs.get("encoder.in").is_err());
        assert!(cal.specs.get("block.0.temporal.proj.out").is_ok());
    }
}
