use proptest::prelude::*;
use streamse::dsp::FramingConfig;
use streamse::io::Container;
use streamse::metrics::sisdr;
use streamse::model::{random_init, ModelConfig};
use streamse::quant::{bf16_round, fake_quant_value, ActivationSpecs, QuantSpec};
use streamse::verify::cola_error;

proptest! {
    #[test]
    fn synthesis_windows_overlap_add_to_one(chunk in 2usize..200, ahead in 0usize..200, back in 0usize..200) {
        let cfg = FramingConfig::new(back, chunk, ahead % chunk).unwrap();
        prop_assert!(cola_error(&cfg).unwrap() <= 1e-9);
    }

    #[test]
    fn fake_quant_within_half_step(lo in -8.0f64..-0.01, hi in 0.01f64..8.0, t in 0.0f64..1.0, affine: bool) {
        let spec = if affine { QuantSpec::affine(lo, hi, 8) } else { QuantSpec::symmetric(lo, hi, 8) };
        let s = spec.scales[0];
        let (a, b) = (s * f64::from(spec.qmin - spec.zero_point), s * f64::from(spec.qmax - spec.zero_point));
        let r = a + t * (b - a);
        prop_assert!((fake_quant_value(r, s, &spec) - r).abs() <= 0.5 * s * (1.0 + 1e-9));
    }

    #[test]
    fn bf16_rounding_is_idempotent(x in proptest::num::f32::NORMAL) {
        let once = bf16_round(x);
        prop_assert_eq!(bf16_round(once).to_bits(), once.to_bits());
    }

    #[test]
    fn sisdr_ignores_estimate_scale(seed in 0u64..1000, gain in 0.01f64..100.0) {
        let s: Vec<f64> = streamse::signalgen::white_noise(512, 1.0, seed).iter().map(|&v| f64::from(v)).collect();
        let e: Vec<f64> = streamse::signalgen::white_noise(512, 1.0, seed + 1)
            .iter()
            .zip(&s)
            .map(|(&n, v)| v + 0.3 * f64::from(n))
            .collect();
        let scaled: Vec<f64> = e.iter().map(|v| v * gain).collect();
        prop_assert!((sisdr(&scaled, &s).unwrap() - sisdr(&e, &s).unwrap()).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn container_round_trips(seed: u64, blocks in 1usize..3) {
        let cfg = ModelConfig { n_blocks: blocks, channels: 8, hidden: 8, ..ModelConfig::default() };
        let c = Container::new(cfg, random_init(&cfg, seed).unwrap(), ActivationSpecs::default()).unwrap();
        let back = Container::from_bytes(&c.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}
