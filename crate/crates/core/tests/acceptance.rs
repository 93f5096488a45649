//! Acceptance gate. Every criterion prints one PASS/FAIL line and asserts.
//!
//! The criteria share one lock so the timed ones are not disturbed by the
//! others.

use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use streamse::dsp::{synthesis_window, FramingConfig};
use streamse::io::Container;
use streamse::metrics::{sisdr, sisdri};
use streamse::model::{random_init, ModelConfig, Network, TensorData, WeightStore};
use streamse::quant::{
    calibrate, dequantize, fake_quant, fake_quant_value, lsq_grad_scale, q_conv1d, q_deconv1d, q_matmul, quantize,
    quantize_bias, quantizer_grads, ActivationSpecs, Precision, PrecisionMode, PrecisionPlan, QuantSpec, Scheme,
};
use streamse::stream::{run_stream, SliceSource, StreamEngine};

static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, passed: bool, detail: &str) {
    // written to the process stdout so the line survives output capture
    let line = format!("[{}] criterion {id} {name}: {detail}\n", if passed { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(passed, "criterion {id} ({name}) failed: {detail}");
}

fn gaussian_noise(n: usize, std: f32, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            // Box-Muller
            let u1: f32 = rng.gen_range(f32::EPSILON..1.0);
            let u2: f32 = rng.gen();
            std * (-2.0 * u1.ln()).sqrt() * (std::f32::consts::TAU * u2).cos()
        })
        .collect()
}

fn stream_all(net: &Arc<Network<f32>>, x: &[f32]) -> Vec<f32> {
    let mut engine = StreamEngine::new(Arc::clone(net)).unwrap();
    let mut y = Vec::with_capacity(x.len());
    for chunk in x.chunks_exact(engine.chunk_len()) {
        y.extend(engine.process(chunk).unwrap());
    }
    y
}

#[test]
fn c01_perfect_reconstruction() {
    let _g = gate();
    let cfg = ModelConfig {
        pre_emphasis: false,
        ..ModelConfig::default()
    };
    let net = Arc::new(Network::<f32>::passthrough(&cfg).unwrap());
    let x = gaussian_noise(160_000, 0.3, 1);
    let start = Instant::now();
    let y = stream_all(&net, &x);
    let elapsed = start.elapsed().as_secs_f64();
    // 6 ms chunk plus 4 ms lookahead
    let delay = 160;
    let err = (delay..y.len())
        .map(|n| (y[n] - x[n - delay]).abs())
        .fold(0.0f32, f32::max);
    let head = y[..delay].iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let passed = err <= 1e-5 && head <= 1e-5 && elapsed < 5.0 && y.len() == x.len() / 96 * 96;
    report(
        1,
        "perfect reconstruction",
        passed,
        &format!("max |y[n] - x[n-160]| = {err:.2e}, leading {head:.1e}, {elapsed:.2} s for 10 s"),
    );
}

#[test]
fn c02_streaming_equals_offline() {
    let _g = gate();
    let cfg = ModelConfig::default();
    assert_eq!((cfg.n_blocks, cfg.channels, cfg.hidden, cfg.freq_compress), (6, 32, 32, 4));
    let start = Instant::now();
    let mut worst = 0.0f32;
    for seed in 0..10u64 {
        let store = random_init(&cfg, seed).unwrap();
        let net = Arc::new(Network::<f32>::float(&cfg, &store).unwrap());
        let x = gaussian_noise(160_000, 0.1, 100 + seed);
        let offline = net.forward_offline(&x).unwrap();
        let streamed = stream_all(&net, &x);
        assert_eq!(streamed.len(), offline.len());
        assert!(streamed.iter().all(|v| v.is_finite()));
        let err = streamed
            .iter()
            .zip(&offline)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        worst = worst.max(err);
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        2,
        "streaming equals offline",
        worst <= 1e-5 && elapsed < 120.0,
        &format!("10 seeds x 10 s, max difference {worst:.2e}, {elapsed:.1} s"),
    );
}

fn random_affine(rng: &mut ChaCha8Rng) -> QuantSpec {
    let lo = -rng.gen_range(0.0..5.0);
    let hi = rng.gen_range(0.01..5.0);
    QuantSpec::affine(lo, hi, 8)
}

#[test]
fn c03_quantization_bounds() {
    let _g = gate();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut specs: Vec<QuantSpec> = (0..20).map(|_| random_affine(&mut rng)).collect();
    let weights: Vec<f32> = (0..16 * 24).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let per_channel = QuantSpec::per_channel_from(&weights, 16, 8).unwrap();
    specs.extend(per_channel.scales.iter().map(|&s| QuantSpec {
        scales: vec![s],
        ..per_channel.clone()
    }));
    let mut worst = 0.0f64;
    for spec in &specs {
        let s = spec.scales[0];
        let lo = s * f64::from(spec.qmin - spec.zero_point);
        let hi = s * f64::from(spec.qmax - spec.zero_point);
        // every grid point, midpoint and a fine sweep in between
        let mut grid: Vec<f64> = (spec.qmin..=spec.qmax)
            .flat_map(|q| {
                let r = s * f64::from(q - spec.zero_point);
                [r, r + 0.5 * s, r - 0.5 * s]
            })
            .filter(|r| (lo..=hi).contains(r))
            .collect();
        grid.extend((0..=10_000).map(|i| lo + (hi - lo) * f64::from(i) / 10_000.0));
        let fq = fake_quant(&grid, &[1, grid.len()], spec).unwrap();
        for (r, q) in grid.iter().zip(&fq) {
            worst = worst.max((q - r).abs() / s);
        }
    }

    // every per-channel weight spec of a quantized reference model
    let cfg = ModelConfig::default();
    let plan = PrecisionPlan::from_mode(&cfg, PrecisionMode::Int8);
    let q = random_init(&cfg, 0).unwrap().quantize_for_plan(&cfg, &plan).unwrap();
    let mut zps = vec![per_channel.zero_point];
    for path in cfg.layer_paths() {
        let TensorData::I8 { spec, .. } = &q.get(&format!("{path}.weight")).unwrap().data else {
            panic!("{path} is not stored as int8");
        };
        assert_eq!(spec.scheme, Scheme::PerChannelSymmetric);
        zps.push(spec.zero_point);
    }
    let zero = zps.iter().all(|z| *z == 0);
    report(
        3,
        "quantization bounds",
        worst <= 0.5 + 1e-9 && zero,
        &format!(
            "{} specs, max |fq(r) - r| = {worst:.6} S, {} per-channel specs with Z = 0",
            specs.len(),
            zps.len()
        ),
    );
}

/// `fake_quant` with the rounding residual frozen at `v0 = r0 / S0`.
fn ste_surrogate(r: f64, s: f64, spec: &QuantSpec, v0: f64) -> f64 {
    let code = v0.round_ties_even() + f64::from(spec.zero_point);
    if code < f64::from(spec.qmin) {
        s * f64::from(spec.qmin - spec.zero_point)
    } else if code > f64::from(spec.qmax) {
        s * f64::from(spec.qmax - spec.zero_point)
    } else {
        s * (r / s + (v0.round_ties_even() - v0))
    }
}

#[test]
fn c04_quantizer_gradients() {
    let _g = gate();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut points = 0;
    let mut clamped = 0;
    while points < 1000 {
        let spec = random_affine(&mut rng);
        let s0 = spec.scales[0] * rng.gen_range(0.5..2.0);
        let r0 = rng.gen_range(-300.0 * s0..300.0 * s0);
        let v0 = r0 / s0;
        if ((v0 - v0.floor()) - 0.5).abs() < 0.01 {
            continue;
        }
        // the surrogate is the quantizer at the evaluation point
        assert!((ste_surrogate(r0, s0, &spec, v0) - fake_quant_value(r0, s0, &spec)).abs() <= 1e-9 * s0 * 256.0);
        let h = 1e-5 * s0;
        let fd_r = (ste_surrogate(r0 + h, s0, &spec, v0) - ste_surrogate(r0 - h, s0, &spec, v0)) / (2.0 * h);
        let fd_s = (ste_surrogate(r0, s0 + h, &spec, v0) - ste_surrogate(r0, s0 - h, &spec, v0)) / (2.0 * h);
        let numel = 1 + points;
        let g = quantizer_grads(r0, s0, &spec, numel);
        let g_s = g.scale / lsq_grad_scale(numel, spec.qmax);
        let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(1e-2);
        worst = worst.max(rel(fd_r, g.input)).max(rel(fd_s, g_s));
        if g.input == 0.0 {
            clamped += 1;
        }
        points += 1;
    }
    report(
        4,
        "quantizer gradients",
        worst <= 1e-3 && clamped > 0 && clamped < points,
        &format!("{points} points ({clamped} clamped), max relative error {worst:.2e}"),
    );
}

fn dequantized_bias(bq: &[i32], sx: f64, ws: &QuantSpec) -> Vec<f64> {
    bq.iter()
        .enumerate()
        .map(|(c, &b)| f64::from(b) * sx * ws.scales[c])
        .collect()
}

fn spec_covering(values: &[f64]) -> QuantSpec {
    let lo = values.iter().copied().fold(0.0, f64::min);
    let hi = values.iter().copied().fold(0.0, f64::max);
    QuantSpec::affine(lo, hi, 8)
}

#[test]
fn c05_integer_kernel_fidelity() {
    let _g = gate();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut outputs = 0;
    for layer in 0..100 {
        let (cin, cout) = (rng.gen_range(1..24), rng.gen_range(1..24));
        let (len, kw) = (rng.gen_range(2..16), rng.gen_range(1..5));
        let amp = rng.gen_range(0.05..4.0);
        let xv: Vec<f32> = (0..cin * len).map(|_| rng.gen_range(-amp..amp * 0.7)).collect();
        let xlo = f64::from(xv.iter().copied().fold(f32::INFINITY, f32::min));
        let xhi = f64::from(xv.iter().copied().fold(f32::NEG_INFINITY, f32::max));
        let xs = QuantSpec::affine(xlo.min(0.0), xhi.max(0.0), 8);
        let conv = layer % 3;
        let wshape = if conv == 0 { vec![cout, cin] } else { vec![cout, cin, kw] };
        let wv: Vec<f32> = (0..wshape.iter().product::<usize>()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bv: Vec<f32> = (0..cout).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let ws = QuantSpec::per_channel_from(&wv, cout, 8).unwrap();
        let w = quantize(&wv, &wshape, &ws).unwrap();
        let wd = dequantize::<f64>(&w);
        let bq = quantize_bias(&bv, xs.scales[0], &ws);
        let bd = dequantized_bias(&bq, xs.scales[0], &ws);
        let (got, reference) = match conv {
            0 => {
                let x = quantize(&xv, &[len, cin], &xs).unwrap();
                let xd = dequantize::<f64>(&x);
                let mut r = vec![0.0; len * cout];
                for n in 0..len {
                    for m in 0..cout {
                        r[n * cout + m] = bd[m] + (0..cin).map(|k| xd[n * cin + k] * wd[m * cin + k]).sum::<f64>();
                    }
                }
                let ys = spec_covering(&r);
                (dequantize::<f64>(&q_matmul(&x, &w, &bq, &ys).unwrap()), (r, ys))
            }
            1 => {
                let x = quantize(&xv, &[cin, len], &xs).unwrap();
                let xd = dequantize::<f64>(&x);
                let pad = kw / 2;
                let lout = len + 2 * pad - kw + 1;
                let mut r = vec![0.0; cout * lout];
                for o in 0..cout {
                    for t in 0..lout {
                        let mut acc = bd[o];
                        for c in 0..cin {
                            for j in 0..kw {
                                let p = (t + j) as isize - pad as isize;
                                if p >= 0 && (p as usize) < len {
                                    acc += wd[(o * cin + c) * kw + j] * xd[c * len + p as usize];
                                }
                            }
                        }
                        r[o * lout + t] = acc;
                    }
                }
                let ys = spec_covering(&r);
                (dequantize::<f64>(&q_conv1d(&x, &w, &bq, 1, pad, &ys).unwrap()), (r, ys))
            }
            _ => {
                let stride = 1 + layer % 2;
                let x = quantize(&xv, &[cin, len], &xs).unwrap();
                let xd = dequantize::<f64>(&x);
                let lout = (len - 1) * stride + kw;
                let mut r = vec![0.0; cout * lout];
                for o in 0..cout {
                    for t in 0..lout {
                        let mut acc = bd[o];
                        for c in 0..cin {
                            for i in 0..len {
                                if t >= i * stride && t - i * stride < kw {
                                    acc += wd[(o * cin + c) * kw + t - i * stride] * xd[c * len + i];
                                }
                            }
                        }
                        r[o * lout + t] = acc;
                    }
                }
                let ys = spec_covering(&r);
                (dequantize::<f64>(&q_deconv1d(&x, &w, &bq, stride, &ys).unwrap()), (r, ys))
            }
        };
        let (reference, ys) = reference;
        assert_eq!(got.len(), reference.len());
        for (a, b) in got.iter().zip(&reference) {
            worst = worst.max((a - b).abs() / ys.scales[0]);
        }
        outputs += got.len();
    }
    report(
        5,
        "integer-kernel fidelity",
        worst <= 1.0,
        &format!("100 layers, {outputs} outputs, max error {worst:.3} output steps"),
    );
}

fn overlap_add_deviation(cfg: &FramingConfig) -> f64 {
    let w = synthesis_window::<f64>(cfg).unwrap();
    assert_eq!(w.len(), cfg.chunk + cfg.lookahead);
    let hop = cfg.chunk;
    let frames = 12 + w.len() / hop;
    let mut line = vec![0.0; frames * hop + w.len()];
    for f in 0..frames {
        for (i, v) in w.iter().enumerate() {
            line[f * hop + i] += v;
        }
    }
    // positions covered by every overlapping frame
    line[w.len()..frames * hop]
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

#[test]
fn c06_cola() {
    let _g = gate();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cfgs = vec![FramingConfig::default()];
    while cfgs.len() < 21 {
        let lc = rng.gen_range(2..400);
        let lf = rng.gen_range(0..lc);
        let lb = rng.gen_range(0..400);
        cfgs.push(FramingConfig::new(lb, lc, lf).unwrap());
    }
    let worst = cfgs.iter().map(overlap_add_deviation).fold(0.0, f64::max);
    report(
        6,
        "COLA",
        worst <= 1e-7,
        &format!("default + 20 random framings, max |sum - 1| = {worst:.2e}"),
    );
}

fn noise_clips(n: usize, seconds: f64, seed: u64) -> Vec<Vec<f32>> {
    (0..n)
        .map(|i| gaussian_noise((seconds * 16_000.0) as usize, 0.1, seed + i as u64))
        .collect()
}

fn calibrated(cfg: &ModelConfig, store: &WeightStore, plan: &PrecisionPlan, seed: u64) -> ActivationSpecs {
    calibrate(cfg, store, plan, &noise_clips(2, 0.5, seed), 0.9).unwrap().specs
}

#[test]
fn c07_model_budget() {
    let _g = gate();
    let cfg = ModelConfig::default();
    let store = random_init(&cfg, 0).unwrap();
    let plan = PrecisionPlan::from_mode(&cfg, PrecisionMode::Mixed);
    let acts = calibrated(&cfg, &store, &plan, 70);
    let weights = store.quantize_for_plan(&cfg, &plan).unwrap();
    let container = Container::new(cfg, weights, acts).unwrap();
    let bytes = container.to_bytes().unwrap();
    assert_eq!(Container::from_bytes(&bytes).unwrap(), container);
    let n = bytes.len();
    report(
        7,
        "model budget",
        n < 1_500_000,
        &format!(
            "int8+bf16 container {n} bytes ({:.1} kB; budget 1500 kB; reference design 298.8 kB), {} parameters",
            n as f64 / 1e3,
            store.parameter_count()
        ),
    );
}

#[test]
fn c08_realtime_factor() {
    let _g = gate();
    let cfg = ModelConfig::default();
    let store = random_init(&cfg, 0).unwrap();
    let plan = PrecisionPlan::from_mode(&cfg, PrecisionMode::Mixed);
    let acts = calibrated(&cfg, &store, &plan, 80);
    let net = Network::<f32>::build(&cfg, &store.quantize_for_plan(&cfg, &plan).unwrap(), &plan, Some(&acts)).unwrap();
    let x = gaussian_noise(160_000, 0.1, 81);
    let mut engine = StreamEngine::new(Arc::new(net)).unwrap();
    let (mut y, mut timings) = (Vec::new(), Vec::new());
    let summary = run_stream(&mut engine, &mut SliceSource::new(&x), &mut y, &mut timings).unwrap();
    assert_eq!(y.len(), x.len());
    assert_eq!(summary.chunks, 1667);
    report(
        8,
        "realtime factor",
        summary.rtf < 1.0 && summary.rtf > 0.0,
        &format!(
            "mixed plan, {} chunks, p50 {:.3} ms, p95 {:.3} ms, max {:.3} ms, rtf {:.3}",
            summary.chunks, summary.p50_ms, summary.p95_ms, summary.max_ms, summary.rtf
        ),
    );
}

#[test]
fn c09_metrics() {
    let _g = gate();
    let reference: Vec<f64> = gaussian_noise(32_000, 1.0, 90).iter().map(|&v| f64::from(v)).collect();
    let raw: Vec<f64> = gaussian_noise(32_000, 1.0, 91).iter().map(|&v| f64::from(v)).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let rr = dot(&reference, &reference);
    let k = dot(&raw, &reference) / rr;
    let orth: Vec<f64> = raw.iter().zip(&reference).map(|(n, r)| n - k * r).collect();
    let g = (rr / (10.0 * dot(&orth, &orth))).sqrt();
    let est: Vec<f64> = reference.iter().zip(&orth).map(|(r, n)| r + g * n).collect();

    let ten = sisdr(&est, &reference).unwrap();
    let invariance = [1e-3, 0.25, 2.0, 1e3]
        .iter()
        .map(|a| {
            let scaled: Vec<f64> = est.iter().map(|v| v * a).collect();
            (sisdr(&scaled, &reference).unwrap() - ten).abs()
        })
        .fold(0.0, f64::max);
    let zero = sisdri(&est, &est, &reference).unwrap();
    let passed = (ten - 10.0).abs() <= 1e-4 && invariance <= 1e-6 && zero == 0.0;
    report(
        9,
        "metrics",
        passed,
        &format!("orthogonal 10 dB case {ten:.7} dB, scale drift {invariance:.1e} dB, sisdri(mix, mix) {zero}"),
    );
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(x - y).powi(2)).sum()
}

#[test]
fn c10_mixed_precision_divergence() {
    let _g = gate();
    let cfg = ModelConfig::default();
    let int8 = PrecisionPlan::from_mode(&cfg, PrecisionMode::Int8);
    let mixed = PrecisionPlan::from_mode(&cfg, PrecisionMode::Mixed);
    assert_eq!(mixed.get("encoder").unwrap(), Precision::Bf16);
    assert_eq!(mixed.get("decoder").unwrap(), Precision::Bf16);
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 0..10u64 {
        let store = random_init(&cfg, seed).unwrap();
        let acts = calibrated(&cfg, &store, &int8, 1000 + 10 * seed);
        let x = gaussian_noise(32_000, 0.1, 2000 + seed);
        let reference = Network::<f32>::float(&cfg, &store).unwrap().forward_offline(&x).unwrap();
        let run = |plan: &PrecisionPlan| {
            let q = store.quantize_for_plan(&cfg, plan).unwrap();
            Network::<f32>::build(&cfg, &q, plan, Some(&acts))
                .unwrap()
                .forward_offline(&x)
                .unwrap()
        };
        let d_int8 = squared_distance(&run(&int8), &reference);
        let d_mixed = squared_distance(&run(&mixed), &reference);
        if d_int8 > d_mixed {
            wins += 1;
        }
        lines.push(format!("{:.1}", 10.0 * (d_int8 / d_mixed).log10()));
    }
    report(
        10,
        "mixed-precision divergence",
        wins >= 8,
        &format!(
            "int8 diverges more than mixed on {wins}/10 seeds (excess error dB: {})",
            lines.join(", ")
        ),
    );
}
