//! Self-checks of the numeric invariants, shared by the `verify` CLI command.
//!
//! Each check is independent and reports a one-line detail.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::{synthesis_window, FramingConfig, Stft};
use crate::error::Result;
use crate::metrics::{mrstft_loss, sisdr, sisdri, DEFAULT_RESOLUTIONS};
use crate::model::{random_init, ModelConfig, Network, Probe, Side};
use crate::quant::{
    calibrate, dequantize, fake_quant_value, lsq_grad_scale, q_conv1d, q_deconv1d, q_matmul, quantize,
    quantize_bias, quantizer_grads, PrecisionMode, PrecisionPlan, QuantSpec, QuantizedTensor, Scheme,
    DEFAULT_MOMENTUM,
};
use crate::signalgen::white_noise;
use crate::stream::{init_state, process_chunk, StreamEngine};

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Seeds for the streaming/offline comparison.
    pub seeds: u64,
    /// Signal length of the signal-level checks.
    pub seconds: f64,
    /// Replace the synthesis window with a corrupted one in the
    /// reconstruction check (it is then expected to fail).
    pub corrupt_window: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seeds: 10,
            seconds: 1.0,
            corrupt_window: false,
        }
    }
}

pub fn run_all(opts: &VerifyOptions) -> Vec<Check> {
    vec![
        Check::from_result("reconstruction", reconstruction(opts.seconds, opts.corrupt_window)),
        Check::from_result("corrupt_window_detected", corrupt_window_detected(opts.seconds)),
        Check::from_result("stream_equals_offline", stream_equals_offline(opts.seeds, opts.seconds)),
        Check::from_result("quant_bounds", Ok(quant_bounds(2000))),
        Check::from_result("quantizer_gradients", Ok(quantizer_gradients(1000))),
        Check::from_result("integer_kernels", integer_kernels(100)),
        Check::from_result("cola", cola(20)),
        Check::from_result("metrics", metric_properties()),
        Check::from_result("plan_integrity", plan_integrity()),
    ]
}

const TOL: f64 = 1e-5;

fn identity_config() -> ModelConfig {
    ModelConfig {
        pre_emphasis: false,
        ..ModelConfig::default()
    }
}

/// Largest `|y[n] - x[n - latency]|` of a chunk-by-chunk pass.
fn delayed_identity_error(net: &Network<f32>, x: &[f32]) -> Result<f64> {
    let cfg = net.config();
    let mut state = init_state::<f32>(cfg)?;
    let mut y = Vec::with_capacity(x.len());
    for chunk in x.chunks_exact(cfg.framing.chunk) {
        y.extend(process_chunk(net, &mut state, chunk)?);
    }
    let d = cfg.framing.latency();
    Ok((d..y.len())
        .map(|n| f64::from((y[n] - x[n - d]).abs()))
        .fold(0.0, f64::max))
}

fn test_signal(seconds: f64, seed: u64) -> Vec<f32> {
    white_noise((seconds * 16_000.0) as usize, 0.3, seed)
}

fn corrupted_window(cfg: &FramingConfig) -> Result<Vec<f32>> {
    let mut w = synthesis_window::<f32>(cfg)?;
    let mid = w.len() / 2;
    w[mid] *= 1.1;
    Ok(w)
}

fn reconstruction(seconds: f64, corrupt: bool) -> Result<(bool, String)> {
    let cfg = identity_config();
    let net = if corrupt {
        Network::passthrough_with(&cfg, Stft::with_window(cfg.framing, corrupted_window(&cfg.framing)?)?)?
    } else {
        Network::<f32>::passthrough(&cfg)?
    };
    let err = delayed_identity_error(&net, &test_signal(seconds, 7))?;
    Ok((err <= TOL, format!("max error {err:.3e} (tol {TOL:.0e})")))
}

fn corrupt_window_detected(seconds: f64) -> Result<(bool, String)> {
    let (ok, detail) = reconstruction(seconds, true)?;
    Ok((!ok, format!("corrupted window: {detail}")))
}

fn stream_equals_offline(seeds: u64, seconds: f64) -> Result<(bool, String)> {
    let cfg = ModelConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let store = random_init(&cfg, seed)?;
        let net = Arc::new(Network::<f32>::float(&cfg, &store)?);
        let x = test_signal(seconds, 1000 + seed);
        let offline = net.forward_offline(&x)?;
        let mut engine = StreamEngine::new(Arc::clone(&net))?;
        let mut streamed = Vec::with_capacity(offline.len());
        for chunk in x.chunks_exact(cfg.framing.chunk) {
            streamed.extend(engine.process(chunk)?);
        }
        let err = streamed
            .iter()
            .zip(&offline)
            .map(|(a, b)| f64::from((a - b).abs()))
            .fold(0.0, f64::max);
        if streamed.len() != offline.len() {
            return Ok((false, format!("seed {seed}: {} vs {} samples", streamed.len(), offline.len())));
        }
        worst = worst.max(err);
    }
    Ok((worst <= TOL, format!("{seeds} seeds, max difference {worst:.3e}")))
}

fn random_spec(rng: &mut ChaCha8Rng) -> QuantSpec {
    let lo = -rng.gen_range(0.01..4.0);
    let hi = rng.gen_range(0.01..4.0);
    if rng.gen_bool(0.5) {
        QuantSpec::affine(lo, hi, 8)
    } else {
        QuantSpec::symmetric(lo, hi, 8)
    }
}

/// Inside the representable range fake quantization moves a value by at
/// most half a step; per-channel specs have a zero zero-point.
pub fn quant_bounds(points: usize) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut zp_ok = true;
    for _ in 0..50 {
        let spec = random_spec(&mut rng);
        if spec.scheme == Scheme::PerChannelSymmetric && spec.zero_point != 0 {
            zp_ok = false;
        }
        let s = spec.scales[0];
        let lo = s * f64::from(spec.qmin - spec.zero_point);
        let hi = s * f64::from(spec.qmax - spec.zero_point);
        for i in 0..points / 50 {
            let r = lo + (hi - lo) * (i as f64 + 0.5) / (points / 50) as f64;
            worst = worst.max((fake_quant_value(r, s, &spec) - r).abs() / s);
        }
    }
    (
        worst <= 0.5 + 1e-9 && zp_ok,
        format!("max error {worst:.6} steps, per-channel zero-points {}", if zp_ok { "zero" } else { "NONZERO" }),
    )
}

/// Fraction of `v` away from the nearest rounding boundary.
fn boundary_distance(v: f64) -> f64 {
    (v - v.floor() - 0.5).abs()
}

/// Central differences of the straight-through surrogate
/// `S * (r / S + d)` (in range) or `S * (q_bound - Z)` (clamped), with the
/// rounding residual `d` frozen at the evaluation point.
pub fn quantizer_gradients(points: usize) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < points {
        let spec = random_spec(&mut rng);
        let s0 = spec.scales[0] * rng.gen_range(0.5..2.0);
        let span = s0 * f64::from(spec.qmax - spec.qmin);
        let r0 = rng.gen_range(-span..span);
        let v0 = r0 / s0;
        if boundary_distance(v0) < 0.01 {
            continue;
        }
        let delta = crate::scalar::round_half_even(v0) - v0;
        let q0 = crate::scalar::round_half_even(v0) + f64::from(spec.zero_point);
        let bound = if q0 < f64::from(spec.qmin) {
            Some(spec.qmin)
        } else if q0 > f64::from(spec.qmax) {
            Some(spec.qmax)
        } else {
            None
        };
        let surrogate = |r: f64, s: f64| match bound {
            Some(b) => s * f64::from(b - spec.zero_point),
            None => s * (r / s + delta),
        };
        // the surrogate agrees with the real quantizer at the point itself
        if (surrogate(r0, s0) - fake_quant_value(r0, s0, &spec)).abs() > 1e-9 * s0.max(1.0) * 128.0 {
            return (false, format!("surrogate disagrees with the quantizer at r={r0}, S={s0}"));
        }
        let h = 1e-6 * s0;
        let dr = (surrogate(r0 + h, s0) - surrogate(r0 - h, s0)) / (2.0 * h);
        let ds = (surrogate(r0, s0 + h) - surrogate(r0, s0 - h)) / (2.0 * h);
        let numel = 64;
        let g = quantizer_grads(r0, s0, &spec, numel);
        let gs = g.scale / lsq_grad_scale(numel, spec.qmax);
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-2);
        worst = worst.max(rel(dr, g.input)).max(rel(ds, gs));
        done += 1;
    }
    (worst <= 1e-3, format!("{points} points, max relative error {worst:.3e}"))
}

fn random_values(rng: &mut ChaCha8Rng, n: usize, amp: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
}

fn output_spec(reference: &[f64]) -> QuantSpec {
    let lo = reference.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    QuantSpec::affine(lo.min(0.0), hi.max(0.0), 8)
}

/// Integer matmul, convolution and transposed convolution against a float
/// reference on the dequantized operands.
pub fn integer_kernels(layers: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for i in 0..layers {
        let cin = rng.gen_range(1..16);
        let cout = rng.gen_range(1..16);
        let len = rng.gen_range(1..12);
        let kw = rng.gen_range(1..4);
        let amp = rng.gen_range(0.1..3.0);
        let xv = random_values(&mut rng, cin * len, amp);
        let xs = QuantSpec::affine(
            f64::from(xv.iter().copied().fold(0.0, f32::min)),
            f64::from(xv.iter().copied().fold(0.0, f32::max)),
            8,
        );
        let kind = i % 3;
        let wshape = if kind == 0 { vec![cout, cin] } else { vec![cout, cin, kw] };
        let wv = random_values(&mut rng, wshape.iter().product(), 0.5);
        let ws = QuantSpec::per_channel_from(&wv, cout, 8)?;
        let bv = random_values(&mut rng, cout, 0.3);
        let w = quantize(&wv, &wshape, &ws)?;
        let bq = quantize_bias(&bv, xs.scales[0], &ws);
        let wd = dequantize::<f64>(&w);
        let bd: Vec<f64> = (0..cout).map(|c| f64::from(bq[c]) * xs.scales[0] * ws.scales[c]).collect();
        let (xq, reference, run): (QuantizedTensor, Vec<f64>, Box<dyn Fn(&QuantizedTensor, &QuantSpec) -> Result<QuantizedTensor>>);
        match kind {
            0 => {
                // rows of x are `len` independent inputs of width `cin`
                xq = quantize(&xv, &[len, cin], &xs)?;
                let xd = dequantize::<f64>(&xq);
                reference = (0..len)
                    .flat_map(|n| {
                        let (xd, wd, bd) = (&xd, &wd, &bd);
                        (0..cout).map(move |c| (0..cin).map(|k| xd[n * cin + k] * wd[c * cin + k]).sum::<f64>() + bd[c])
                    })
                    .collect();
                let (w, bq) = (w.clone(), bq.clone());
                run = Box::new(move |x, s| q_matmul(x, &w, &bq, s));
            }
            1 => {
                let pad = rng.gen_range(0..kw);
                xq = quantize(&xv, &[cin, len], &xs)?;
                let xd = dequantize::<f64>(&xq);
                let lout = (len + 2 * pad + 1).saturating_sub(kw);
                if lout == 0 {
                    continue;
                }
                let mut r = vec![0.0; cout * lout];
                for co in 0..cout {
                    for t in 0..lout {
                        let mut acc = bd[co];
                        for c in 0..cin {
                            for j in 0..kw {
                                let p = t + j;
                                if p >= pad && p - pad < len {
                                    acc += wd[(co * cin + c) * kw + j] * xd[c * len + p - pad];
                                }
                            }
                        }
                        r[co * lout + t] = acc;
                    }
                }
                reference = r;
                let (w, bq) = (w.clone(), bq.clone());
                run = Box::new(move |x, s| q_conv1d(x, &w, &bq, 1, pad, s));
            }
            _ => {
                let stride = rng.gen_range(1..3);
                xq = quantize(&xv, &[cin, len], &xs)?;
                let xd = dequantize::<f64>(&xq);
                let lout = (len - 1) * stride + kw;
                let mut r = vec![0.0; cout * lout];
                for co in 0..cout {
                    r[co * lout..(co + 1) * lout].fill(bd[co]);
                    for c in 0..cin {
                        for t in 0..len {
                            for j in 0..kw {
                                r[co * lout + t * stride + j] += wd[(co * cin + c) * kw + j] * xd[c * len + t];
                            }
                        }
                    }
                }
                reference = r;
                let (w, bq) = (w.clone(), bq.clone());
                run = Box::new(move |x, s| q_deconv1d(x, &w, &bq, stride, s));
            }
        }
        let ys = output_spec(&reference);
        let y = dequantize::<f64>(&run(&xq, &ys)?);
        let step = ys.scales[0];
        for (a, b) in y.iter().zip(&reference) {
            worst = worst.max((a - b).abs() / step);
        }
    }
    Ok((worst <= 1.0, format!("{layers} layers, max error {worst:.3} output steps")))
}

/// Hop-shifted synthesis windows sum to one for the default framing and
/// `triples` random ones.
pub fn cola(triples: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cfgs = vec![FramingConfig::default()];
    while cfgs.len() < triples + 1 {
        let chunk = rng.gen_range(2..256);
        let lookahead = rng.gen_range(0..chunk);
        let lookback = rng.gen_range(0..256);
        cfgs.push(FramingConfig::new(lookback, chunk, lookahead)?);
    }
    let mut worst = 0.0f64;
    for cfg in &cfgs {
        worst = worst.max(cola_error(cfg)?);
    }
    Ok((worst <= 1e-7, format!("{} framings, max deviation {worst:.3e}", cfgs.len())))
}

/// Largest deviation from one of the overlap-added windows away from the
/// edges of a long line.
pub fn cola_error(cfg: &FramingConfig) -> Result<f64> {
    let w = synthesis_window::<f64>(cfg)?;
    let hop = cfg.chunk;
    let n = 8 * w.len() + 8 * hop;
    let mut acc = vec![0.0; n];
    let mut start = 0;
    while start + w.len() <= n {
        for (i, v) in w.iter().enumerate() {
            acc[start + i] += v;
        }
        start += hop;
    }
    Ok(acc[w.len()..start]
        .iter()
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max))
}

fn metric_properties() -> Result<(bool, String)> {
    let s: Vec<f64> = white_noise(16_000, 1.0, 21).iter().map(|&v| f64::from(v)).collect();
    let raw: Vec<f64> = white_noise(16_000, 1.0, 22).iter().map(|&v| f64::from(v)).collect();
    // noise orthogonal to s at exactly 10 dB
    let ss: f64 = s.iter().map(|v| v * v).sum();
    let proj: f64 = raw.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / ss;
    let mut n: Vec<f64> = raw.iter().zip(&s).map(|(a, b)| a - proj * b).collect();
    let nn: f64 = n.iter().map(|v| v * v).sum();
    let g = (ss / nn / 10.0).sqrt();
    n.iter_mut().for_each(|v| *v *= g);
    let est: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + b).collect();
    let ten = sisdr(&est, &s)?;
    let scaled: Vec<f64> = est.iter().map(|v| v * 3.7).collect();
    let invariance = (sisdr(&scaled, &s)? - ten).abs();
    let zero_gain = sisdri(&est, &est, &s)?.abs();
    let self_loss = mrstft_loss(&s, &s, &DEFAULT_RESOLUTIONS)?;
    let ok = (ten - 10.0).abs() <= 1e-4 && invariance <= 1e-9 && zero_gain <= 1e-12 && self_loss.abs() <= 1e-12;
    Ok((
        ok,
        format!(
            "10 dB case {ten:.4} dB, scale change {invariance:.1e}, sisdri(mix) {zero_gain:.1e}, self mrstft {self_loss:.1e}"
        ),
    ))
}

#[derive(Default)]
struct TouchProbe {
    seen: BTreeSet<usize>,
}

impl Probe<f32> for TouchProbe {
    fn record(&mut self, layer: usize, side: Side, _: &[f32]) {
        if side == Side::Input {
            self.seen.insert(layer);
        }
    }
}

/// A small mixed network runs every layer at its planned precision.
fn plan_integrity() -> Result<(bool, String)> {
    let cfg = ModelConfig {
        n_blocks: 2,
        channels: 8,
        hidden: 8,
        ..ModelConfig::default()
    };
    let store = random_init(&cfg, 1)?;
    let plan = PrecisionPlan::from_mode(&cfg, PrecisionMode::Mixed);
    let clips = vec![test_signal(0.25, 31), test_signal(0.25, 32)];
    let cal = calibrate(&cfg, &store, &plan, &clips, DEFAULT_MOMENTUM)?;
    let q = store.quantize_for_plan(&cfg, &plan)?;
    let net = Network::<f32>::build(&cfg, &q, &plan, Some(&cal.specs))?;
    let layers = net.layers();
    let names: Vec<&str> = layers.iter().map(|d| d.name.as_str()).collect();
    if names != cfg.layer_paths() {
        return Ok((false, "execution order differs from the layer list".into()));
    }
    for d in &layers {
        if d.precision() != plan.get(&d.name)? {
            return Ok((false, format!("{} runs in {:?}", d.name, d.precision())));
        }
    }
    let mut probe = TouchProbe::default();
    net.forward_offline_probed(&test_signal(0.1, 33), &mut probe)?;
    let ids: BTreeSet<usize> = layers.iter().map(|d| d.id).collect();
    let ok = ids.len() == layers.len() && probe.seen == ids;
    Ok((ok, format!("{} layers, {} reached", layers.len(), probe.seen.len())))
}
