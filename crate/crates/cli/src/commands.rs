use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;
use streamse::io::{read_wav, Container, EngineConfig, WavSink, WavSource};
use streamse::model::{random_init, ModelConfig, Network, WeightStore};
use streamse::quant::{calibrate as run_calibration, ActivationSpecs, Precision, PrecisionMode, PrecisionPlan};
use streamse::signalgen::white_noise;
use streamse::stream::{run_stream, SliceSource, StreamEngine};
use streamse::verify::{run_all, VerifyOptions};
use streamse::Error;

use crate::{BenchArgs, CalibrateArgs, ConfigArg, EnhanceArgs, InitArgs, VerifyArgs};

/// Failure with its process exit code: 1 usage, 2 I/O, 3 configuration.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn io(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn check(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Wav(_) | Error::Stream { .. } | Error::Container(_) | Error::Signal(_) => 2,
            Error::Config(_) | Error::Json(_) | Error::Shape(_) | Error::DegenerateRange { .. } => 3,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult = Result<(), CliError>;

fn engine_config(arg: &ConfigArg) -> Result<EngineConfig, CliError> {
    match &arg.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            Ok(EngineConfig::from_json(&text)?)
        }
        None => Ok(EngineConfig::default()),
    }
}

/// The engine config's plan, rebased onto the model stored in a container.
fn plan_for(engine: &EngineConfig, model: &ModelConfig, mode: Option<PrecisionMode>) -> Result<PrecisionPlan, CliError> {
    let cfg = EngineConfig {
        model: *model,
        mode: mode.unwrap_or(engine.mode),
        ..engine.clone()
    };
    cfg.validate()?;
    Ok(cfg.plan()?)
}

fn load_container(path: &Path) -> Result<Container, CliError> {
    Container::load(path).map_err(|e| match e {
        Error::Io(io) => CliError::io(format!("{}: {io}", path.display())),
        other => CliError::from(other),
    })
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json serializes"));
}

pub fn init(args: &InitArgs) -> CliResult {
    let engine = engine_config(&args.config)?;
    let mut store = random_init(&engine.model, args.seed)?;
    if args.zero_bias {
        store.zero_biases();
    }
    let params = store.parameter_count();
    let bytes = Container::new(engine.model, store, ActivationSpecs::default())?.save(&args.out)?;
    print_json(&json!({
        "out": args.out,
        "parameters": params,
        "bytes": bytes,
    }));
    Ok(())
}

pub fn enhance(args: &EnhanceArgs) -> CliResult {
    let engine = engine_config(&args.config)?;
    let mut source = WavSource::open(&args.input)?;
    let samples = source.len();
    let container = load_container(&args.weights)?;
    let plan = plan_for(&engine, &container.config, args.mode)?;
    let net = Network::<f32>::build(&container.config, &container.weights, &plan, Some(&container.activations))?;
    let mut sink = WavSink::create(&args.out)?;
    let mut stream = StreamEngine::new(Arc::new(net))?;
    let mut timings = Vec::new();
    let summary = run_stream(&mut stream, &mut source, &mut sink, &mut timings)?;
    sink.finalize()?;
    print_json(&json!({
        "mode": args.mode.unwrap_or(engine.mode).to_string(),
        "samples": samples,
        "latency_samples": container.config.framing.latency(),
        "summary": summary,
    }));
    Ok(())
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(e.to_string()))?.path();
        let is_wav = path
            .extension()
            .is_some_and(|x| x.eq_ignore_ascii_case("wav"));
        if is_wav && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::io(format!("no .wav files in {}", dir.display())));
    }
    Ok(files)
}

pub fn calibrate(args: &CalibrateArgs) -> CliResult {
    let engine = engine_config(&args.config)?;
    let container = load_container(&args.weights)?;
    let cfg = container.config;
    let files = wav_files(&args.audio_dir)?;
    let clips = files
        .iter()
        .map(|p| read_wav(p).map(|c| c.samples))
        .collect::<Result<Vec<_>, _>>()?;
    // every site, so the container serves any precision plan
    let all = PrecisionPlan::uniform(&cfg, Precision::Int8);
    let cal = run_calibration(&cfg, &container.weights, &all, &clips, engine.observer_momentum)?;
    let storage = plan_for(&engine, &cfg, Some(args.mode))?;
    let weights = container.weights.quantize_for_plan(&cfg, &storage)?;
    let bytes = Container::new(cfg, weights, cal.specs)?.save(&args.out)?;
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.calibration.json", args.out.display())));
    let report = serde_json::to_string_pretty(&cal.rows).expect("rows serialize");
    std::fs::write(&report_path, report).map_err(|e| CliError::io(format!("{}: {e}", report_path.display())))?;
    print_json(&json!({
        "clips": clips.len(),
        "sites": cal.rows.len(),
        "out": args.out,
        "bytes": bytes,
        "report": report_path,
    }));
    Ok(())
}

/// Calibrate on a few seconds of synthetic noise when the container lacks
/// activation specs for the plan.
fn ensure_specs(
    cfg: &ModelConfig,
    store: &WeightStore,
    plan: &PrecisionPlan,
    acts: ActivationSpecs,
    engine: &EngineConfig,
) -> Result<ActivationSpecs, CliError> {
    let missing = plan
        .layers
        .iter()
        .filter(|(_, p)| **p == Precision::Int8)
        .any(|(path, _)| acts.get(&format!("{path}.in")).is_err() || acts.get(&format!("{path}.out")).is_err());
    if !missing {
        return Ok(acts);
    }
    log::info!("no activation specs for the plan, calibrating on synthetic noise");
    let clips: Vec<Vec<f32>> = (0..4)
        .map(|i| white_noise(16_000, engine.bench.noise_std, engine.bench.seed.wrapping_add(100 + i)))
        .collect();
    Ok(run_calibration(cfg, store, plan, &clips, engine.observer_momentum)?.specs)
}

pub fn bench(args: &BenchArgs) -> CliResult {
    let mut engine = engine_config(&args.config)?;
    if let Some(s) = args.seconds {
        engine.bench.seconds = s;
    }
    if let Some(s) = args.seed {
        engine.bench.seed = s;
    }
    if let Some(m) = args.mode {
        engine.mode = m;
    }
    engine.validate()?;
    let (cfg, store, acts) = match &args.weights {
        Some(path) => {
            let c = load_container(path)?;
            (c.config, c.weights, c.activations)
        }
        None => (engine.model, random_init(&engine.model, engine.bench.seed)?, ActivationSpecs::default()),
    };
    let plan = plan_for(&engine, &cfg, None)?;
    let acts = ensure_specs(&cfg, &store, &plan, acts, &engine)?;
    let net = Network::<f32>::build(&cfg, &store, &plan, Some(&acts))?;
    let n = (engine.bench.seconds * f64::from(cfg.framing.sample_rate)).round() as usize;
    let input = white_noise(n, engine.bench.noise_std, engine.bench.seed);
    let mut stream = StreamEngine::new(Arc::new(net))?;
    let mut out = Vec::with_capacity(n);
    let mut timings = Vec::new();
    let summary = run_stream(&mut stream, &mut SliceSource::new(&input), &mut out, &mut timings)?;
    print_json(&json!({
        "mode": engine.mode.to_string(),
        "seconds": engine.bench.seconds,
        "chunks": summary.chunks,
        "p50_ms": summary.p50_ms,
        "p95_ms": summary.p95_ms,
        "max_ms": summary.max_ms,
        "rtf": summary.rtf,
    }));
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> CliResult {
    let opts = VerifyOptions {
        seeds: args.seeds,
        seconds: args.seconds,
        corrupt_window: args.corrupt_window,
    };
    let checks = run_all(&opts);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::check(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
