use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use streamse::quant::PrecisionMode;

mod commands;

use commands::CliError;

/// Streaming speech enhancement with mixed-precision inference.
#[derive(Debug, Parser)]
#[command(name = "streamse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a randomly initialized model container.
    Init(InitArgs),
    /// Enhance a WAV file chunk by chunk.
    Enhance(EnhanceArgs),
    /// Calibrate activation ranges over a directory of WAV files.
    Calibrate(CalibrateArgs),
    /// Time the streaming engine on synthetic noise.
    Bench(BenchArgs),
    /// Run the invariant self-checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Engine configuration JSON (model, precision plan, bench options).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Zero every bias.
    #[arg(long)]
    pub zero_bias: bool,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Overrides the mode from --config.
    #[arg(long)]
    pub mode: Option<PrecisionMode>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub audio_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Storage precision of the written weights.
    #[arg(long, default_value = "mixed")]
    pub mode: PrecisionMode,
    /// Calibration report path (defaults to `<out>.calibration.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model container; a seeded random reference model when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long)]
    pub mode: Option<PrecisionMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub config: ConfigArg,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
    /// Corrupt the synthesis window in the reconstruction check.
    #[arg(long)]
    pub corrupt_window: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Init(a) => commands::init(&a),
        Command::Enhance(a) => commands::enhance(&a),
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Verify(a) => commands::verify(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
