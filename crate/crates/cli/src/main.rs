//! `ircut` command-line driver.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or format error,
//! 4 numeric divergence during training. Log verbosity comes from the
//! `IRCUT_LOG` environment variable (`error`, `warn`, `info`, `debug`).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Seed used by every command when `--seed` is omitted.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Parser, Debug)]
#[command(name = "ircut", version, about = "IR-cut filter design and spectral reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a daylight-lit dataset of spectral cubes.
    Synth(SynthArgs),
    /// Train the filter and network on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test images.
    Eval(EvalArgs),
    /// Render a CSV as an SVG line chart.
    Plot(PlotArgs),
}

/// Inclusive CCT range `start:end:step` in kelvin.
#[derive(Clone, Debug, PartialEq)]
pub struct CctRange(pub Vec<f64>);

fn parse_ccts(s: &str) -> Result<CctRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    let (start, end, step) = match nums[..] {
        [a] => (a, a, 1.0),
        [a, b, c] => (a, b, c),
        _ => return Err("expected START:END:STEP".into()),
    };
    ircut::data::cct_range(start, end, step)
        .map(CctRange)
        .map_err(|e| e.to_string())
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Number of reflectance scenes.
    #[arg(long, default_value_t = 8)]
    scenes: usize,
    /// Daylight CCTs as START:END:STEP (kelvin).
    #[arg(long, default_value = "4000:8000:1000", value_parser = parse_ccts)]
    ccts: CctRange,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Scene side in pixels.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Patch side used for the train/validation split.
    #[arg(long, default_value_t = 32)]
    patch: usize,
    /// Probability that a material has a red edge.
    #[arg(long, default_value_t = 0.5)]
    red_edge: f64,
    /// Leave out the white reference patch.
    #[arg(long)]
    no_white_patch: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ArchChoice {
    Default,
    Compact,
}

/// `none` or a wavelength in nm.
#[derive(Clone, Copy, Debug, PartialEq)]
struct FreezeAbove(Option<f64>);

fn parse_freeze(s: &str) -> Result<FreezeAbove, String> {
    if s == "none" {
        return Ok(FreezeAbove(None));
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(|v| FreezeAbove(Some(v)))
        .ok_or_else(|| format!("expected a wavelength in nm or `none`, got `{s}`"))
}

fn parse_norm(s: &str) -> Result<ircut::model::InputNorm, String> {
    use ircut::model::InputNorm;
    match s {
        "none" => Ok(InputNorm::None),
        "max" => Ok(InputNorm::PerImageMax),
        _ => s
            .strip_prefix("global:")
            .and_then(|k| k.parse::<f64>().ok())
            .filter(|k| *k > 0.0 && k.is_finite())
            .map(InputNorm::Global)
            .ok_or_else(|| format!("expected none, max or global:K, got `{s}`")),
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    illum_branch: Switch,
    /// Freeze the filter at zero above this wavelength, or `none`.
    #[arg(long, default_value = "none", value_parser = parse_freeze)]
    freeze_above_nm: FreezeAbove,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Checkpoint path; history and filter CSVs are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Batches per epoch; defaults to one pass over the training patches.
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long, value_enum, default_value_t = ArchChoice::Default)]
    arch: ArchChoice,
    /// RGB scaling before the network: none, max, or global:K.
    #[arg(long, default_value = "none", value_parser = parse_norm)]
    input_norm: ircut::model::InputNorm,
    /// Filter smoothness weight.
    #[arg(long, default_value_t = 1e-4)]
    alpha2: f64,
    /// Illumination supervision weight.
    #[arg(long, default_value_t = 0.02)]
    alpha3: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the metrics CSVs and summary JSON.
    #[arg(long)]
    report: PathBuf,
    /// Evaluate every image instead of the held-out test set.
    #[arg(long)]
    all: bool,
    /// Score the ground truth against itself instead of the network.
    #[arg(long, hide = true)]
    truth_as_prediction: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PlotKind {
    Filter,
    Illum,
    History,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long, value_enum)]
    what: PlotKind,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] ircut::Error),
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IRCUT_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ircut: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
