//! `evdn`: synthesize, label, train, filter, evaluate and benchmark event
//! streams from the command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "evdn", version, about = "Event-camera denoising toolkit")]
pub struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory that receives every output and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Configuration override, `key=value`; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Event file format; inferred from the extension when omitted.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,

    /// Sensor size as WIDTHxHEIGHT. Defaults to 346x260; `label` falls back to the
    /// frame size and `synth` to the scene size.
    #[arg(long, global = true)]
    pub sensor: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatArg {
    Csv,
    Bin,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Seq,
    Batch,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labeled synthetic scene with frames.
    Synth(SynthArgs),
    /// Label events against intensity frames.
    Label(LabelArgs),
    /// Train the graph classifier on labeled streams.
    Train(TrainArgs),
    /// Run a denoiser over a stream and write its decisions.
    Filter(FilterArgs),
    /// Score decisions against ground truth.
    Eval(EvalArgs),
    /// Time denoisers in sequential and batch mode.
    Bench(BenchArgs),
    /// Metric tables, series and memory accounting for several runs.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene file; mutually exclusive with --preset.
    #[arg(long, conflicts_with = "preset")]
    pub scene: Option<PathBuf>,
    /// Built-in scene: light.750lux or light.5lux.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value = "events.bin")]
    pub out_events: PathBuf,
    #[arg(long, default_value = "frames")]
    pub out_frames: PathBuf,
    #[arg(long, default_value = "manifest.csv")]
    pub manifest: PathBuf,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Directory of `<timestamp>.pgm` frames.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long, default_value = "labeled.bin")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labeled event streams; samples are split evenly among them.
    #[arg(long, required = true, num_args = 1..)]
    pub events: Vec<PathBuf>,
    #[arg(long, default_value = "model.ckpt")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    /// ba, nnb, liu1, liu2, khodamoradi, yang or gnnt.
    #[arg(long)]
    pub algo: String,
    #[arg(long)]
    pub events: PathBuf,
    /// Checkpoint for `gnnt`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "batch")]
    pub mode: ModeArg,
    #[arg(long, default_value = "decisions.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Labeled events the decisions refer to.
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub decisions: PathBuf,
    /// Run id used in output file names.
    #[arg(long, default_value = "eval")]
    pub name: String,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Algorithms to time; every conventional filter (plus gnnt with
    /// --model) when omitted.
    #[arg(long)]
    pub algo: Vec<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Time only the first N events.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value = "timing.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// `name=path` pairs of decision files.
    #[arg(long = "decisions", value_name = "NAME=PATH")]
    pub decisions: Vec<String>,
    /// Checkpoint whose parameter count goes into the memory table.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "report")]
    pub run_id: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
