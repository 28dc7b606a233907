//! `msia`: synthesize datasets, train, evaluate, ablate, predict and report.

mod commands;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msia_matte::compositor::Split;
use msia_matte::model::AblationVariant;
use msia_matte::MattingError;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "MSIA_OUTPUT_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Matting(#[from] MattingError),
    #[error("{0}")]
    Usage(String),
    #[error("{failed} composite(s) could not be produced; see {report}")]
    SynthFailures { failed: usize, report: PathBuf },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Matting(e) if !e.is_input_error() => 3,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "msia", version, about = "Trimap-free alpha matting toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
pub struct Common {
    /// Training configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Configuration override `key=value`; repeatable, wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Root for default output locations.
    #[arg(long, global = true, env = OUTPUT_ROOT_VAR, default_value = "msia-runs")]
    pub output_root: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Composite foregrounds over backgrounds and write a manifest.
    Synth(SynthArgs),
    /// Train a model described by the configuration.
    Train(TrainArgs),
    /// Score a checkpoint or a directory of predictions against a manifest.
    Eval(EvalArgs),
    /// Train and evaluate all four ablation variants.
    Ablate(AblateArgs),
    /// Predict the alpha matte of a single image.
    Predict(PredictArgs),
    /// Render metric reports as a table and bar charts.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Directory of foreground images.
    #[arg(long, requires_all = ["alpha_dir", "bg_dir"], conflicts_with = "shapes")]
    pub fg_dir: Option<PathBuf>,
    /// Directory of alpha mattes, paired with foregrounds by file stem.
    #[arg(long)]
    pub alpha_dir: Option<PathBuf>,
    /// Directory of background images.
    #[arg(long)]
    pub bg_dir: Option<PathBuf>,
    /// Generate this many procedural foregrounds instead of reading directories.
    #[arg(long)]
    pub shapes: Option<usize>,
    /// Number of procedural backgrounds.
    #[arg(long, default_value_t = 8)]
    pub backgrounds: usize,
    /// Side length of procedural assets.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Composites per foreground.
    #[arg(long, default_value_t = 1)]
    pub per_fg: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "train")]
    pub split: Split,
    /// Output directory; defaults to `<output-root>/data`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Output directory; defaults to `<output-root>/train/<variant>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Manifest of the evaluation split.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint to run on every record.
    #[arg(
        long,
        conflicts_with = "predictions",
        required_unless_present = "predictions"
    )]
    pub checkpoint: Option<PathBuf>,
    /// Directory of `{key}.png` predictions.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Require the checkpoint to hold this variant.
    #[arg(long, requires = "checkpoint")]
    pub variant: Option<AblationVariant>,
    /// Skip records without a prediction instead of failing.
    #[arg(long)]
    pub exclude_missing: bool,
    /// Also write the checkpoint's predictions as PNGs here.
    #[arg(long, requires = "checkpoint")]
    pub save_predictions: Option<PathBuf>,
    /// Label stored in the report.
    #[arg(long)]
    pub label: Option<String>,
    /// Report path; defaults to `<output-root>/eval/report.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Manifest scored after training; defaults to the configured eval
    /// manifest, then the training manifest.
    #[arg(long)]
    pub eval_manifest: Option<PathBuf>,
    /// Output directory; defaults to `<output-root>/ablation`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Alpha PNG; defaults to `<output-root>/predict/<stem>_alpha.png`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Side-by-side preview: input, alpha, and the input over a checkerboard.
    #[arg(long)]
    pub preview: Option<PathBuf>,
    /// Require the checkpoint to hold this variant.
    #[arg(long)]
    pub variant: Option<AblationVariant>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Report JSON files.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Write one bar chart per metric into this directory.
    #[arg(long)]
    pub charts: Option<PathBuf>,
    /// Also write the table to this file.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(&cli.common, a),
        Command::Train(a) => commands::train(&cli.common, a),
        Command::Eval(a) => commands::eval(&cli.common, a),
        Command::Ablate(a) => commands::ablate(&cli.common, a),
        Command::Predict(a) => commands::predict(&cli.common, a),
        Command::Report(a) => commands::report(&cli.common, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
