//! The `lesionseg` command line.
//!
//! Every subcommand reads from and writes to one run directory (`--out`):
//!
//! ```text
//! <out>/run_manifest.json              configuration and seeds of every stage run
//! <out>/preprocessed/{images,masks/<L>} cropped dataset              (preprocess)
//! <out>/splits/<L>/manifest.tsv        train/validation/test split   (split)
//! <out>/augmented/<L>/manifest.tsv     split plus augmented copies   (augment)
//! <out>/models/<L>/model.ckpt          best checkpoint, epoch_log.jsonl,
//!                                      loss_curve.png, config.toml   (train)
//! <out>/eval/<L>/report.json           metrics, roc.csv, per_image.tsv (evaluate)
//! <out>/predictions/<L>/<stem>.png     binary masks, prob/ and input/ (infer)
//! <out>/fused/<stem>_labels.png        class bitmask image, overlays (fuse)
//! <out>/report/{summary.json,table.md} all classes side by side      (report)
//! ```
//!
//! Each stage directory carries a `stage.json` stamp. Re-running a stage with
//! the same settings is a no-op; different settings need `--force`, which
//! rebuilds the directory from scratch.
//!
//! Exit status is 0 on success, 1 when a stage fails and 2 on usage errors.

mod commands;
pub mod stage;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::LesionClass;
use crate::metrics::Aggregation;

/// Overrides the dataset root when `--root` is not given.
pub const DATA_ROOT_ENV: &str = "LESIONSEG_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(name = "lesionseg", version, about = "Diabetic retinopathy lesion segmentation pipeline")]
pub struct Cli {
    /// Run directory that holds every artifact.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Overwrite a completed stage whose settings changed.
    #[arg(long, global = true)]
    pub force: bool,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crop the dark surround off every image and its masks.
    Preprocess(PreprocessArgs),
    /// Split each lesion's image/mask pairs into train, validation and test.
    Split(SplitArgs),
    /// Add augmented copies of the training images.
    Augment(AugmentArgs),
    /// Train one binary model per lesion class.
    Train(TrainArgs),
    /// Score models (or a reference segmenter) on the test split.
    Evaluate(EvaluateArgs),
    /// Predict masks for new images.
    Infer(InferArgs),
    /// Merge per-class masks into one composite and overlay.
    Fuse(FuseArgs),
    /// Collect per-class reports into one table.
    Report,
}

#[derive(Debug, Clone, Args)]
pub struct LesionArg {
    /// One class, a comma list (EX,HE) or `all`.
    #[arg(long, default_value = "all", value_parser = parse_lesions)]
    pub lesion: LesionSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LesionSet(pub Vec<LesionClass>);

fn parse_lesions(s: &str) -> Result<LesionSet, String> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(LesionSet(LesionClass::ALL.to_vec()));
    }
    let mut out: Vec<LesionClass> = Vec::new();
    for part in s.split(',') {
        let c: LesionClass = part.parse().map_err(|e: crate::Error| e.to_string())?;
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out.sort();
    Ok(LesionSet(out))
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Dataset root with images/ and masks/<L>/.
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// Gray level a pixel must exceed to count as fundus.
    #[arg(long, default_value_t = 15)]
    pub crop_threshold: u8,
    /// Pixels kept around the fundus box.
    #[arg(long, default_value_t = 0)]
    pub crop_margin: usize,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset root; defaults to the preprocessed dataset of the run.
    #[arg(long)]
    pub root: Option<PathBuf>,
    #[command(flatten)]
    pub lesion: LesionArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.7,0.2,0.1", value_parser = parse_ratios)]
    pub ratios: [f64; 3],
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three comma-separated fractions".to_string())
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub lesion: LesionArg,
    /// Augmented copies per training image.
    #[arg(long, default_value_t = crate::dataset::augment::DEFAULT_PER_IMAGE)]
    pub per_image: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub lesion: LesionArg,
    /// Training config (TOML); defaults apply when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `epoch` from the config.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SegmenterKind {
    /// The trained checkpoint of each class.
    Model,
    /// Returns the ground truth; checks the evaluation plumbing.
    Oracle,
    /// Returns the inverted ground truth.
    AntiOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Micro,
    Macro,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Micro => Aggregation::Micro,
            AggregationArg::Macro => Aggregation::Macro,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub lesion: LesionArg,
    /// Preprocessing request; must match the checkpoint when evaluating a model.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "model")]
    pub segmenter: SegmenterKind,
    /// Shorthand for `--segmenter oracle`.
    #[arg(long, conflicts_with = "segmenter")]
    pub oracle: bool,
    #[arg(long, default_value_t = crate::model::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "micro")]
    pub aggregation: AggregationArg,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub lesion: LesionArg,
    /// An image file or a directory of images.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = crate::model::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 15)]
    pub crop_threshold: u8,
    /// Feed images as they are, without cropping.
    #[arg(long)]
    pub no_crop: bool,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Directory with <L>/<stem>.png masks; defaults to the run's predictions.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Directory with <stem> base images for the overlay.
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Overlap draw order, highest first.
    #[arg(long, default_value = "MA,SE,HE,EX", value_parser = parse_priority)]
    pub priority: [LesionClass; 4],
}

fn parse_priority(s: &str) -> Result<[LesionClass; 4], String> {
    let parsed: Vec<LesionClass> = s
        .split(',')
        .map(|p| p.parse().map_err(|e: crate::Error| e.to_string()))
        .collect::<Result<_, _>>()?;
    let arr: [LesionClass; 4] = parsed
        .try_into()
        .map_err(|_| "priority must list all four classes".to_string())?;
    let mut sorted = arr;
    sorted.sort();
    if sorted != LesionClass::ALL {
        return Err("priority must list each class exactly once".into());
    }
    Ok(arr)
}

/// Parses `args` (program name first), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Log level implied by the `-v` count.
pub fn log_level(verbose: u8) -> &'static str {
    match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lesion_selection() {
        assert_eq!(parse_lesions("all").unwrap().0, LesionClass::ALL.to_vec());
        assert_eq!(
            parse_lesions("he,EX,HE").unwrap().0,
            vec![LesionClass::EX, LesionClass::HE]
        );
        assert!(parse_lesions("XX").is_err());
    }

    #[test]
    fn priority_must_be_a_permutation() {
        assert!(parse_priority("MA,SE,HE,EX").is_ok());
        assert!(parse_priority("MA,MA,HE,EX").is_err());
        assert!(parse_priority("MA,SE").is_err());
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["lesionseg", "frobnicate"]), 2);
        assert_eq!(run(["lesionseg", "split", "--bogus"]), 2);
        assert_eq!(run(["lesionseg", "--help"]), 0);
    }
}
