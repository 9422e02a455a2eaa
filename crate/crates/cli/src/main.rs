//! `glomics`: command-line front end for the glomics toolkit.

mod commands;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use glomics::cohort::CohortError;

/// Environment variable naming the directory that relative input paths are
/// resolved against.
pub const DATA_ROOT_ENV: &str = "GLOMICS_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(
    name = "glomics",
    version,
    about = "Glomerular morphometry, association statistics, few-shot evaluation and a self-distillation simulator",
    after_help = "Relative input paths are resolved against $GLOMICS_DATA_ROOT when it is set.\n\
                  Exit codes: 0 success, 1 validation or usage failure, 2 I/O failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-glomerulus shape parameters and case-level features from label masks.
    Morph(MorphArgs),
    /// Tests every case-level feature against clinical variables (KS / Kruskal-Wallis + Dunn).
    Associate(AssociateArgs),
    /// Multivariate linear (feature outcome) or logistic (two-group outcome) regression.
    Regress(RegressArgs),
    /// Repeated k-shot classification protocol on frozen embeddings.
    Fewshot(FewshotArgs),
    /// ROC-AUC, PR-AUC and F1 from scores, or IoU between paired mask directories.
    Eval(EvalArgs),
    /// Multi-crop self-distillation on synthetic entities with collapse diagnostics.
    DistillSim(DistillArgs),
    /// Attention inside versus outside lesion boxes.
    AttnAlign(AttnArgs),
}

/// Flags shared by every subcommand. A JSON `--config` object may supply any
/// flag by name (`-` or `_` separators); flags given on the command line win.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct Common {
    /// Output directory; every file the command writes goes here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed for all randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Report format: csv or json.
    #[arg(long)]
    pub format: Option<String>,
    /// JSON file with flag values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct MorphArgs {
    /// Directory laid out as <case>/<glomerulus>.<pgm|png>.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Micrometres per pixel; lengths are in pixels when omitted.
    #[arg(long)]
    pub resolution: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociateArgs {
    /// Case-feature CSV written by `morph`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Mask directory, used instead of --features.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Clinical CSV with a case_id column.
    #[arg(long)]
    pub clinical: Option<PathBuf>,
    /// Binning spec: a JSON file or a built-in name (xj-light, kpmp).
    #[arg(long)]
    pub spec: Option<String>,
    /// Variables to test (default: every spec variable present in the clinical table).
    #[arg(long, value_delimiter = ',')]
    pub variables: Option<Vec<String>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressArgs {
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long)]
    pub clinical: Option<PathBuf>,
    #[arg(long)]
    pub spec: Option<String>,
    /// Outcomes, one model each (default: all 14 features).
    #[arg(long, value_delimiter = ',')]
    pub outcome: Option<Vec<String>>,
    /// Covariates: feature names or clinical variables.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct FewshotArgs {
    /// Embedding CSV (id,label,f0,...) or raw f32 matrix with a .json sidecar.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Classifiers among PTL, LR, MLP, RF (default: all).
    #[arg(long, value_delimiter = ',')]
    pub classifiers: Option<Vec<String>>,
    /// Shots per class (default: 1,5,10,25,100).
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Repeats per cell (default 10).
    #[arg(long)]
    pub repeats: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalArgs {
    /// CSV with `score` and `label` (0/1) columns.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Decision threshold for F1 (score >= threshold is positive; default 0.5).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Predicted mask directory, paired with --truth by case and file stem.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillArgs {
    /// Training steps (default 500).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Teacher-logit centering (default true).
    #[arg(long)]
    pub centering: Option<bool>,
    #[arg(long)]
    pub tau_student: Option<f64>,
    #[arg(long)]
    pub tau_teacher: Option<f64>,
    /// Teacher EMA momentum.
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub center_momentum: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Gradient norm clip; 0 disables clipping.
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Synthetic entities per class (default 32).
    #[arg(long)]
    pub n_per_class: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct AttnArgs {
    /// JSON map or list of maps ({width, height, values, boxes}), or a CSV grid.
    #[arg(long)]
    pub attention: Option<PathBuf>,
    /// JSON list of {x0, y0, x1, y1} half-open boxes, for a CSV grid.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    /// `pixel` pools pixels across maps; `map` compares per-map means (default pixel).
    #[arg(long)]
    pub level: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

/// A failed command: message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: 2,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CohortError> for Failure {
    fn from(e: CohortError) -> Self {
        Self {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

macro_rules! validation_failure {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::usage(e.to_string())
            }
        }
    )*};
}
validation_failure!(
    glomics::stats::StatsError,
    glomics::fewshot::FewShotError,
    glomics::distill::DistillError,
    glomics::metrics::MetricError,
    glomics::morphometry::MorphError
);

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        CohortError::from(e).into()
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        CohortError::from(e).into()
    }
}

/// Overlays command-line values on a JSON config object.
fn merge_config<T: Serialize + DeserializeOwned>(cli: T, config: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = config else {
        return Ok(cli);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let parsed: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let serde_json::Value::Object(file) = parsed else {
        return Err(Failure::usage(format!("{}: config must be a JSON object", path.display())));
    };
    let serde_json::Value::Object(flags) = serde_json::to_value(&cli)? else {
        unreachable!("argument structs serialize to objects")
    };
    let mut merged = serde_json::Map::new();
    for (key, value) in file {
        let key = key.replace('-', "_");
        if key == "config" {
            continue;
        }
        if !flags.contains_key(&key) {
            return Err(Failure::usage(format!(
                "{}: unknown setting {key:?} for this command",
                path.display()
            )));
        }
        merged.insert(key, value);
    }
    for (key, value) in flags {
        if !value.is_null() {
            merged.insert(key, value);
        }
    }
    serde_json::from_value(serde_json::Value::Object(merged))
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn configure_threads(common: &Common) -> Result<(), Failure> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    macro_rules! dispatch {
        ($args:expr, $f:path) => {{
            let config = $args.common.config.clone();
            let args = merge_config($args, config.as_deref())?;
            configure_threads(&args.common)?;
            $f(&args)
        }};
    }
    match command {
        Command::Morph(a) => dispatch!(a, commands::morph),
        Command::Associate(a) => dispatch!(a, commands::associate),
        Command::Regress(a) => dispatch!(a, commands::regress),
        Command::Fewshot(a) => dispatch!(a, commands::fewshot),
        Command::Eval(a) => dispatch!(a, commands::eval),
        Command::DistillSim(a) => dispatch!(a, commands::distill_sim),
        Command::AttnAlign(a) => dispatch!(a, commands::attn_align),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
