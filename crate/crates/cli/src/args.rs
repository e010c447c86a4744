use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use hscls_core::abtest::Metric;
use hscls_core::models::Architecture;
use hscls_pipeline::config::UpsampleMode;

/// HS code classification: data preparation, model training and selection,
/// inference, and a local retraining/inference pipeline.
#[derive(Debug, Parser)]
#[command(name = "hscls", version)]
pub struct Cli {
    /// Workspace root [env: HSCLS_WORKSPACE] [default: .]
    #[arg(long, global = true)]
    pub workspace: Option<PathBuf>,

    /// Master seed; every random choice is derived from it [env: HSCLS_SEED]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Log progress to stderr
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the workspace layout and a default hscls.toml
    Init,
    /// Write a seeded synthetic labeled corpus
    Synth(SynthArgs),
    /// Filter, split, upsample and build the vocabulary
    Prepare(PrepareArgs),
    /// Train one model
    Train(TrainArgs),
    /// Bayesian search over a model's hyperparameters
    Tune(TuneArgs),
    /// Score frozen weights on a labeled set
    Evaluate(EvaluateArgs),
    /// Cross-validated per-class model comparison
    Abtest(AbtestArgs),
    /// Predict codes for a description CSV
    Infer(InferArgs),
    /// Event-driven runs
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
    /// Model registry
    Registry {
        #[command(subcommand)]
        command: RegistryCommand,
    },
    /// Band tables and charts from evaluation reports
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Dnn,
    #[value(name = "text_cnn")]
    TextCnn,
}

impl From<ModelArg> for Architecture {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Dnn => Architecture::Dnn,
            ModelArg::TextCnn => Architecture::TextCnn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UpsampleArg {
    Off,
    Mean,
    Median,
}

impl From<UpsampleArg> for UpsampleMode {
    fn from(u: UpsampleArg) -> Self {
        match u {
            UpsampleArg::Off => UpsampleMode::Off,
            UpsampleArg::Mean => UpsampleMode::Mean,
            UpsampleArg::Median => UpsampleMode::Median,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Precision,
    Recall,
    #[value(name = "f_beta")]
    FBeta,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Precision => Metric::Precision,
            MetricArg::Recall => Metric::Recall,
            MetricArg::FBeta => Metric::FBeta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Svg,
}

/// Training knobs shared by the commands that fit models.
#[derive(Debug, Clone, Args)]
pub struct TrainingFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Tokens kept per record
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Early-stopping patience in epochs
    #[arg(long)]
    pub patience: Option<usize>,
    /// Share of the training records held out for early stopping
    #[arg(long)]
    pub validation_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    /// Probability that a token comes from the shared noise pool
    #[arg(long, default_value_t = 0.2)]
    pub noise_fraction: f64,
    /// Fraction of records given assurance level 1 or 2
    #[arg(long, default_value_t = 0.0)]
    pub low_assurance_fraction: f64,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    pub input: PathBuf,
    /// Output directory [default: <workspace>/prepared]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub min_assurance: Option<u8>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub upsample: Option<UpsampleArg>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub train: PathBuf,
    /// Vocabulary file [default: vocab.txt next to the training CSV]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dnn")]
    pub model: ModelArg,
    /// Named hyperparameter preset (dnn: paper_base, paper_upsampled, paper_final; text_cnn: paper_final, prose_345)
    #[arg(long)]
    pub preset: Option<String>,
    /// JSON hyperparameters overlaid on the preset; integer fields are rounded
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: <workspace>/models/<model>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub train: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dnn")]
    pub model: ModelArg,
    /// Total objective evaluations
    #[arg(long)]
    pub budget: Option<usize>,
    /// Random points before the surrogate takes over
    #[arg(long)]
    pub n_init: Option<usize>,
    /// Training epochs per trial
    #[arg(long)]
    pub trial_epochs: Option<usize>,
    /// Output directory [default: <workspace>/tuning/<model>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Vocabulary file [default: vocab.txt next to the weights]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// F-beta weight
    #[arg(long)]
    pub beta: Option<f64>,
    /// Output directory [default: the weights directory]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AbtestArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Comma-separated models to compare
    #[arg(long, value_enum, value_delimiter = ',', default_value = "dnn,text_cnn")]
    pub models: Vec<ModelArg>,
    /// Folds
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Output directory [default: <workspace>/abtest]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("model").required(true).args(["weights", "use_active"])))]
pub struct InferArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Use the registry's active version
    #[arg(long)]
    pub use_active: bool,
    /// Vocabulary file [default: vocab.txt next to the weights]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Predictions CSV [default: predictions.csv next to the input]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    /// Watch the event directories and run machines (foreground)
    Start {
        /// Drain pending work, then exit
        #[arg(long)]
        once: bool,
    },
    /// Print a run record
    Status { run_id: String },
    /// List run records
    Runs,
    /// Run an event now, bypassing the watcher (file path or inline JSON)
    EmitEvent { event: String },
}

#[derive(Debug, Subcommand)]
pub enum RegistryCommand {
    /// Every version with its status and holdout accuracy
    List,
    /// Make a version the active one
    Promote { version: u32 },
    /// Print the active version number
    ShowActive,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["run", "eval"])))]
pub struct ReportArgs {
    /// Retraining run whose evaluation reports to render
    #[arg(long)]
    pub run: Option<String>,
    /// An evaluation report JSON
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: ReportFormat,
    /// Output directory [default: next to the report]
    #[arg(long)]
    pub out: Option<PathBuf>,
}
