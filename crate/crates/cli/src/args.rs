use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use credal_cbm::ablate::SweepAxis;
use credal_cbm::metrics::{AleReference, Selection, Strategy};
use credal_cbm::AleMode;

/// Concept bottleneck models with credal intervals over concept probabilities.
///
/// Set CREDAL_LOG to error, warn, info or debug to control logging on stderr.
#[derive(Debug, Parser)]
#[command(name = "credal", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with annotator disagreement.
    Synth(SynthArgs),
    /// Train an ensemble and write a checkpoint plus a JSONL training log.
    Train(TrainArgs),
    /// Accuracy, uncertainty correlations and calibration on a dataset.
    Eval(EvalArgs),
    /// Correct the top-m concepts per example and report the accuracy change.
    Intervene(InterveneArgs),
    /// Assign every example to an uncertainty quadrant.
    Route(RouteArgs),
    /// Train and evaluate once per value of one configuration axis.
    Ablate(AblateArgs),
    /// Summarize a checkpoint and/or a dataset.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Per-concept base ambiguity, comma separated. Defaults to
    /// 0.25,0.45,0.63,0.75 for four concepts and an even 0.25..0.75 spread
    /// otherwise.
    #[arg(long, value_delimiter = ',')]
    pub base_unknown: Option<Vec<f64>>,
    /// Also write `<stem>.train.jsonl`, `<stem>.val.jsonl` and
    /// `<stem>.test.jsonl` using these train and validation fractions.
    #[arg(long, value_delimiter = ',', value_name = "TRAIN,VAL")]
    pub split: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Defaults for full-size runs (lr 1e-4, 500 warmup steps).
    #[default]
    Full,
    /// lr 1e-2 and 50 warmup steps, for a few thousand examples.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AleModeArg {
    Bce,
    Hetero,
    Entropy,
    None,
}

impl From<AleModeArg> for AleMode {
    fn from(a: AleModeArg) -> Self {
        match a {
            AleModeArg::Bce => AleMode::SupervisedBce,
            AleModeArg::Hetero => AleMode::Heteroscedastic,
            AleModeArg::Entropy => AleMode::Entropy,
            AleModeArg::None => AleMode::None,
        }
    }
}

/// Training settings shared by `train` and `ablate`. Precedence: preset,
/// then the config file, then these flags.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML file with training settings; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub heads: Option<u64>,
    /// LoRA ranks, comma separated; cycled when shorter than --heads.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub ale_mode: Option<AleModeArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    /// Validation data. Without it, 20% of --data is held out.
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log path; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AleReferenceArg {
    /// Unknown rate when the data has any disagreement, else error indicator.
    Auto,
    UnknownRate,
    Error,
}

impl AleReferenceArg {
    pub fn resolve(self, has_disagreement: bool) -> AleReference {
        match self {
            AleReferenceArg::UnknownRate => AleReference::UnknownRate,
            AleReferenceArg::Error => AleReference::ErrorIndicator,
            AleReferenceArg::Auto if has_disagreement => AleReference::UnknownRate,
            AleReferenceArg::Auto => AleReference::ErrorIndicator,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// What the aleatoric scores are correlated against.
    #[arg(long, value_enum, default_value_t = AleReferenceArg::Auto)]
    pub ale_reference: AleReferenceArg,
    /// Write the report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Epi,
    Ale,
    Random,
    All,
}

impl StrategyArg {
    pub fn strategies(self) -> Vec<Strategy> {
        match self {
            StrategyArg::Epi => vec![Strategy::Epistemic],
            StrategyArg::Ale => vec![Strategy::Aleatoric],
            StrategyArg::Random => vec![Strategy::Random],
            StrategyArg::All => Strategy::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    PerExample,
    Global,
}

impl From<SelectionArg> for Selection {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::PerExample => Selection::PerExample,
            SelectionArg::Global => Selection::Global,
        }
    }
}

#[derive(Debug, Args)]
pub struct InterveneArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::All)]
    pub strategy: StrategyArg,
    /// Concepts corrected per example.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Seed of the random strategy.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SelectionArg::PerExample)]
    pub selection: SelectionArg,
    /// Write the reports as a JSON array here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Per-example assignments (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Quadrant summary (JSON); defaults to `<out>.quadrants.json` when --out is set.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Training data, or the whole dataset when --val and --test are absent.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, requires = "test")]
    pub val: Option<PathBuf>,
    #[arg(long, requires = "val")]
    pub test: Option<PathBuf>,
    #[arg(long, value_parser = parse_axis)]
    pub sweep_axis: SweepAxis,
    /// Comma separated; rank lists use `/`, e.g. `16/16/16,4/8/16`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sweep_values: Vec<String>,
    /// Seed for splitting --data into 60/20/20 train/validation/test.
    #[arg(long, default_value_t = 42)]
    pub split_seed: u64,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Sweep rows (JSONL).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse().map_err(|e: credal_cbm::CredalError| e.to_string())
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).multiple(true).args(["model", "data"]))]
pub struct InspectArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
}
