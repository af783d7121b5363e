use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "exom",
    version,
    about = "Estimate counterfactual probabilities on structural causal models with learned importance-sampling proposals"
)]
pub struct Cli {
    /// Directory receiving every output file [env: EXOM_OUT_DIR] [default: exom-out]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// TOML or JSON file supplying defaults for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for independent runs
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect the built-in SCMs
    Zoo {
        #[command(subcommand)]
        command: ZooCommand,
    },
    /// Print per-exogenous counterfactual Markov boundaries as JSON
    Boundary(BoundaryArgs),
    /// Train a conditional proposal and write a checkpoint
    Train(TrainArgs),
    /// Estimate the probability of one counterfactual event
    Estimate(EstimateArgs),
    /// Compare methods across SCMs and seeds (ESP and FR)
    Compare(CompareArgs),
    /// Estimate ATE, ETT, NDE or CtfDE
    Query(QueryArgs),
    /// Sweep aggregators and mask strategies
    Ablate(AblateArgs),
    /// Check the files listed in a manifest
    Verify(VerifyArgs),
}

#[derive(Debug, Subcommand)]
pub enum ZooCommand {
    /// List the SCM names
    List,
    /// Print an SCM description as JSON, or its causal graph as DOT
    Show {
        name: String,
        #[arg(long)]
        dot: bool,
    },
}

const HEADS: [&str; 2] = ["gmm", "maf"];
const AGGREGATORS: [&str; 4] = ["attention", "summation", "weighted-summation", "concatenation"];
const MASKS: [&str; 4] = ["endo", "all", "no", "off"];
const CUTS: [&str; 3] = ["endo", "all", "no"];

/// Training hyperparameters shared by `train`, `compare` and `ablate`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainOpts {
    /// Training epochs [default: 200]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Examples drawn per epoch [default: 16384]
    #[arg(long)]
    pub dataset_size: Option<usize>,
    /// [default: 256]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Encoder width [default: 64]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Encoder hidden layers [default: 2]
    #[arg(long)]
    pub layers: Option<usize>,
    /// [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// [default: 0.01]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Counterfactual process, `bernoulli:k=3[,rho1=..,rho2=..]` or `query:ett` [default: bernoulli:k=3]
    #[arg(long)]
    pub process: Option<String>,
    /// Validation events per epoch [default: 256]
    #[arg(long)]
    pub val_events: Option<usize>,
    /// Proposal samples per validation event [default: 256]
    #[arg(long)]
    pub val_samples: Option<usize>,
    /// Cube side of validation and evaluation events; 0 gives point events [default: 0.02]
    #[arg(long)]
    pub cube_side: Option<f64>,
    /// Forward samples for conditioning statistics [default: 4096]
    #[arg(long)]
    pub pilot_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BoundaryArgs {
    #[arg(long)]
    pub scm: Option<String>,
    /// Event JSON whose variables define `Y_*`
    #[arg(long, conflicts_with = "process")]
    pub event: Option<PathBuf>,
    /// Sample the variables from a process instead [default: bernoulli:k=3]
    #[arg(long)]
    pub process: Option<String>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cut strategy [default: endo]
    #[arg(long, value_parser = CUTS)]
    pub cut: Option<String>,
    /// Also write the JSON to this file in the output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long)]
    pub scm: Option<String>,
    /// [default: gmm]
    #[arg(long, value_parser = HEADS)]
    pub head: Option<String>,
    /// [default: attention]
    #[arg(long, value_parser = AGGREGATORS)]
    pub aggregator: Option<String>,
    /// Boundary masks by cut strategy, or `off` [default: endo]
    #[arg(long, value_parser = MASKS)]
    pub mask: Option<String>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainOpts,
    /// Checkpoint file [default: ckpt.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training trace CSV [default: <out stem>.trace.csv]
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EstimateArgs {
    /// Checkpoint; required for `exom`
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// SCM name; defaults to the checkpoint's
    #[arg(long)]
    pub scm: Option<String>,
    /// Event JSON
    #[arg(long)]
    pub event: Option<PathBuf>,
    /// [default: exom]
    #[arg(long, value_parser = ["exom", "rs", "ceis"])]
    pub method: Option<String>,
    /// Sample budget [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Prior weight in the guarded proposal [default: 0.05]
    #[arg(long)]
    pub guard: Option<f64>,
    /// How `exom` conditions on a region: `uniform` draws `y` per sample, `center` uses the region centre [default: uniform]
    #[arg(long, value_parser = ["uniform", "center"])]
    pub sampler: Option<String>,
    /// CEIS fitting iterations [default: 4]
    #[arg(long)]
    pub ceis_iterations: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the JSON report to this file in the output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CompareArgs {
    /// Comma-separated SCM names [default: simpson-nlin]
    #[arg(long, value_delimiter = ',')]
    pub scms: Option<Vec<String>>,
    /// Comma-separated methods [default: exom-gmm,exom-maf,rs,ceis]
    #[arg(long, value_delimiter = ',', value_parser = ["exom-gmm", "exom-maf", "rs", "ceis"])]
    pub methods: Option<Vec<String>>,
    /// Number of seeds [default: 5]
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First seed [default: 0]
    #[arg(long)]
    pub first_seed: Option<u64>,
    /// [default: attention]
    #[arg(long, value_parser = AGGREGATORS)]
    pub aggregator: Option<String>,
    /// [default: endo]
    #[arg(long, value_parser = MASKS)]
    pub mask: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainOpts,
    /// Evaluation events per seed [default: 256]
    #[arg(long)]
    pub events: Option<usize>,
    /// Sample budget per event [default: 256]
    #[arg(long)]
    pub n: Option<usize>,
    /// [default: 0.05]
    #[arg(long)]
    pub guard: Option<f64>,
    /// FR threshold on the per-event ESP [default: 0.001]
    #[arg(long)]
    pub fr_threshold: Option<f64>,
    /// Long-format CSV [default: compare.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary CSV [default: <out stem>.summary.csv]
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct QueryArgs {
    #[arg(long)]
    pub scm: Option<String>,
    /// Checkpoint; required for `exom`
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, value_parser = ["ate", "ett", "nde", "ctfde"])]
    pub kind: Option<String>,
    /// [default: exom with a checkpoint, rs without]
    #[arg(long, value_parser = ["exom", "rs"])]
    pub method: Option<String>,
    /// Samples per term [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// [default: 0.05]
    #[arg(long)]
    pub guard: Option<f64>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AblateArgs {
    #[arg(long)]
    pub scm: Option<String>,
    /// [default: gmm]
    #[arg(long, value_parser = HEADS)]
    pub head: Option<String>,
    /// [default: attention,summation,weighted-summation]
    #[arg(long, value_delimiter = ',', value_parser = AGGREGATORS)]
    pub aggregators: Option<Vec<String>>,
    /// Strategies compared against `off` [default: endo,all,no]
    #[arg(long, value_delimiter = ',', value_parser = MASKS)]
    pub masks: Option<Vec<String>>,
    /// [default: 5]
    #[arg(long)]
    pub seeds: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub first_seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainOpts,
    /// [default: 256]
    #[arg(long)]
    pub events: Option<usize>,
    /// [default: 256]
    #[arg(long)]
    pub n: Option<usize>,
    /// [default: 0.05]
    #[arg(long)]
    pub guard: Option<f64>,
    /// [default: 0.001]
    #[arg(long)]
    pub fr_threshold: Option<f64>,
    /// Long-format CSV [default: ablate.csv]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Improvement CSV [default: <out stem>.improvement.csv]
    #[arg(long)]
    pub improvement: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Manifest JSON
    pub manifest: PathBuf,
    /// Also re-run the recorded command and require identical outputs
    #[arg(long)]
    pub rerun: bool,
}
