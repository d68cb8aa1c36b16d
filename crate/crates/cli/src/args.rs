use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "kuda", version, about = "Knowability-aware universal domain adaptation on feature files")]
pub struct Cli {
    /// Cap on worker threads. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic source/target pair.
    Synth(SynthArgs),
    /// Train the adapter and classifier.
    Train(TrainArgs),
    /// Score a checkpoint on labeled target data.
    Eval(EvalArgs),
    /// Per-sample knowability, credibility, verdict, and reject score.
    Label(LabelArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub common: Option<usize>,
    #[arg(long)]
    pub src_private: Option<usize>,
    #[arg(long)]
    pub tgt_private: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; receives source.udaf, target.udaf, truth.udaf.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_backbone: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Neighbors per retrieval.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub k_tau: Option<f64>,
    #[arg(long)]
    pub cred_scale: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub sched_gamma: Option<f64>,
    #[arg(long)]
    pub sched_power: Option<f64>,
    /// Adapter hidden width; 0 disables the adapter.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Adapter output width (defaults to the input width).
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub power_iters: Option<usize>,
    #[arg(long)]
    pub power_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled source UDAF file.
    #[arg(long)]
    pub source: PathBuf,
    /// Target UDAF file. Labels stored in it count as truth unless --truth is given.
    #[arg(long)]
    pub target: PathBuf,
    /// Target truth UDAF file; enables the KLS accuracy columns of the log.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output directory for checkpoint.udac, train_log.tsv, manifest.txt.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a checkpoint that carries training state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also write checkpoint_<step>.udac every this many steps.
    #[arg(long)]
    pub save_every: Option<usize>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Average common-class accuracy over samples instead of classes.
    #[arg(long)]
    pub micro: bool,
    /// Directory for report.txt and confusion.tsv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Adds a truth column.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output TSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub k_tau: Option<f64>,
    #[arg(long)]
    pub cred_scale: Option<f64>,
    /// Write knowability and reject-score histograms here.
    #[arg(long)]
    pub hist_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub hist_bins: usize,
}
