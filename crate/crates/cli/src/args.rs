use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "vcrank",
    version,
    about = "Visual-context caption relatedness: datasets, re-ranking, metrics, bias and search"
)]
pub struct Cli {
    /// JSON object supplying any flag of the subcommand; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for per-image stages (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the thresholded caption/visual-context relatedness dataset.
    BuildDataset(BuildDatasetArgs),
    /// Visual-context label frequencies of a relatedness dataset.
    Stats(StatsArgs),
    /// Train the convolutional relatedness head.
    Train(TrainArgs),
    /// Re-rank beam-search candidates by visual relatedness.
    Rerank(RerankArgs),
    /// Caption quality and diversity metrics of re-ranked output.
    Eval(EvalArgs),
    /// Object/gender co-occurrence ratios.
    Bias(BiasArgs),
    /// Exact cosine search from visual-context labels to captions.
    Search(SearchArgs),
    /// Write deterministic toy embeddings for every text the pipeline needs.
    EmbedToy(EmbedToyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ContextArgs {
    /// Detections below this confidence are dropped.
    #[arg(long, default_value_t = 0.2)]
    pub confidence_threshold: f64,
    /// Detections kept per classifier.
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
    /// Labels whose embeddings reach this cosine with a kept label are dropped.
    #[arg(long, default_value_t = 0.9)]
    pub dedup_threshold: f64,
    #[arg(long, value_enum, default_value_t = JoinArg::Concatenated)]
    pub context_join: JoinArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JoinArg {
    Concatenated,
    PerObject,
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.3,0.4")]
    pub thresholds: Vec<f64>,
    /// Also write the literal-overlap dataset here.
    #[arg(long)]
    pub overlap_out: Option<PathBuf>,
    /// Also write context label frequencies of the positives here.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    #[command(flatten)]
    pub context: ContextArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Count only positive records at this threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Which threshold's labels to train on; required when the dataset has several.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Weights file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch loss log (JSONL).
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub windows: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub kernels: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Simprob,
    Cosine,
    Cnn,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, value_enum, default_value_t = ScorerArg::Simprob)]
    pub scorer: ScorerArg,
    /// Trained weights, required by the cnn scorer.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Score gender-neutralized captions and contexts.
    #[arg(long)]
    pub neutralize: bool,
    /// Gender lexicon override (JSON).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, default_value = "reranked.jsonl")]
    pub out: PathBuf,
    #[command(flatten)]
    pub context: ContextArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub reranked: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "metrics.json")]
    pub out: PathBuf,
    /// Enables the embedding-based reference similarity (sb).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Caption,
    Image,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub objects: Vec<String>,
    #[arg(long, value_enum, default_value_t = UnitArg::Caption)]
    pub unit: UnitArg,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Index only this corpus's captions (ids `image_id#n`); default: every key.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated context labels forming the query.
    #[arg(long, value_delimiter = ',', required = true)]
    pub contexts: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Results file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedToyArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Extra texts, one per line.
    #[arg(long)]
    pub texts: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[command(flatten)]
    pub context: ContextArgs,
}
