//! `dpta`: membership-inference audits, fidelity, quality and leakage
//! reports for synthetic text corpora.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::Format;

#[derive(Parser, Debug)]
#[command(
    name = "dpta",
    version,
    about = "Audit synthetic text corpora for privacy leakage, fidelity and quality"
)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "DPTA_SEED", default_value_t = 42)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Select audit targets: centroid-farthest fraction unioned with high-LOF points.
    Outliers(OutliersArgs),
    /// Split the corpus and write trial, reference and key manifests.
    Plan(PlanArgs),
    /// Run a simulated generator over every trial of a plan.
    Simgen(SimgenArgs),
    /// Score every trial with the n-gram attack and write the ROC with its band.
    Audit(AuditArgs),
    /// Compare an audited ROC against (epsilon, delta) trade-off bounds.
    BoundsCheck(BoundsArgs),
    /// MAUVE, entity divergence and length divergence against a real corpus.
    Fidelity(FidelityArgs),
    /// Diversity statistics plus ingested per-record scores.
    Quality(QualityArgs),
    /// Exact-match leakage of a corpus into a reference corpus.
    Leakage(LeakageArgs),
    /// Spearman correlation between per-dataset leakage and other metrics.
    Correlate(CorrelateArgs),
    /// Relative improvement of synthetic-data F1 over trivial baselines.
    Utility(UtilityArgs),
    /// Merge prior outputs in a directory into report.json and roc_overlay.csv.
    Report(ReportArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct OutliersArgs {
    /// Corpus JSONL.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Embedding JSONL ({"id", "vector"}) aligned to the corpus.
    #[arg(long, conflicts_with = "hash_embed")]
    pub embeddings: Option<PathBuf>,
    /// Use the built-in hashed TF-IDF embedder (the default when no embeddings are given).
    #[arg(long)]
    pub hash_embed: bool,
    #[arg(long, default_value = "cosine", value_parser = ["cosine", "euclidean"])]
    pub metric: String,
    /// Hashed embedding dimension.
    #[arg(long, default_value_t = dpta_core::embed::DEFAULT_DIM)]
    pub dim: usize,
    /// Smallest n-gram order for hashed embeddings.
    #[arg(long, default_value_t = dpta_core::embed::DEFAULT_NGRAM_RANGE.0)]
    pub ngram_min: usize,
    /// Largest n-gram order for hashed embeddings.
    #[arg(long, default_value_t = dpta_core::embed::DEFAULT_NGRAM_RANGE.1)]
    pub ngram_max: usize,
    /// Fraction of points farthest from the centroid.
    #[arg(long, default_value_t = dpta_core::outlier::DEFAULT_TOP_FRACTION)]
    pub top_fraction: f64,
    /// LOF neighbourhood size.
    #[arg(long, default_value_t = dpta_core::outlier::DEFAULT_LOF_K)]
    pub k: usize,
    /// Points with LOF above this are outliers.
    #[arg(long, default_value_t = dpta_core::outlier::DEFAULT_LOF_THRESHOLD)]
    pub lof_threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct PlanArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// outliers.json written by the outliers subcommand.
    #[arg(long)]
    pub outliers: PathBuf,
    #[arg(long, default_value_t = dpta_core::plan::DEFAULT_TRIALS)]
    pub trials: usize,
    /// Share of the private split drawn into each trial subset.
    #[arg(long, default_value_t = dpta_core::plan::DEFAULT_SUBSET_FRACTION)]
    pub subset_fraction: f64,
    /// Number of reference sets (even); each target is in half of them.
    #[arg(long, default_value_t = dpta_core::plan::DEFAULT_REFS)]
    pub refs: usize,
    /// Claimed privacy budget recorded in the plan.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = dpta_core::bounds::DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKindArg {
    Copier,
    Independent,
    Rr,
}

#[derive(Args, Debug, Serialize)]
pub struct SimgenArgs {
    /// Plan directory.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub kind: SimKindArg,
    /// Copier: per-token dropout probability.
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Randomized response: inclusion probability for a member's own target.
    #[arg(long, default_value_t = 0.731)]
    pub p1: f64,
    /// Randomized response: inclusion probability otherwise.
    #[arg(long, default_value_t = 0.269)]
    pub p0: f64,
    /// Randomized response: derive p1 and p0 from this epsilon instead.
    #[arg(long)]
    pub rr_epsilon: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AuditArgs {
    /// Plan directory.
    #[arg(long)]
    pub plan: PathBuf,
    /// Directory holding synthetic/<trial_id>.jsonl (or the synthetic directory itself).
    #[arg(long)]
    pub syn: PathBuf,
    /// Source corpus containing the auxiliary split and the targets.
    #[arg(long, alias = "aux")]
    pub corpus: PathBuf,
    /// N-gram order.
    #[arg(long, default_value_t = dpta_core::ngram::DEFAULT_ORDER)]
    pub n: usize,
    /// Additive smoothing constant.
    #[arg(long, default_value_t = dpta_core::ngram::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Score records by summed rather than mean log-probability.
    #[arg(long)]
    pub raw_logprob: bool,
    /// Negative-resampling repeats.
    #[arg(long, default_value_t = dpta_core::attack::DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticArg {
    Mean,
    LowerCi,
}

#[derive(Args, Debug, Serialize)]
pub struct BoundsArgs {
    /// roc.json written by audit.
    #[arg(long)]
    pub roc: PathBuf,
    /// Claimed epsilon; repeat for several budgets.
    #[arg(long, required = true)]
    pub epsilon: Vec<f64>,
    #[arg(long, default_value_t = dpta_core::bounds::DEFAULT_DELTA)]
    pub delta: f64,
    /// ROC statistic compared against the bound.
    #[arg(long, value_enum, default_value_t = StatisticArg::LowerCi)]
    pub statistic: StatisticArg,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceArg {
    Kl,
    Js,
}

#[derive(Args, Debug, Serialize)]
pub struct FidelityArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub syn: PathBuf,
    /// Held-out real corpus giving a real-vs-real floor.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    #[arg(long)]
    pub real_emb: Option<PathBuf>,
    #[arg(long)]
    pub syn_emb: Option<PathBuf>,
    #[arg(long)]
    pub heldout_emb: Option<PathBuf>,
    /// Embed all sides with the hashed TF-IDF embedder when no embeddings are given.
    #[arg(long)]
    pub hash_embed: bool,
    /// Entity tags JSONL ({"id", "entities": [{"type"}]}).
    #[arg(long)]
    pub entities_real: Option<PathBuf>,
    #[arg(long)]
    pub entities_syn: Option<PathBuf>,
    #[arg(long)]
    pub entities_heldout: Option<PathBuf>,
    #[arg(long, default_value = "cosine", value_parser = ["cosine", "euclidean"])]
    pub metric: String,
    /// MAUVE scaling constant c.
    #[arg(long, default_value_t = dpta_core::fidelity::DEFAULT_MAUVE_C)]
    pub mauve_c: f64,
    /// Number of mixture weights on the divergence frontier.
    #[arg(long, default_value_t = dpta_core::fidelity::DEFAULT_LAMBDAS)]
    pub lambdas: usize,
    /// k-means clusters [default: min(500, N/10), at least 2].
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Equal-width length bins over the pooled range.
    #[arg(long, default_value_t = dpta_core::fidelity::DEFAULT_LENGTH_BINS)]
    pub length_bins: usize,
    /// Direction-free Jensen-Shannon instead of KL(real || syn).
    #[arg(long, value_enum, default_value_t = DivergenceArg::Kl)]
    pub divergence: DivergenceArg,
    /// Entity smoothing alpha (fixed).
    #[arg(long, default_value_t = dpta_core::fidelity::DEFAULT_ENTITY_ALPHA, hide = true)]
    pub entity_alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct QualityArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Glob of per-record score JSONL files ({"id", "score"}).
    #[arg(long)]
    pub scores: Option<String>,
    /// Self-BLEU references sampled per record.
    #[arg(long, default_value_t = dpta_core::quality::DEFAULT_MAX_REFS)]
    pub max_refs: usize,
    /// Most frequent types used in the Zipf fit.
    #[arg(long, default_value_t = dpta_core::quality::DEFAULT_ZIPF_TOP_K)]
    pub zipf_top_k: usize,
    /// Name (file stem) of an ingested score file used to filter the corpus.
    #[arg(long, requires = "scores")]
    pub filter_by: Option<String>,
    /// Keep records scoring at least this.
    #[arg(long, requires = "filter_by", conflicts_with = "keep_top")]
    pub keep_threshold: Option<f64>,
    /// Keep this top fraction of records.
    #[arg(long, requires = "filter_by")]
    pub keep_top: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitArg {
    Records,
    Tokens,
}

#[derive(Args, Debug, Serialize)]
pub struct LeakageArgs {
    /// Corpus checked for leakage.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Reference corpus: JSONL records, or one document per line.
    #[arg(long)]
    pub reference: PathBuf,
    /// Minimum match length, in tokens (bytes with --raw-bytes).
    #[arg(long, default_value_t = dpta_core::leakage::DEFAULT_THRESHOLD)]
    pub threshold: usize,
    /// Count leaked records or leaked tokens.
    #[arg(long, value_enum, default_value_t = UnitArg::Records)]
    pub unit: UnitArg,
    /// Match raw bytes instead of normalised tokens.
    #[arg(long)]
    pub raw_bytes: bool,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct CorrelateArgs {
    /// CSV with a dataset column and a leakage column.
    #[arg(long)]
    pub leakage: PathBuf,
    /// CSV with a dataset column and one or more metric columns.
    #[arg(long)]
    pub metric: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct UtilityArgs {
    /// CSV rows: dataset, classifier, method, epsilon, f1_syn, f1_real, f1_random, f1_majority.
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// Directory holding outputs of earlier subcommands.
    #[arg(long)]
    pub dir: PathBuf,
    /// Output directory [default: --dir].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
