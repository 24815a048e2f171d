use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ademiner",
    version,
    about = "Adverse drug event mining: classify documents, tag entities, relate them"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Training seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// File of `key = value` hyperparameters.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Word vectors (text format or binary cache).
    #[arg(long, global = true)]
    pub embeddings: Option<PathBuf>,
    /// Out-of-vocabulary policy: `zeros`, `hashed` or `hashed:<buckets>`.
    #[arg(long, global = true)]
    pub oov: Option<String>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    #[value(alias = "classify")]
    Classifier,
    Ner,
    Re,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Iob,
    Bioes,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct DataArgs {
    /// JSONL documents.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CoNLL `token<TAB>tag` file.
    #[arg(long)]
    pub conll: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = false, multiple = false)]
pub struct DevArgs {
    /// JSONL development documents for checkpoint selection.
    #[arg(long)]
    pub dev_data: Option<PathBuf>,
    /// CoNLL development file.
    #[arg(long)]
    pub dev_conll: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one stage and write its bundle and metrics.
    Train {
        stage: Stage,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        dev: DevArgs,
        #[arg(long, value_enum, default_value = "iob")]
        scheme: Scheme,
        /// Bundle path (default `<stage>.bundle`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Metrics JSON path (default: bundle path with `.metrics.json`).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Score a trained bundle, or run k-fold cross-validation.
    Eval {
        stage: Stage,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "iob")]
        scheme: Scheme,
        #[arg(long, required_unless_present = "cv", conflicts_with = "cv")]
        bundle: Option<PathBuf>,
        /// Number of folds.
        #[arg(long)]
        cv: Option<usize>,
        /// Entity scoring modes, comma separated: strict, relax, overlap-any.
        #[arg(long, value_delimiter = ',')]
        mode: Option<Vec<String>>,
        /// Report JSON path (default stdout).
        #[arg(long)]
        report: Option<PathBuf>,
        /// CSV export of the fold table.
        #[arg(long, requires = "cv")]
        csv: Option<PathBuf>,
        /// Folds trained at once.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the pipeline over JSONL documents.
    Predict {
        /// Pipeline manifest referencing the stage bundles.
        #[arg(long, conflicts_with_all = ["classifier", "ner", "re"], required_unless_present_all = ["ner", "re"])]
        pipeline: Option<PathBuf>,
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long, requires = "re")]
        ner: Option<PathBuf>,
        #[arg(long, requires = "ner")]
        re: Option<PathBuf>,
        /// Input JSONL (default stdin).
        #[arg(long, conflicts_with = "stream")]
        input: Option<PathBuf>,
        /// Output JSONL (default stdout).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Read a continuous stream from stdin.
        #[arg(long)]
        stream: bool,
        /// Flush after every record instead of every 64.
        #[arg(long, requires = "stream")]
        flush_each: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Time training and inference of one stage.
    Benchmark {
        stage: Stage,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "iob")]
        scheme: Scheme,
        /// Corpus duplication factor for the inference linearity check.
        #[arg(long, default_value_t = 4)]
        duplicate: usize,
        /// Inference repetitions; the fastest is reported.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Corpus statistics.
    Stats {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "iob")]
        scheme: Scheme,
    },
    /// Write a pipeline manifest referencing stage bundles.
    Compose {
        #[arg(long)]
        classifier: Option<PathBuf>,
        #[arg(long)]
        ner: PathBuf,
        #[arg(long)]
        re: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus and matching word vectors.
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// JSONL output path.
        #[arg(long)]
        out: PathBuf,
        /// Write word vectors covering the synthetic vocabulary.
        #[arg(long)]
        vectors: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        dim: usize,
        /// Token distance separating positive from negative pairs.
        #[arg(long, default_value_t = 5)]
        threshold: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Ner,
    Classify,
    Re,
    Examples,
}
