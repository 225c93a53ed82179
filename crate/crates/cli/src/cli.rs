use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "userprof", version, about = "Learned user profiles for personalized search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Model variant tag, e.g. M1_ANN or P2_M2_LARGE.
    #[arg(long)]
    pub variant: Option<String>,
    /// Use the output and input widths of the published layer tables.
    #[arg(long)]
    pub table_faithful: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// JSON object of flag values; flags given on the command line win.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 0.8)]
    pub fraction: f64,
    #[arg(long)]
    pub stratified: bool,
}

#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Read a BBC-style corpus directory and write documents.jsonl.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Split documents (.jsonl or corpus directory) or users (.csv) into train and test files.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Fit GloVe vectors on a corpus and write vectors.txt.
    GloveTrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5000)]
        vocab_size: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        window: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Train a document-domain classifier.
    TrainDomain {
        /// Corpus directory with one folder per category.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5000)]
        vocab_size: usize,
        /// Initialize the embedding layer from GloVe vectors.
        #[arg(long)]
        glove: bool,
        #[arg(long, default_value_t = 25)]
        glove_epochs: usize,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        optim: OptimArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Train a center-of-interest predictor.
    TrainInterest {
        /// Users CSV; synthetic users are generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        n_users: usize,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        optim: OptimArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Accuracy and loss of a saved model on labeled data.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Evaluate only the test side of a seeded split.
        #[arg(long)]
        test_split: bool,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Classify text, or predict interests for users in a CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with_all = ["file", "users"])]
        text: Option<String>,
        #[arg(long, conflicts_with = "users")]
        file: Option<PathBuf>,
        #[arg(long)]
        users: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Record a click on a document and update the user's profile.
    Feedback {
        /// Domain model; events are queued when it cannot be loaded.
        #[arg(long)]
        model: PathBuf,
        /// Corpus the document id refers to.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        user: String,
        #[arg(long)]
        document: String,
        #[arg(long)]
        clicked: bool,
        #[arg(long, default_value_t = 0.0)]
        reading_time: f64,
        #[arg(long, default_value_t = 30.0)]
        threshold: f64,
        #[command(flatten)]
        common: Common,
    },
    /// TF-IDF search over a corpus.
    Search {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Search, then rerank with a user's profile.
    Rerank {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        user: String,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic users.csv.
    GenUsers {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Print the parameter tables and optionally train every model.
    ReproTables {
        /// Corpus directory; phase-one models are trained only when given.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        train: bool,
        #[command(flatten)]
        common: Common,
    },
}
