use std::path::PathBuf;

use attnkw::keywords::GroupBy;
use attnkw::training::{TrainConfig, VocabConfig};
use serde::{Deserialize, Serialize};

/// How a corpus is turned into train and test documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub seed: u64,
    pub train_fraction: f64,
    pub max_words: usize,
    pub vocab: VocabConfig,
}

/// Stored inside every checkpoint so later commands can rebuild the split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub data: DataConfig,
    pub train: TrainConfig,
    /// SHA-256 of the contextual-embedding file, when one was used.
    pub embeddings_hash: Option<String>,
}

/// Which documents `extract` works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    /// Test side of the split recorded in the checkpoint.
    Test,
    /// Training side of the recorded split.
    Train,
    /// Every document of the corpus, without splitting.
    All,
}

impl SplitChoice {
    pub fn name(self) -> &'static str {
        match self {
            SplitChoice::Test => "test",
            SplitChoice::Train => "train",
            SplitChoice::All => "all",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMethod {
    /// Random indexing over document co-occurrence in the training side.
    Cooccurrence,
    /// Independent standard-normal vectors.
    Random,
    /// Token table of a trained ft-att checkpoint.
    Checkpoint,
}

/// Resolved parameters of one run, written as runconfig.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Train {
        corpus: PathBuf,
        embeddings: Option<PathBuf>,
        data: DataConfig,
        train: TrainConfig,
        out: PathBuf,
    },
    Extract {
        checkpoint: PathBuf,
        corpus: PathBuf,
        vocab: PathBuf,
        n: f64,
        stopwords: Option<PathBuf>,
        stopwords_hash: String,
        top: usize,
        group_by: GroupBy,
        split: SplitChoice,
        highlight: usize,
        out: PathBuf,
    },
}

impl RunConfig {
    pub fn with_out(mut self, dir: PathBuf) -> Self {
        match &mut self {
            RunConfig::Train { out, .. } | RunConfig::Extract { out, .. } => *out = dir,
        }
        self
    }
}
