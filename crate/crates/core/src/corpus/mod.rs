//! Labeled document ingestion, length filtering and train/test splitting.

mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synthetic::{
    label_name, make_synthetic_corpus, marker_vocabulary, marker_words, MARKERS_PER_CLASS,
};

/// Default strict upper bound on whitespace word count.
pub const DEFAULT_MAX_WORDS: usize = 250;

/// One labeled free-text document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub id: String,
    pub text: String,
    pub label: String,
}

impl RawDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: label.into(),
        }
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// Ordered category names with a dense `name → class id` index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSchema {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for LabelSchema {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<LabelSchema> for Vec<String> {
    fn from(schema: LabelSchema) -> Self {
        schema.labels
    }
}

impl LabelSchema {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate label {l:?} in schema")));
            }
        }
        Ok(Self { labels, index })
    }

    /// Sorted distinct labels of `docs`.
    pub fn from_documents(docs: &[RawDocument]) -> Self {
        let mut labels: Vec<String> = docs.iter().map(|d| d.label.clone()).collect();
        labels.sort();
        labels.dedup();
        Self::new(labels).expect("deduplicated")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }
}

/// Disjoint train and test partitions of a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<RawDocument>,
    pub test: Vec<RawDocument>,
    pub seed: u64,
    pub train_fraction: f64,
    /// False when some label had fewer than two documents.
    pub stratified: bool,
}

#[derive(Deserialize)]
struct Line {
    id: String,
    text: String,
    label: String,
}

/// Reads a JSONL corpus: one `{"id", "text", "label"}` object per line.
/// Blank lines are skipped; unknown fields are ignored.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<RawDocument>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&content, path)
}

pub(crate) fn parse_corpus(content: &str, path: &Path) -> Result<Vec<RawDocument>> {
    let mut docs = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in content.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(raw).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg: e.to_string(),
        })?;
        if parsed.id.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                msg: "empty document id".into(),
            });
        }
        if let Some(&first) = seen.get(&parsed.id) {
            return Err(Error::DuplicateId {
                path: path.to_path_buf(),
                id: parsed.id,
                first,
                second: line_no,
            });
        }
        seen.insert(parsed.id.clone(), line_no);
        docs.push(RawDocument {
            id: parsed.id,
            text: parsed.text,
            label: parsed.label,
        });
    }
    Ok(docs)
}

/// Serializes documents in the format [`load_corpus`] reads.
pub fn corpus_to_jsonl(docs: &[RawDocument]) -> String {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d).expect("strings serialize"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(path: impl AsRef<Path>, docs: &[RawDocument]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(corpus_to_jsonl(docs).as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// Keeps documents with strictly fewer than `max_words` whitespace words.
pub fn filter_by_length(docs: &[RawDocument], max_words: usize) -> Vec<RawDocument> {
    docs.iter()
        .filter(|d| d.word_count() < max_words)
        .cloned()
        .collect()
}

// Guards ceil/floor against representation error such as 0.7 * 10 = 7.000000000000001.
const ROUNDING_SLACK: f64 = 1e-9;

/// Seeded train/test split. Stratified per label when every label has at
/// least two documents, otherwise a plain shuffle (with a logged warning).
pub fn split(docs: &[RawDocument], seed: u64, train_fraction: f64) -> Result<CorpusSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    if docs.len() < 2 {
        return Err(Error::invalid(format!(
            "cannot split a corpus of {} document(s)",
            docs.len()
        )));
    }
    let n = docs.len();
    let n_train = ((train_fraction * n as f64 - ROUNDING_SLACK).ceil() as usize).clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, d) in docs.iter().enumerate() {
        by_label.entry(&d.label).or_default().push(i);
    }
    let stratified = by_label.values().all(|v| v.len() >= 2);

    let (mut train_idx, mut test_idx) = if stratified {
        let quotas = stratified_quotas(
            &by_label.values().map(Vec::len).collect::<Vec<_>>(),
            n_train,
            train_fraction,
        );
        let mut train = Vec::with_capacity(n_train);
        let mut test = Vec::with_capacity(n - n_train);
        for (members, quota) in by_label.into_values().zip(quotas) {
            let mut members = members;
            members.shuffle(&mut rng);
            train.extend_from_slice(&members[..quota]);
            test.extend_from_slice(&members[quota..]);
        }
        (train, test)
    } else {
        log::warn!("some label has fewer than 2 documents; falling back to an unstratified split");
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        let test = all.split_off(n_train);
        (all, test)
    };
    train_idx.shuffle(&mut rng);
    test_idx.shuffle(&mut rng);

    Ok(CorpusSplit {
        train: train_idx.iter().map(|&i| docs[i].clone()).collect(),
        test: test_idx.iter().map(|&i| docs[i].clone()).collect(),
        seed,
        train_fraction,
        stratified,
    })
}

/// Largest-remainder allocation of `total` training slots across classes,
/// keeping at least one train and one test document per class.
fn stratified_quotas(sizes: &[usize], total: usize, fraction: f64) -> Vec<usize> {
    let ideal: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut quotas: Vec<usize> = ideal
        .iter()
        .map(|q| (q + ROUNDING_SLACK).floor() as usize)
        .collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - quotas[a] as f64;
        let fb = ideal[b] - quotas[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(assigned);
    for &k in order.iter().cycle().take(sizes.len() * 2) {
        if remaining == 0 {
            break;
        }
        if quotas[k] + 1 < sizes[k] {
            quotas[k] += 1;
            remaining -= 1;
        }
    }
    for (q, &s) in quotas.iter_mut().zip(sizes) {
        *q = (*q).clamp(1, s - 1);
    }
    quotas
}
