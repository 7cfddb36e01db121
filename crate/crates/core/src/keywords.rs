//! Keyword extraction from attention profiles and per-category frequency
//! tables.
//!
//! A token is selected when its distance from the document's largest
//! attention weight, `att_max - att_i`, is at most the `n`-th percentile of
//! all such distances over the real tokens. A word becomes a keyword as soon
//! as one of its tokens is selected.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::AttentionProfile;
use crate::tokenizer::{hex_digest, TokenizedDocument};

pub const DEFAULT_PERCENTILE: f64 = 10.0;
pub const DEFAULT_TOP_WORDS: usize = 10;

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Linear-interpolation percentile: with the values sorted ascending and
/// `r = (n / 100)(m - 1)`, the result is `v[floor r] + frac(r)(v[ceil r] - v[floor r])`.
pub fn percentile(values: &[f64], n: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("percentile of an empty list"));
    }
    if !(0.0..=100.0).contains(&n) {
        return Err(Error::invalid(format!(
            "percentile rank must lie in [0, 100], got {n}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "percentile" });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (n / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Ok(sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Token-level result of the threshold rule.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSelection {
    pub att_max: f64,
    pub threshold: f64,
    /// One flag per position; always false at masked positions.
    pub selected: Vec<bool>,
}

/// Applies the threshold rule to raw weights. Masked positions take no part
/// in the maximum or the percentile.
pub fn select_tokens(weights: &[f64], mask: &[bool], n: f64) -> Result<TokenSelection> {
    if weights.len() != mask.len() {
        return Err(Error::Shape {
            op: "select_tokens",
            lhs: vec![weights.len()],
            rhs: vec![mask.len()],
        });
    }
    let real: Vec<f64> = weights
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&w, _)| w)
        .collect();
    if real.is_empty() {
        return Err(Error::AllMasked {
            op: "select_tokens",
        });
    }
    let att_max = real.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let diffs: Vec<f64> = real.iter().map(|w| att_max - w).collect();
    let threshold = percentile(&diffs, n)?;
    let selected = weights
        .iter()
        .zip(mask)
        .map(|(&w, &m)| m && att_max - w <= threshold)
        .collect();
    Ok(TokenSelection {
        att_max,
        threshold,
        selected,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub word: String,
    /// Largest attention weight among the word's tokens.
    pub weight: f64,
    /// Position of the word in the document's word list.
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub doc_id: String,
    pub threshold: f64,
    pub att_max: f64,
    pub n: f64,
    /// In document order, one entry per word.
    pub keywords: Vec<Keyword>,
}

impl KeywordSet {
    pub fn contains_index(&self, index: usize) -> bool {
        self.keywords
            .binary_search_by_key(&index, |k| k.index)
            .is_ok()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.keywords.iter().map(|k| k.word.as_str())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Extracts the keywords of `doc` from its attention profile at percentile `n`.
pub fn extract_keywords(
    profile: &AttentionProfile,
    doc: &TokenizedDocument,
    n: f64,
) -> Result<KeywordSet> {
    if profile.len() != doc.len() {
        return Err(Error::Shape {
            op: "extract_keywords",
            lhs: vec![profile.len()],
            rhs: vec![doc.len()],
        });
    }
    if profile.mask != doc.mask {
        return Err(Error::invalid(format!(
            "attention profile and document {} disagree on the padding mask",
            doc.doc_id
        )));
    }
    let selection = select_tokens(&profile.weights, &profile.mask, n)?;

    let hit: BTreeSet<usize> = doc
        .alignment
        .iter()
        .zip(&selection.selected)
        .filter_map(|(word, &sel)| if sel { *word } else { None })
        .collect();
    let keywords = hit
        .into_iter()
        .map(|index| {
            let weight = doc
                .word_tokens(index)
                .map(|p| profile.weights[p])
                .fold(f64::NEG_INFINITY, f64::max);
            Keyword {
                word: doc.words[index].text.clone(),
                weight,
                index,
            }
        })
        .collect();
    Ok(KeywordSet {
        doc_id: doc.doc_id.clone(),
        threshold: selection.threshold,
        att_max: selection.att_max,
        n,
        keywords,
    })
}

/// A stopword list together with the hash of its file contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stopwords {
    words: BTreeSet<String>,
    hash: String,
}

impl Stopwords {
    /// The bundled English list.
    pub fn english() -> Self {
        Self::from_file_string(ENGLISH_STOPWORDS)
    }

    pub fn empty() -> Self {
        Self::from_file_string("")
    }

    /// One word per line; blank lines are skipped and words are lowercased.
    pub fn from_file_string(content: &str) -> Self {
        Self {
            words: content
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_lowercase)
                .collect(),
            hash: hex_digest(content.as_bytes()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_file_string(&content))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Hex SHA-256 of the file contents.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

/// Which label a document's keywords are counted under.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    #[default]
    True,
    Predicted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordFrequency {
    pub word: String,
    /// Number of documents in which the word was extracted.
    pub documents: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryKeywordTable {
    pub category: String,
    /// Documents counted under this category.
    pub documents: usize,
    pub entries: Vec<WordFrequency>,
}

/// Counts, per category, the documents whose keyword set contains each
/// non-stopword word, and keeps the `top` most frequent (ties in
/// lexicographic order).
///
/// Tables follow the order of `categories`; a category that only appears in
/// `assigned` is appended after them in lexicographic order.
pub fn aggregate_category_keywords(
    categories: &[String],
    assigned: &[(&str, &KeywordSet)],
    stopwords: &Stopwords,
    top: usize,
) -> Vec<CategoryKeywordTable> {
    let mut counts: HashMap<&str, (usize, HashMap<&str, usize>)> = HashMap::new();
    for (category, set) in assigned {
        let (docs, words) = counts.entry(category).or_default();
        *docs += 1;
        let present: BTreeSet<&str> = set.words().filter(|w| !stopwords.contains(w)).collect();
        for w in present {
            *words.entry(w).or_default() += 1;
        }
    }

    let mut order: Vec<&str> = categories.iter().map(String::as_str).collect();
    let extra: BTreeSet<&str> = counts
        .keys()
        .copied()
        .filter(|c| !order.contains(c))
        .collect();
    order.extend(extra);

    order
        .into_iter()
        .map(|category| {
            let (documents, words) = counts.remove(category).unwrap_or_default();
            let mut entries: Vec<WordFrequency> = words
                .into_iter()
                .map(|(word, documents)| WordFrequency {
                    word: word.to_string(),
                    documents,
                })
                .collect();
            entries.sort_by(|a, b| {
                b.documents
                    .cmp(&a.documents)
                    .then_with(|| a.word.cmp(&b.word))
            });
            entries.truncate(top);
            CategoryKeywordTable {
                category: category.to_string(),
                documents,
                entries,
            }
        })
        .collect()
}
