use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::words::word_tokenize;
use crate::corpus::RawDocument;
use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const CONTINUATION_PREFIX: &str = "##";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

const FILE_HEADER: &str = "attnkw-vocab v1";
const SPECIALS: usize = 2;

/// Ordered token inventory with dense ids. Id 0 is the pad token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn with_specials() -> Self {
        let mut v = Self {
            entries: Vec::new(),
            index: HashMap::new(),
        };
        v.push(PAD_TOKEN);
        v.push(UNK_TOKEN);
        v
    }

    /// Builds a vocabulary from an explicit token list; specials are
    /// prepended when absent.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::with_specials();
        for t in tokens {
            let t = t.as_ref();
            if t == PAD_TOKEN || t == UNK_TOKEN {
                continue;
            }
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid vocabulary token {t:?}")));
            }
            if !v.push(t) {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(v)
    }

    fn push(&mut self, token: &str) -> bool {
        if self.index.contains_key(token) {
            return false;
        }
        self.index
            .insert(token.to_string(), self.entries.len() as u32);
        self.entries.push(token.to_string());
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.entries
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// File form: a header line, then one token per line in id order.
    pub fn to_file_string(&self) -> String {
        let mut out =
            String::with_capacity(self.entries.iter().map(|e| e.len() + 1).sum::<usize>() + 16);
        out.push_str(FILE_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(e);
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(content: &str, path: &Path) -> Result<Self> {
        let mut lines = content.lines();
        match lines.next() {
            Some(FILE_HEADER) => {}
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    msg: format!("expected header {FILE_HEADER:?}, found {other:?}"),
                })
            }
        }
        let mut v = Self {
            entries: Vec::new(),
            index: HashMap::new(),
        };
        for (i, line) in lines.enumerate() {
            if !v.push(line) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    msg: format!("duplicate token {line:?}"),
                });
            }
        }
        if v.token(PAD_ID) != Some(PAD_TOKEN) || v.token(UNK_ID) != Some(UNK_TOKEN) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 2,
                msg: "vocabulary must start with the pad and unknown tokens".into(),
            });
        }
        Ok(v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_string(&content, path)
    }

    /// Hex SHA-256 of the file form.
    pub fn hash(&self) -> String {
        hex_digest(self.to_file_string().as_bytes())
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Frequency-driven subword induction.
///
/// The vocabulary starts with the special tokens, every character seen (both
/// as a word-initial piece and as a `##` continuation), and every word with
/// frequency at least `min_freq`. Adjacent-piece merges are then added in
/// order of corpus frequency, ties broken by the lexicographic order of the
/// pair, until `target_size` tokens exist or no pair reaches `min_freq`.
pub fn build_vocab(
    docs: &[RawDocument],
    target_size: usize,
    min_freq: usize,
) -> Result<Vocabulary> {
    if min_freq == 0 {
        return Err(Error::invalid("min_freq must be at least 1"));
    }
    if target_size <= SPECIALS {
        return Err(Error::invalid(format!(
            "target_size must exceed {SPECIALS} special tokens"
        )));
    }
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for d in docs {
        for w in word_tokenize(&d.text) {
            *freq.entry(w.text).or_default() += 1;
        }
    }
    if freq.is_empty() {
        return Err(Error::invalid(
            "cannot build a vocabulary from an empty corpus",
        ));
    }

    let mut vocab = Vocabulary::with_specials();
    let chars: BTreeSet<char> = freq.keys().flat_map(|w| w.chars()).collect();
    for c in &chars {
        vocab.push(&c.to_string());
    }
    for c in &chars {
        vocab.push(&format!("{CONTINUATION_PREFIX}{c}"));
    }
    let mut frequent: Vec<(&String, usize)> = freq
        .iter()
        .filter(|(_, &n)| n >= min_freq)
        .map(|(w, &n)| (w, n))
        .collect();
    frequent.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    for (w, _) in frequent {
        vocab.push(w);
    }

    let mut segmented: Vec<(Vec<String>, usize)> = freq
        .iter()
        .map(|(w, &n)| {
            let pieces = w
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        c.to_string()
                    } else {
                        format!("{CONTINUATION_PREFIX}{c}")
                    }
                })
                .collect();
            (pieces, n)
        })
        .collect();

    while vocab.len() < target_size {
        let mut pairs: HashMap<(&str, &str), usize> = HashMap::new();
        for (pieces, n) in &segmented {
            for pair in pieces.windows(2) {
                *pairs
                    .entry((pair[0].as_str(), pair[1].as_str()))
                    .or_default() += n;
            }
        }
        let best = pairs
            .into_iter()
            .filter(|&(_, n)| n >= min_freq)
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        let Some(((left, right), _)) = best else {
            break;
        };
        let (left, right) = (left.to_string(), right.to_string());
        let merged = format!(
            "{left}{}",
            right.strip_prefix(CONTINUATION_PREFIX).unwrap_or(&right)
        );
        for (pieces, _) in segmented.iter_mut() {
            merge_pair(pieces, &left, &right, &merged);
        }
        vocab.push(&merged);
    }
    Ok(vocab)
}

fn merge_pair(pieces: &mut Vec<String>, left: &str, right: &str, merged: &str) {
    let mut i = 0;
    while i + 1 < pieces.len() {
        if pieces[i] == left && pieces[i + 1] == right {
            pieces[i] = merged.to_string();
            pieces.remove(i + 1);
        }
        i += 1;
    }
}
