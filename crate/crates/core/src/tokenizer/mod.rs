//! Words, subword tokens and the token↔word alignment.

mod vocab;
mod words;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::RawDocument;
use crate::error::{Error, Result};

pub use vocab::hex_digest;
pub use vocab::{
    build_vocab, Vocabulary, CONTINUATION_PREFIX, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN,
};
pub use words::{word_tokenize, Word};

/// Default sequence length, matching the usual 512-token encoder limit.
pub const DEFAULT_MAX_TOKENS: usize = 512;
/// Words longer than this many characters map straight to the unknown token.
const MAX_WORD_CHARS: usize = 100;

/// A document as a fixed-length, right-padded token sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub doc_id: String,
    pub words: Vec<Word>,
    pub token_ids: Vec<u32>,
    /// Parent word of each position; `None` for padding.
    pub alignment: Vec<Option<usize>>,
    pub mask: Vec<bool>,
}

impl TokenizedDocument {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of real (unmasked) tokens. Real tokens always form a prefix.
    pub fn real_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    pub fn real_ids(&self) -> &[u32] {
        &self.token_ids[..self.real_len()]
    }

    /// Number of leading words covered by tokens.
    pub fn covered_words(&self) -> usize {
        self.alignment.iter().flatten().last().map_or(0, |&w| w + 1)
    }

    /// Token positions belonging to `word`; empty when the word was truncated.
    pub fn word_tokens(&self, word: usize) -> Range<usize> {
        let start = self.alignment.iter().position(|&a| a == Some(word));
        match start {
            None => 0..0,
            Some(s) => {
                let n = self.alignment[s..]
                    .iter()
                    .take_while(|&&a| a == Some(word))
                    .count();
                s..s + n
            }
        }
    }

    /// The same document re-padded to `total` positions.
    pub fn with_padding(&self, total: usize) -> Result<Self> {
        let real = self.real_len();
        if total < real {
            return Err(Error::invalid(format!(
                "document {} has {real} tokens, cannot pad to {total}",
                self.doc_id
            )));
        }
        let mut out = self.clone();
        out.token_ids.truncate(real);
        out.alignment.truncate(real);
        out.mask.truncate(real);
        out.token_ids.resize(total, PAD_ID);
        out.alignment.resize(total, None);
        out.mask.resize(total, false);
        Ok(out)
    }
}

/// Greedy longest-match-first segmentation of one lowercased word.
/// Returns the unknown token alone when some suffix cannot be matched.
pub fn segment_word(word: &str, vocab: &Vocabulary) -> Vec<u32> {
    if let Some(id) = vocab.id(word) {
        return vec![id];
    }
    let chars: Vec<(usize, char)> = word.char_indices().collect();
    if chars.is_empty() || chars.len() > MAX_WORD_CHARS {
        return vec![UNK_ID];
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut found = None;
        for end in (start + 1..=chars.len()).rev() {
            let lo = chars[start].0;
            let hi = chars.get(end).map_or(word.len(), |c| c.0);
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.push_str(&word[lo..hi]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some((id, end));
                break;
            }
        }
        match found {
            Some((id, end)) => {
                pieces.push(id);
                start = end;
            }
            None => return vec![UNK_ID],
        }
    }
    pieces
}

/// Tokenizes `doc` into exactly `max_tokens` positions. Words are kept whole:
/// the first word whose pieces would overflow the budget ends the sequence.
pub fn tokenize(doc: &RawDocument, vocab: &Vocabulary, max_tokens: usize) -> TokenizedDocument {
    let words = word_tokenize(&doc.text);
    let mut token_ids = Vec::with_capacity(max_tokens);
    let mut alignment = Vec::with_capacity(max_tokens);
    for (wi, w) in words.iter().enumerate() {
        let pieces = segment_word(&w.text, vocab);
        if token_ids.len() + pieces.len() > max_tokens {
            break;
        }
        alignment.extend(std::iter::repeat_n(Some(wi), pieces.len()));
        token_ids.extend(pieces);
    }
    let real = token_ids.len();
    let mut mask = vec![true; real];
    token_ids.resize(max_tokens, PAD_ID);
    alignment.resize(max_tokens, None);
    mask.resize(max_tokens, false);
    TokenizedDocument {
        doc_id: doc.id.clone(),
        words,
        token_ids,
        alignment,
        mask,
    }
}

#[cfg(test)]
mod tests;
