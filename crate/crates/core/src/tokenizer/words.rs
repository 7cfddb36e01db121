use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// A lowercased word with its byte span in the original text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Splits on whitespace and punctuation boundaries. Runs of letters, digits
/// and combining marks form words; every other non-space character is a word
/// of its own. Words are lowercased and NFC-normalized.
pub fn word_tokenize(text: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut current: Option<usize> = None;
    let flush = |start: usize, end: usize, words: &mut Vec<Word>| {
        let raw = &text[start..end];
        words.push(Word {
            text: raw.to_lowercase().nfc().collect(),
            start,
            end,
        });
    };
    for (i, c) in text.char_indices() {
        if is_word_char(c) {
            current.get_or_insert(i);
            continue;
        }
        if let Some(start) = current.take() {
            flush(start, i, &mut words);
        }
        if !c.is_whitespace() {
            flush(i, i + c.len_utf8(), &mut words);
        }
    }
    if let Some(start) = current {
        flush(start, text.len(), &mut words);
    }
    words
}
