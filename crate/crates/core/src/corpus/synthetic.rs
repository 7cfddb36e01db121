//! Synthetic corpus with known keyword ground truth.
//!
//! Every class owns [`MARKERS_PER_CLASS`] pseudo-words that never occur in
//! any other class. A document is neutral filler text with one to three of
//! its class's markers dropped in at random positions.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RawDocument;
use crate::error::{Error, Result};

pub const MARKERS_PER_CLASS: usize = 4;

const MIN_WORDS: usize = 30;
const MAX_WORDS: usize = 200;

// Two-letter syllables; markers are "q" followed by a base-16 syllable code,
// which no filler word matches.
const SYLLABLES: [&str; 16] = [
    "ba", "de", "fi", "go", "ku", "la", "me", "ni", "po", "ru", "sa", "te", "vi", "wo", "xu", "zy",
];

const FILLER: &[&str] = &[
    "the",
    "a",
    "an",
    "and",
    "or",
    "of",
    "to",
    "in",
    "on",
    "with",
    "for",
    "at",
    "by",
    "from",
    "is",
    "was",
    "were",
    "has",
    "had",
    "have",
    "been",
    "this",
    "that",
    "she",
    "he",
    "her",
    "his",
    "they",
    "their",
    "patient",
    "presents",
    "reports",
    "denies",
    "states",
    "history",
    "visit",
    "today",
    "prior",
    "since",
    "last",
    "week",
    "month",
    "year",
    "years",
    "old",
    "follow",
    "up",
    "noted",
    "recent",
    "change",
    "changes",
    "mild",
    "moderate",
    "severe",
    "daily",
    "night",
    "morning",
    "symptoms",
    "concern",
    "concerns",
    "family",
    "home",
    "work",
    "time",
    "review",
    "plan",
    "discussed",
    "continue",
    "current",
    "previous",
    "started",
    "stopped",
    "reported",
    "feels",
    "feeling",
    "better",
    "worse",
    "stable",
    "overall",
    "normal",
    "general",
    "health",
    "routine",
    "exam",
    "again",
    "about",
    "after",
    "before",
    "during",
    "also",
    "some",
    "any",
    "no",
    "not",
    "without",
    "other",
    "several",
    "episodes",
    "days",
    "hours",
    "per",
    "due",
    "well",
    "here",
    "seen",
    "clinic",
    "referred",
    "evaluation",
    "further",
    "management",
    "medication",
    "medications",
    "therapy",
    "dose",
    "appointment",
    "returns",
    "back",
    "left",
    "right",
];

pub fn label_name(class: usize) -> String {
    format!("category_{class:02}")
}

/// The marker pseudo-words of `class`, in a fixed order.
pub fn marker_words(class: usize) -> Vec<String> {
    (0..MARKERS_PER_CLASS)
        .map(|j| {
            let mut code = class * MARKERS_PER_CLASS + j;
            let mut digits = Vec::new();
            while code > 0 || digits.len() < 3 {
                digits.push(code % SYLLABLES.len());
                code /= SYLLABLES.len();
            }
            let mut word = String::from("q");
            for d in digits.iter().rev() {
                word.push_str(SYLLABLES[*d]);
            }
            word
        })
        .collect()
}

/// Marker word → owning class, for classes `0..num_classes`.
pub fn marker_vocabulary(num_classes: usize) -> HashMap<String, usize> {
    (0..num_classes)
        .flat_map(|k| marker_words(k).into_iter().map(move |w| (w, k)))
        .collect()
}

/// Generates `num_classes × docs_per_class` documents, deterministically in `seed`.
pub fn make_synthetic_corpus(
    num_classes: usize,
    docs_per_class: usize,
    seed: u64,
) -> Result<Vec<RawDocument>> {
    if num_classes < 2 {
        return Err(Error::invalid(format!(
            "num_classes must be at least 2, got {num_classes}"
        )));
    }
    if docs_per_class < 4 {
        return Err(Error::invalid(format!(
            "docs_per_class must be at least 4, got {docs_per_class}"
        )));
    }
    let markers: Vec<Vec<String>> = (0..num_classes).map(marker_words).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::with_capacity(num_classes * docs_per_class);
    for i in 0..docs_per_class {
        for (k, class_markers) in markers.iter().enumerate() {
            let len = rng.random_range(MIN_WORDS..=MAX_WORDS);
            let n_markers = rng.random_range(1..=3);
            let slots = rand::seq::index::sample(&mut rng, len, n_markers);
            let mut words: Vec<String> = (0..len)
                .map(|_| FILLER.choose(&mut rng).expect("non-empty").to_string())
                .collect();
            for slot in slots.iter() {
                words[slot] = class_markers.choose(&mut rng).expect("non-empty").clone();
            }
            let mut text = String::new();
            let mut sentence = 0usize;
            let mut sentence_len = rng.random_range(8..=15);
            for (w, word) in words.iter().enumerate() {
                if w > 0 {
                    text.push(' ');
                }
                text.push_str(word);
                sentence += 1;
                if sentence == sentence_len || w + 1 == words.len() {
                    text.push('.');
                    sentence = 0;
                    sentence_len = rng.random_range(8..=15);
                }
            }
            docs.push(RawDocument::new(
                format!("syn-{k:02}-{i:03}"),
                text,
                label_name(k),
            ));
        }
    }
    Ok(docs)
}
