//! Attention-based text classification with keyword extraction from
//! attention weights.
//!
//! The pipeline is:
//!
//! 1. [`corpus`]: load or synthesize labeled documents, filter by length, split.
//! 2. [`tokenizer`]: word splitting, subword vocabulary induction and
//!    token↔word alignment.
//! 3. [`models`]: three classifier variants sharing one predict/attend surface,
//!    built on the reverse-mode engine in [`autodiff`].
//! 4. [`training`]: mini-batch optimisation and accuracy metrics.
//! 5. [`keywords`]: percentile-threshold keyword extraction and per-category
//!    frequency tables.
//! 6. [`report`]: highlighted documents and a standalone HTML report.

pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod keywords;
pub mod models;
pub mod report;
pub mod tokenizer;
pub mod training;

pub use error::{Error, ErrorKind, Result};
