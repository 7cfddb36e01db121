//! Binary checkpoint: magic, format version, a JSON header and then every
//! parameter tensor as row-major little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, VariantKind};
use crate::autodiff::Tensor;
use crate::corpus::LabelSchema;
use crate::error::{Error, Result};
use crate::tokenizer::Vocabulary;

const MAGIC: &[u8; 8] = b"ATTNKWCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    vocab_hash: String,
    labels: LabelSchema,
    training: serde_json::Value,
    tensors: Vec<TensorMeta>,
}

/// A model together with what is needed to use it on new text.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab_hash: String,
    pub labels: LabelSchema,
    /// Training configuration as recorded at save time.
    pub training: serde_json::Value,
}

impl Checkpoint {
    pub fn new(
        model: Model,
        vocab: &Vocabulary,
        labels: LabelSchema,
        training: serde_json::Value,
    ) -> Result<Self> {
        if model.config().vocab_size != vocab.len() {
            return Err(Error::TokenOutOfRange {
                id: vocab.len().saturating_sub(1) as u32,
                vocab_size: model.config().vocab_size,
            });
        }
        if model.config().num_classes != labels.len() {
            return Err(Error::invalid(format!(
                "model has {} classes, label schema has {}",
                model.config().num_classes,
                labels.len()
            )));
        }
        Ok(Self {
            model,
            vocab_hash: vocab.hash(),
            labels,
            training,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let entries = self.model.params().entries();
        let header = Header {
            model: self.model.config().clone(),
            vocab_hash: self.vocab_hash.clone(),
            labels: self.labels.clone(),
            training: self.training.clone(),
            tensors: entries
                .iter()
                .map(|e| TensorMeta {
                    name: e.name.clone(),
                    shape: e.value.shape().to_vec(),
                    trainable: e.trainable,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.model.params().scalar_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for e in entries {
            for v in e.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not an attnkw checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..).ok_or_else(|| bad("truncated header"))?;
        let json = body
            .get(..header_len)
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(json)?;
        let mut data = &body[header_len..];

        let contextual = match header.model.kind {
            VariantKind::PtAttBilstm => {
                let dim = header
                    .model
                    .embedding_dim
                    .ok_or_else(|| bad("contextual variant without embedding width"))?;
                Some(Tensor::zeros(&[header.model.vocab_size, dim]))
            }
            _ => None,
        };
        let mut model = Model::new(header.model.clone(), 0, contextual)?;
        let expected: Vec<TensorMeta> = model
            .params()
            .entries()
            .iter()
            .map(|e| TensorMeta {
                name: e.name.clone(),
                shape: e.value.shape().to_vec(),
                trainable: e.trainable,
            })
            .collect();
        if expected != header.tensors {
            return Err(bad(
                "tensor layout does not match the recorded model configuration",
            ));
        }
        for (i, meta) in header.tensors.iter().enumerate() {
            let count: usize = meta.shape.iter().product();
            let raw = data
                .get(..count * 8)
                .ok_or_else(|| bad("truncated tensor data"))?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            *model.params_mut().value_mut(i) = Tensor::new(meta.shape.clone(), values)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", meta.name)))?;
            data = &data[count * 8..];
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after tensor data"));
        }
        Ok(Self {
            model,
            vocab_hash: header.vocab_hash,
            labels: header.labels,
            training: header.training,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    /// Reads a checkpoint without checking it against a vocabulary.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Reads a checkpoint and rejects it unless `vocab` is the vocabulary it
    /// was trained with.
    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self> {
        let ck = Self::read(path)?;
        ck.check_vocabulary(vocab)?;
        Ok(ck)
    }

    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.hash();
        if found != self.vocab_hash {
            return Err(Error::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found,
            });
        }
        Ok(())
    }
}
