//! The three classifier variants behind one interface: each turns a tokenized
//! document into class probabilities plus an attention profile over its tokens.
//!
//! * `ft-att`: a small transformer encoder trained end to end, followed by a
//!   dense token-attention layer whose relu output feeds the classifier.
//! * `pt-att-bilstm`: frozen per-token vectors from a contextual-embedding
//!   file, a BiLSTM and additive attention.
//! * `oe-att-bilstm`: the same BiLSTM stack over one-hot token vectors.

mod checkpoint;
mod embedding;
mod layers;
mod params;
mod transformer;


use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_in_place, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenizedDocument, PAD_ID};

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use embedding::{ContextualEmbeddings, EmbeddingLayer};
pub use layers::{
    AttentionOutput, BiLstmAttention, BiLstmEncoder, BiLstmOutput, ClassifierHead, LstmCell,
    LstmState, SequenceInput, TokenAttentionHead, TokenAttentionOutput,
};
pub use params::{ParamEntry, ParamId, ParamStore, INIT_SCALE};
pub use transformer::{EncoderShape, EncoderStandIn};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantKind {
    #[serde(rename = "ft-att")]
    FtAtt,
    #[serde(rename = "pt-att-bilstm")]
    PtAttBilstm,
    #[serde(rename = "oe-att-bilstm")]
    OeAttBilstm,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [
        VariantKind::FtAtt,
        VariantKind::PtAttBilstm,
        VariantKind::OeAttBilstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::FtAtt => "ft-att",
            VariantKind::PtAttBilstm => "pt-att-bilstm",
            VariantKind::OeAttBilstm => "oe-att-bilstm",
        }
    }

    /// Label used in reports.
    pub fn title(self) -> &'static str {
        match self {
            VariantKind::FtAtt => "FT+Att",
            VariantKind::PtAttBilstm => "PT+Att+BiLSTM",
            VariantKind::OeAttBilstm => "OE+Att+BiLSTM",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                "unknown variant {s:?}; valid variants are ft-att, pt-att-bilstm, oe-att-bilstm"
            ))
            })
    }
}

/// Architecture hyperparameters. `max_tokens` sizes the token-attention layer
/// and the position table of the encoder; the BiLSTM variants accept any length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: VariantKind,
    pub vocab_size: usize,
    pub num_classes: usize,
    pub max_tokens: usize,
    /// BiLSTM hidden size.
    pub hidden: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    /// Width of the contextual vectors (`pt-att-bilstm` only).
    pub embedding_dim: Option<usize>,
}

impl ModelConfig {
    pub fn new(
        kind: VariantKind,
        vocab_size: usize,
        num_classes: usize,
        max_tokens: usize,
    ) -> Self {
        Self {
            kind,
            vocab_size,
            num_classes,
            max_tokens,
            hidden: 64,
            d_model: 64,
            heads: 2,
            layers: 2,
            ff_dim: 128,
            embedding_dim: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::invalid(
                "vocabulary must hold at least the two special tokens",
            ));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("a classifier needs at least two classes"));
        }
        if self.max_tokens == 0 || self.hidden == 0 || self.d_model == 0 {
            return Err(Error::invalid("model sizes must be positive"));
        }
        Ok(())
    }
}

/// Per-token interpretive weights of one document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionProfile {
    pub doc_id: String,
    pub weights: Vec<f64>,
    pub mask: Vec<bool>,
}

impl AttentionProfile {
    pub fn new(doc_id: impl Into<String>, weights: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if weights.len() != mask.len() {
            return Err(Error::Shape {
                op: "attention_profile",
                lhs: vec![weights.len()],
                rhs: vec![mask.len()],
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NonFinite {
                op: "attention_profile",
            });
        }
        if weights.iter().zip(&mask).any(|(&w, &m)| !m && w != 0.0) {
            return Err(Error::invalid("masked positions must carry zero attention"));
        }
        Ok(Self {
            doc_id: doc_id.into(),
            weights,
            mask,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn unmasked_sum(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(w, _)| w)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: Vec<f64>,
    pub profile: AttentionProfile,
}

/// Intermediate values of one forward pass, padded to the document length.
#[derive(Clone, Debug, PartialEq)]
pub struct Inspection {
    /// BiLSTM output H (`len × hidden`), zero at padding.
    pub hidden: Option<Tensor>,
    /// Context vector CV (`1 × hidden`).
    pub context: Option<Tensor>,
    /// Raw attention scores before the softmax.
    pub scores: Tensor,
    pub weights: Vec<f64>,
    pub logits: Tensor,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug)]
enum Arch {
    Token {
        embedding: EmbeddingLayer,
        head: TokenAttentionHead,
        classifier: ClassifierHead,
    },
    Recurrent {
        embedding: EmbeddingLayer,
        encoder: BiLstmEncoder,
        attention: BiLstmAttention,
        classifier: ClassifierHead,
    },
}

struct Forward {
    logits: Var,
    scores: Var,
    weights: Var,
    hidden: Option<Var>,
    context: Option<Var>,
    real_len: usize,
}

/// A classifier variant with its parameters. Immutable models are `Sync` and
/// may serve predictions from several threads.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    arch: Arch,
}

impl Model {
    /// Fresh model with seeded uniform initialisation. `pt-att-bilstm` needs
    /// the frozen `vocab_size × dim` table; other variants take `None`.
    pub fn new(mut config: ModelConfig, seed: u64, contextual: Option<Tensor>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let classes = config.num_classes;
        let arch = match (config.kind, contextual) {
            (VariantKind::FtAtt, None) => {
                let shape = EncoderShape {
                    vocab_size: config.vocab_size,
                    dim: config.d_model,
                    heads: config.heads,
                    layers: config.layers,
                    ff_dim: config.ff_dim,
                    max_positions: config.max_tokens,
                };
                let encoder = EncoderStandIn::new(&mut params, shape, &mut rng)?;
                let head = TokenAttentionHead::new(
                    &mut params,
                    config.max_tokens,
                    config.d_model,
                    &mut rng,
                );
                let classifier =
                    ClassifierHead::new(&mut params, config.max_tokens, classes, &mut rng);
                Arch::Token {
                    embedding: EmbeddingLayer::Encoder(encoder),
                    head,
                    classifier,
                }
            }
            (VariantKind::PtAttBilstm, Some(mut table)) => {
                let (rows, dim) = table.dims2();
                if rows != config.vocab_size || table.shape().len() != 2 {
                    return Err(Error::Shape {
                        op: "contextual_embedding",
                        lhs: table.shape().to_vec(),
                        rhs: vec![config.vocab_size, dim],
                    });
                }
                table.data_mut()[PAD_ID as usize * dim..(PAD_ID as usize + 1) * dim].fill(0.0);
                config.embedding_dim = Some(dim);
                let embedding = EmbeddingLayer::contextual(&mut params, table);
                Self::recurrent(&mut params, embedding, config.hidden, classes, &mut rng)
            }
            (VariantKind::OeAttBilstm, None) => {
                let embedding = EmbeddingLayer::OneHot {
                    vocab_size: config.vocab_size,
                };
                Self::recurrent(&mut params, embedding, config.hidden, classes, &mut rng)
            }
            (VariantKind::PtAttBilstm, None) => {
                return Err(Error::invalid(
                    "pt-att-bilstm needs a contextual embedding table",
                ));
            }
            (kind, Some(_)) => {
                return Err(Error::invalid(format!(
                    "{kind} does not take a contextual embedding table"
                )));
            }
        };
        Ok(Self {
            config,
            params,
            arch,
        })
    }

    fn recurrent(
        params: &mut ParamStore,
        embedding: EmbeddingLayer,
        hidden: usize,
        classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Arch {
        let encoder = BiLstmEncoder::new(params, embedding.dim(), hidden, rng);
        let attention = BiLstmAttention::new(params, hidden, rng);
        let classifier = ClassifierHead::new(params, hidden, classes, rng);
        Arch::Recurrent {
            embedding,
            encoder,
            attention,
            classifier,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> VariantKind {
        self.config.kind
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn embedding(&self) -> &EmbeddingLayer {
        match &self.arch {
            Arch::Token { embedding, .. } | Arch::Recurrent { embedding, .. } => embedding,
        }
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params
            .entries()
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.value)
    }

    /// Replaces a named tensor, keeping its shape.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let index = self
            .params
            .entries()
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| Error::invalid(format!("model has no parameter {name:?}")))?;
        let slot = self.params.value_mut(index);
        if slot.shape() != value.shape() {
            return Err(Error::Shape {
                op: "set_param",
                lhs: slot.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }

    /// Token-embedding table of the `ft-att` encoder.
    pub fn token_embedding_table(&self) -> Option<&Tensor> {
        match self.embedding() {
            EmbeddingLayer::Encoder(enc) => Some(self.params.get(enc.token_embedding)),
            _ => None,
        }
    }

    /// Vectors the encoder stack sees for each position of `doc`.
    pub fn embed(&self, doc: &TokenizedDocument) -> Result<Tensor> {
        self.embedding().embed(&self.params, doc)
    }

    fn check_doc(&self, doc: &TokenizedDocument) -> Result<usize> {
        let vocab_size = self.config.vocab_size;
        if let Some(&id) = doc.token_ids.iter().find(|&&id| id as usize >= vocab_size) {
            return Err(Error::TokenOutOfRange { id, vocab_size });
        }
        let len = doc.real_len();
        if len == 0 {
            return Err(Error::AllMasked { op: "predict" });
        }
        if self.config.kind == VariantKind::FtAtt && len > self.config.max_tokens {
            return Err(Error::SequenceTooLong {
                len,
                max: self.config.max_tokens,
            });
        }
        Ok(len)
    }

    fn forward(&self, g: &mut Graph<'_>, p: &[Var], doc: &TokenizedDocument) -> Result<Forward> {
        let real_len = self.check_doc(doc)?;
        let ids = &doc.token_ids[..real_len];
        match &self.arch {
            Arch::Token {
                embedding,
                head,
                classifier,
            } => {
                let EmbeddingLayer::Encoder(encoder) = embedding else {
                    unreachable!("token architecture always wraps an encoder");
                };
                let reps = encoder.encode(g, p, ids)?;
                let out = head.forward(g, p, reps)?;
                let logits = classifier.logits(g, p, out.activations)?;
                Ok(Forward {
                    logits,
                    scores: out.scores,
                    weights: out.weights,
                    hidden: None,
                    context: None,
                    real_len,
                })
            }
            Arch::Recurrent {
                embedding,
                encoder,
                attention,
                classifier,
            } => {
                let input = match embedding {
                    EmbeddingLayer::OneHot { .. } => SequenceInput::OneHot(ids),
                    EmbeddingLayer::Lookup { table, .. }
                    | EmbeddingLayer::Contextual { table, .. } => {
                        let rows: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
                        SequenceInput::Dense(g.gather_rows(p[table.index()], &rows)?)
                    }
                    EmbeddingLayer::Encoder(enc) => SequenceInput::Dense(enc.encode(g, p, ids)?),
                };
                let h = encoder.encode(g, p, input, real_len)?;
                let att = attention.attend(g, p, h.combined, None)?;
                let logits = classifier.logits(g, p, att.context)?;
                Ok(Forward {
                    logits,
                    scores: att.scores,
                    weights: att.weights,
                    hidden: Some(h.combined),
                    context: Some(att.context),
                    real_len,
                })
            }
        }
    }

    /// Cross-entropy of `label` as a scalar node on `g`, with the parameter
    /// leaves supplied by the caller.
    pub fn loss_on_graph(
        &self,
        g: &mut Graph<'_>,
        p: &[Var],
        doc: &TokenizedDocument,
        label: usize,
    ) -> Result<Var> {
        if label >= self.config.num_classes {
            return Err(Error::invalid(format!(
                "label {label} outside {} classes",
                self.config.num_classes
            )));
        }
        let fwd = self.forward(g, p, doc)?;
        g.cross_entropy(fwd.logits, label)
    }

    pub fn loss(&self, doc: &TokenizedDocument, label: usize) -> Result<f64> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let loss = self.loss_on_graph(&mut g, &p, doc, label)?;
        Ok(g.value(loss).data()[0])
    }

    /// Loss and one flat gradient per parameter tensor (`None` for frozen ones).
    pub fn loss_and_grads(
        &self,
        doc: &TokenizedDocument,
        label: usize,
    ) -> Result<(f64, Vec<Option<Vec<f64>>>)> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let loss = self.loss_on_graph(&mut g, &p, doc, label)?;
        let value = g.value(loss).data()[0];
        let grads = g.backward(loss)?.into_param_grads(self.params.len());
        Ok((value, grads))
    }

    pub fn predict(&self, doc: &TokenizedDocument) -> Result<Prediction> {
        let inspection = self.inspect(doc)?;
        let mut probabilities = inspection.logits.into_data();
        softmax_in_place(&mut probabilities);
        let profile =
            AttentionProfile::new(doc.doc_id.clone(), inspection.weights, doc.mask.clone())?;
        Ok(Prediction {
            class: argmax(&probabilities),
            probabilities,
            profile,
        })
    }

    pub fn inspect(&self, doc: &TokenizedDocument) -> Result<Inspection> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g);
        let fwd = self.forward(&mut g, &p, doc)?;
        let len = doc.len();
        let mut weights = vec![0.0; len];
        weights[..fwd.real_len].copy_from_slice(&g.value(fwd.weights).data()[..fwd.real_len]);
        let hidden = fwd.hidden.map(|h| {
            let h = g.value(h);
            let width = h.dims2().1;
            let mut data = h.data().to_vec();
            data.resize(len * width, 0.0);
            Tensor::from_raw(vec![len, width], data)
        });
        Ok(Inspection {
            hidden,
            context: fwd.context.map(|c| g.value(c).clone()),
            scores: g.value(fwd.scores).clone(),
            weights,
            logits: g.value(fwd.logits).clone(),
        })
    }
}
