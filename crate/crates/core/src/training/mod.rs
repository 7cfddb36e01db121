//! Mini-batch training with cross-entropy loss, and accuracy metrics.

mod metrics;
mod optimizer;


use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSplit, LabelSchema, RawDocument};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::{ContextualEmbeddings, Model, ModelConfig, VariantKind};
use crate::tokenizer::{build_vocab, tokenize, TokenizedDocument, Vocabulary, DEFAULT_MAX_TOKENS};

pub use metrics::{evaluate, ClassAccuracy, Metrics};
pub use optimizer::{Optimizer, OptimizerKind};

/// Documents per gradient chunk. Chunks are summed in order, so the result
/// does not depend on how many threads process them.
const GRADIENT_CHUNK: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: VariantKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Epochs without a new best test accuracy before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay applied to every trainable tensor.
    pub weight_decay: f64,
    /// Return the best-scoring snapshot rather than the last one.
    pub restore_best: bool,
}

impl TrainConfig {
    pub fn new(variant: VariantKind, seed: u64) -> Self {
        Self {
            variant,
            epochs: 30,
            batch_size: 8,
            learning_rate: 5e-3,
            seed,
            optimizer: OptimizerKind::Adam,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            restore_best: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.epsilon <= 0.0
        {
            return Err(Error::invalid(
                "adam needs beta1, beta2 in [0, 1) and a positive epsilon",
            ));
        }
        Ok(())
    }
}

/// A tokenized document with its class index.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub doc: TokenizedDocument,
    pub label: usize,
}

/// Vocabulary induction settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub target_size: usize,
    pub min_freq: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            target_size: 4000,
            min_freq: 2,
        }
    }
}

/// A split turned into model inputs. The vocabulary, label set and sequence
/// length all come from the training side.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub labels: LabelSchema,
    pub max_tokens: usize,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

/// Tokenizes `docs` against a known vocabulary and label set. Unknown labels
/// are an error.
pub fn encode_documents(
    docs: &[RawDocument],
    vocab: &Vocabulary,
    labels: &LabelSchema,
    max_tokens: usize,
) -> Result<Vec<Example>> {
    docs.iter()
        .map(|d| {
            let label = labels.id(&d.label).ok_or_else(|| {
                Error::invalid(format!("document {} has unknown label {:?}", d.id, d.label))
            })?;
            Ok(Example {
                doc: tokenize(d, vocab, max_tokens),
                label,
            })
        })
        .collect()
}

pub fn prepare(split: &CorpusSplit, vocab_config: VocabConfig) -> Result<PreparedData> {
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::invalid("both sides of the split must be nonempty"));
    }
    let vocab = build_vocab(
        &split.train,
        vocab_config.target_size,
        vocab_config.min_freq,
    )?;
    let labels = LabelSchema::from_documents(&split.train);
    let probe = encode_documents(&split.train, &vocab, &labels, DEFAULT_MAX_TOKENS)?;
    let max_tokens = probe
        .iter()
        .map(|e| e.doc.real_len())
        .max()
        .unwrap_or(1)
        .max(1);
    Ok(PreparedData {
        train: encode_documents(&split.train, &vocab, &labels, max_tokens)?,
        test: encode_documents(&split.test, &vocab, &labels, max_tokens)?,
        vocab,
        labels,
        max_tokens,
    })
}

/// Fresh model for `data` with default architecture sizes.
pub fn init_model(
    variant: VariantKind,
    data: &PreparedData,
    seed: u64,
    embeddings: Option<&ContextualEmbeddings>,
) -> Result<Model> {
    let config = ModelConfig::new(
        variant,
        data.vocab.len(),
        data.labels.len(),
        data.max_tokens,
    );
    let table = match (variant, embeddings) {
        (VariantKind::PtAttBilstm, Some(e)) => Some(e.table_for(&data.vocab)),
        (VariantKind::PtAttBilstm, None) => {
            return Err(Error::invalid(
                "pt-att-bilstm needs a contextual-embedding file",
            ));
        }
        _ => None,
    };
    Model::new(config, seed, table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) of the returned parameters.
    pub best_epoch: usize,
    pub train_metrics: Metrics,
    pub test_metrics: Metrics,
}

/// Sum of per-document losses and gradients over `batch`, reduced in input order.
fn batch_gradient(
    model: &Model,
    batch: &[&Example],
    exec: Exec,
) -> Result<(f64, Vec<Option<Vec<f64>>>)> {
    let chunks: Vec<&[&Example]> = batch.chunks(GRADIENT_CHUNK).collect();
    let partial = exec.map(&chunks, |chunk| -> Result<(f64, Vec<Option<Vec<f64>>>)> {
        let mut total_loss = 0.0;
        let mut total: Vec<Option<Vec<f64>>> = Vec::new();
        for ex in chunk.iter() {
            let (loss, grads) = model.loss_and_grads(&ex.doc, ex.label)?;
            total_loss += loss;
            accumulate(&mut total, grads);
        }
        Ok((total_loss, total))
    });
    let mut loss = 0.0;
    let mut grads = Vec::new();
    for part in partial {
        let (l, g) = part?;
        loss += l;
        accumulate(&mut grads, g);
    }
    Ok((loss, grads))
}

fn accumulate(total: &mut Vec<Option<Vec<f64>>>, grads: Vec<Option<Vec<f64>>>) {
    if total.is_empty() {
        *total = grads;
        return;
    }
    for (t, g) in total.iter_mut().zip(grads) {
        match (t.as_mut(), g) {
            (Some(t), Some(g)) => t.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            (None, Some(g)) => *t = Some(g),
            _ => {}
        }
    }
}

/// Trains `model` on `train`, scoring `test` after every epoch for early
/// stopping. Only `train` influences parameter updates.
pub fn train(
    mut model: Model,
    train: &[Example],
    test: &[Example],
    config: &TrainConfig,
    exec: Exec,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid(
            "training needs nonempty train and test sets",
        ));
    }
    let classes = model.config().num_classes;
    let mut optimizer = Optimizer::new(config, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Example> = idx.iter().map(|&i| &train[i]).collect();
            let (loss, mut grads) = batch_gradient(&model, &batch, exec)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                });
            }
            epoch_loss += loss;
            let scale = 1.0 / batch.len() as f64;
            grads
                .iter_mut()
                .flatten()
                .for_each(|g| g.iter_mut().for_each(|v| *v *= scale));
            optimizer.step(model.params_mut(), &grads);
        }
        let train_loss = epoch_loss / train.len() as f64;
        let train_metrics = evaluate(&model, train, classes, exec)?;
        let test_metrics = evaluate(&model, test, classes, exec)?;
        log::info!(
            "epoch {epoch}: loss {train_loss:.4}, train acc {:.4}, test acc {:.4}",
            train_metrics.overall,
            test_metrics.overall
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy: train_metrics.overall,
            test_accuracy: test_metrics.overall,
        });
        let improved = best
            .as_ref()
            .is_none_or(|(acc, _, _)| test_metrics.overall > *acc);
        if improved {
            best = Some((test_metrics.overall, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log::info!(
                    "stopping after epoch {epoch}: no improvement in {} epochs",
                    config.patience
                );
                break;
            }
        }
    }

    let last_epoch = history.len();
    let (model, best_epoch) = match best {
        Some((_, epoch, snapshot)) if config.restore_best => (snapshot, epoch),
        _ => (model, last_epoch),
    };
    Ok(TrainOutcome {
        train_metrics: evaluate(&model, train, classes, exec)?,
        test_metrics: evaluate(&model, test, classes, exec)?,
        model,
        history,
        best_epoch,
    })
}
