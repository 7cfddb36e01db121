use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use attnkw::corpus::{
    filter_by_length, load_corpus, make_synthetic_corpus, save_corpus, split, RawDocument,
};
use attnkw::exec::Exec;
use attnkw::keywords::{
    aggregate_category_keywords, extract_keywords, GroupBy, KeywordSet, Stopwords,
};
use attnkw::models::{Checkpoint, ContextualEmbeddings, Prediction, VariantKind};
use attnkw::report::{render_ansi, render_report, HighlightedDocument, ReportSummary};
use attnkw::tokenizer::{hex_digest, Vocabulary};
use attnkw::training::{
    self, encode_documents, init_model, prepare, Metrics, PreparedData, TrainConfig, VocabConfig,
};
use attnkw::{Error, Result};
use serde::Serialize;

use crate::config::{DataConfig, EmbeddingMethod, RunConfig, SplitChoice, TrainRecord};
use crate::{EmbeddingsArgs, ExtractArgs, ReplayArgs, SynthArgs, TrainArgs};

const CHECKPOINT_FILE: &str = "model.ckpt";
const VOCAB_FILE: &str = "vocab.txt";
const RUNCONFIG_FILE: &str = "runconfig.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn sibling_vocab(checkpoint: &Path) -> PathBuf {
    checkpoint.with_file_name(VOCAB_FILE)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let seed = a.seed.resolve();
    let docs = make_synthetic_corpus(a.classes as usize, a.per_class as usize, seed)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_corpus(&a.out, &docs)?;
    log::info!("wrote {} documents to {}", docs.len(), a.out.display());
    Ok(())
}

/// Loads, length-filters and splits a corpus, then tokenizes both sides.
fn prepare_data(corpus: &Path, cfg: &DataConfig) -> Result<PreparedData> {
    let docs = load_corpus(corpus)?;
    let kept = filter_by_length(&docs, cfg.max_words);
    if kept.len() < docs.len() {
        log::info!(
            "dropped {} document(s) with {} or more words",
            docs.len() - kept.len(),
            cfg.max_words
        );
    }
    let sides = split(&kept, cfg.seed, cfg.train_fraction)?;
    let data = prepare(&sides, cfg.vocab)?;
    log::info!(
        "{} train / {} test documents, {} classes, vocabulary {}, max tokens {}",
        data.train.len(),
        data.test.len(),
        data.labels.len(),
        data.vocab.len(),
        data.max_tokens
    );
    Ok(data)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let seed = a.seed.resolve();
    let rc = RunConfig::Train {
        corpus: a.data.corpus.clone(),
        embeddings: a.embeddings.clone(),
        data: DataConfig {
            seed,
            train_fraction: a.data.train_fraction,
            max_words: a.data.max_words,
            vocab: VocabConfig {
                target_size: a.data.vocab_size,
                min_freq: a.data.min_freq,
            },
        },
        train: TrainConfig {
            epochs: a.epochs,
            batch_size: a.batch_size,
            learning_rate: a.learning_rate,
            optimizer: a.optimizer,
            patience: a.patience,
            weight_decay: a.weight_decay,
            restore_best: !a.keep_last,
            ..TrainConfig::new(a.variant, seed)
        },
        out: a.out.clone(),
    };
    execute(&rc, false)
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    variant: VariantKind,
    vocab_hash: String,
    labels: &'a [String],
    best_epoch: usize,
    train: Metrics,
    test: Metrics,
    history: &'a [training::EpochRecord],
    config: &'a TrainRecord,
}

fn run_train(
    corpus: &Path,
    embeddings: Option<&Path>,
    data_cfg: &DataConfig,
    train_cfg: &TrainConfig,
    out: &Path,
) -> Result<()> {
    train_cfg.validate()?;
    let data = prepare_data(corpus, data_cfg)?;
    let contextual = match (train_cfg.variant, embeddings) {
        (VariantKind::PtAttBilstm, Some(path)) => {
            let bytes = fs::read(path).map_err(io_err(path))?;
            let text = String::from_utf8_lossy(&bytes);
            Some((
                ContextualEmbeddings::from_file_string(&text, path)?,
                hex_digest(&bytes),
            ))
        }
        (_, Some(path)) => {
            log::warn!(
                "{} ignores the embedding file {}",
                train_cfg.variant,
                path.display()
            );
            None
        }
        _ => None,
    };
    let model = init_model(
        train_cfg.variant,
        &data,
        train_cfg.seed,
        contextual.as_ref().map(|(e, _)| e),
    )?;
    create_dir(out)?;

    let started = Instant::now();
    let outcome = training::train(model, &data.train, &data.test, train_cfg, Exec::default())?;
    log::info!(
        "{} trained in {:.1}s: best epoch {}, train accuracy {:.4}, test accuracy {:.4}",
        train_cfg.variant,
        started.elapsed().as_secs_f64(),
        outcome.best_epoch,
        outcome.train_metrics.overall,
        outcome.test_metrics.overall
    );

    let record = TrainRecord {
        data: data_cfg.clone(),
        train: train_cfg.clone(),
        embeddings_hash: contextual.map(|(_, h)| h),
    };
    let checkpoint = Checkpoint::new(
        outcome.model,
        &data.vocab,
        data.labels.clone(),
        serde_json::to_value(&record)?,
    )?;
    checkpoint.save(out.join(CHECKPOINT_FILE))?;
    data.vocab.save(out.join(VOCAB_FILE))?;
    write_json(
        &out.join("metrics.json"),
        &MetricsFile {
            variant: train_cfg.variant,
            vocab_hash: data.vocab.hash(),
            labels: data.labels.labels(),
            best_epoch: outcome.best_epoch,
            train: outcome.train_metrics.with_labels(&data.labels),
            test: outcome.test_metrics.with_labels(&data.labels),
            history: &outcome.history,
            config: &record,
        },
    )
}

pub fn extract(a: &ExtractArgs) -> Result<()> {
    let stopwords = load_stopwords(a.stopwords.as_deref())?;
    let rc = RunConfig::Extract {
        checkpoint: a.checkpoint.clone(),
        corpus: a.corpus.clone(),
        vocab: a
            .vocab
            .clone()
            .unwrap_or_else(|| sibling_vocab(&a.checkpoint)),
        n: a.n,
        stopwords: a.stopwords.clone(),
        stopwords_hash: stopwords.hash().to_string(),
        top: a.top,
        group_by: a.group_by,
        split: a.split,
        highlight: a.highlight,
        out: a.out.clone(),
    };
    execute(&rc, a.ansi)
}

fn load_stopwords(path: Option<&Path>) -> Result<Stopwords> {
    match path {
        Some(p) => Stopwords::load(p),
        None => Ok(Stopwords::english()),
    }
}

/// One document's keywords as written to keywords.json.
#[derive(Serialize)]
struct DocumentKeywords<'a> {
    #[serde(flatten)]
    set: &'a KeywordSet,
    true_label: &'a str,
    predicted_label: &'a str,
    correct: bool,
}

#[derive(Serialize)]
struct CategoriesFile<'a> {
    group_by: GroupBy,
    stopwords_hash: &'a str,
    top: usize,
    tables: &'a [attnkw::keywords::CategoryKeywordTable],
}

struct Scored {
    docs: Vec<RawDocument>,
    examples: Vec<training::Example>,
    predictions: Vec<Prediction>,
    metrics: Metrics,
}

fn score(checkpoint: &Checkpoint, vocab: &Vocabulary, docs: Vec<RawDocument>) -> Result<Scored> {
    let model = &checkpoint.model;
    let classes = checkpoint.labels.len();
    let examples = encode_documents(&docs, vocab, &checkpoint.labels, model.config().max_tokens)?;
    let predictions = Exec::default()
        .map(&examples, |e| model.predict(&e.doc))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (e, p) in examples.iter().zip(&predictions) {
        confusion[e.label][p.class] += 1;
    }
    Ok(Scored {
        metrics: Metrics::from_confusion(confusion)?.with_labels(&checkpoint.labels),
        docs,
        examples,
        predictions,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_extract(
    checkpoint_path: &Path,
    corpus: &Path,
    vocab_path: &Path,
    n: f64,
    stopwords_path: Option<&Path>,
    top: usize,
    group_by: GroupBy,
    split_choice: SplitChoice,
    highlight: usize,
    out: &Path,
    ansi: bool,
) -> Result<()> {
    let stopwords = load_stopwords(stopwords_path)?;
    let vocab = Vocabulary::load(vocab_path)?;
    let checkpoint = Checkpoint::read(checkpoint_path)?;
    checkpoint.check_vocabulary(&vocab)?;
    let record: Option<TrainRecord> = serde_json::from_value(checkpoint.training.clone()).ok();
    let docs = load_corpus(corpus)?;

    let max_words = record
        .as_ref()
        .map_or(attnkw::corpus::DEFAULT_MAX_WORDS, |r| r.data.max_words);
    let docs = filter_by_length(&docs, max_words);
    let sides: Vec<(&str, Vec<RawDocument>)> = match split_choice {
        SplitChoice::All => vec![("all", docs)],
        SplitChoice::Train | SplitChoice::Test => {
            let r = record.as_ref().ok_or_else(|| {
                Error::InvalidArgument(
                    "the checkpoint does not record its train/test split; use --split all"
                        .to_string(),
                )
            })?;
            let s = split(&docs, r.data.seed, r.data.train_fraction)?;
            vec![("train", s.train), ("test", s.test)]
        }
    };
    let mut accuracy = Vec::new();
    let mut target = None;
    for (name, docs) in sides {
        let scored = score(&checkpoint, &vocab, docs)?;
        log::info!(
            "{name}: accuracy {:.4} over {} documents",
            scored.metrics.overall,
            scored.metrics.total()
        );
        accuracy.push((name.to_string(), scored.metrics.clone()));
        if name == split_choice.name() {
            target = Some(scored);
        }
    }
    let target = target.expect("the requested side is always scored");

    let sets = target
        .predictions
        .iter()
        .zip(&target.examples)
        .map(|(p, e)| extract_keywords(&p.profile, &e.doc, n))
        .collect::<Result<Vec<_>>>()?;
    let labels = &checkpoint.labels;
    let predicted: Vec<&str> = target
        .predictions
        .iter()
        .map(|p| labels.name(p.class).unwrap_or("?"))
        .collect();

    let assigned: Vec<(&str, &KeywordSet)> = target
        .docs
        .iter()
        .zip(&predicted)
        .zip(&sets)
        .map(|((d, &pred), s)| match group_by {
            GroupBy::True => (d.label.as_str(), s),
            GroupBy::Predicted => (pred, s),
        })
        .collect();
    let tables = aggregate_category_keywords(labels.labels(), &assigned, &stopwords, top);

    let highlighted = (0..target.docs.len().min(highlight))
        .map(|i| {
            HighlightedDocument::new(
                &target.docs[i],
                &target.examples[i].doc,
                &target.predictions[i],
                &sets[i],
                labels,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    create_dir(out)?;
    let per_doc: Vec<DocumentKeywords> = target
        .docs
        .iter()
        .zip(&sets)
        .zip(&predicted)
        .map(|((d, set), &pred)| DocumentKeywords {
            set,
            true_label: &d.label,
            predicted_label: pred,
            correct: d.label == pred,
        })
        .collect();
    write_json(&out.join("keywords.json"), &per_doc)?;
    write_json(
        &out.join("categories.json"),
        &CategoriesFile {
            group_by,
            stopwords_hash: stopwords.hash(),
            top,
            tables: &tables,
        },
    )?;

    let kind = checkpoint.model.kind();
    let mut settings = vec![
        (
            "model".to_string(),
            format!("{} ({})", kind.title(), kind.name()),
        ),
        (
            "vocabulary sha256".to_string(),
            checkpoint.vocab_hash.clone(),
        ),
        ("documents".to_string(), split_choice.name().to_string()),
        ("percentile n".to_string(), n.to_string()),
        (
            "keyword grouping".to_string(),
            match group_by {
                GroupBy::True => "true category",
                GroupBy::Predicted => "predicted category",
            }
            .to_string(),
        ),
        ("stopwords sha256".to_string(), stopwords.hash().to_string()),
    ];
    if let Some(r) = &record {
        settings.push(("seed".to_string(), r.data.seed.to_string()));
        settings.push((
            "train fraction".to_string(),
            r.data.train_fraction.to_string(),
        ));
    }
    let summary = ReportSummary {
        title: format!("Attention keywords: {}", kind.title()),
        settings,
        accuracy,
    };
    write_file(
        &out.join("report.html"),
        &render_report(&summary, &tables, &highlighted),
    )?;
    if ansi {
        for h in &highlighted {
            print!("{}", render_ansi(h));
        }
    }
    log::info!(
        "wrote keywords for {} documents to {}",
        sets.len(),
        out.display()
    );
    Ok(())
}

/// Runs a resolved configuration and records it next to the outputs.
fn execute(rc: &RunConfig, ansi: bool) -> Result<()> {
    match rc {
        RunConfig::Train {
            corpus,
            embeddings,
            data,
            train,
            out,
        } => run_train(corpus, embeddings.as_deref(), data, train, out)?,
        RunConfig::Extract {
            checkpoint,
            corpus,
            vocab,
            n,
            stopwords,
            stopwords_hash,
            top,
            group_by,
            split,
            highlight,
            out,
        } => {
            let current = load_stopwords(stopwords.as_deref())?;
            if current.hash() != stopwords_hash {
                log::warn!("stopword list changed since this configuration was recorded");
            }
            run_extract(
                checkpoint,
                corpus,
                vocab,
                *n,
                stopwords.as_deref(),
                *top,
                *group_by,
                *split,
                *highlight,
                out,
                ansi,
            )?
        }
    }
    let out = match rc {
        RunConfig::Train { out, .. } | RunConfig::Extract { out, .. } => out,
    };
    write_json(&out.join(RUNCONFIG_FILE), rc)
}

pub fn replay(a: &ReplayArgs) -> Result<()> {
    let text = fs::read_to_string(&a.runconfig).map_err(io_err(&a.runconfig))?;
    let rc: RunConfig = serde_json::from_str(&text)?;
    execute(&rc.with_out(a.out.clone()), false)
}

pub fn embeddings(a: &EmbeddingsArgs) -> Result<()> {
    let table = match a.method {
        EmbeddingMethod::Checkpoint => {
            let path = a.checkpoint.as_ref().ok_or_else(|| {
                Error::InvalidArgument("--method checkpoint needs --checkpoint".to_string())
            })?;
            let vocab = Vocabulary::load(a.vocab.clone().unwrap_or_else(|| sibling_vocab(path)))?;
            let checkpoint = Checkpoint::read(path)?;
            checkpoint.check_vocabulary(&vocab)?;
            let table = checkpoint.model.token_embedding_table().ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{} has no trainable token table to export",
                    checkpoint.model.kind()
                ))
            })?;
            ContextualEmbeddings::from_table(&vocab, table)?
        }
        method => {
            let corpus = a
                .corpus
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--corpus is required".to_string()))?;
            let seed = match (a.seed, a.random) {
                (Some(s), _) => s,
                (None, true) => crate::SeedArgs {
                    seed: None,
                    random: true,
                }
                .resolve(),
                (None, false) => {
                    return Err(Error::InvalidArgument(
                        "pass --seed or --random".to_string(),
                    ))
                }
            };
            let cfg = DataConfig {
                seed,
                train_fraction: a.train_fraction,
                max_words: a.max_words,
                vocab: VocabConfig {
                    target_size: a.vocab_size,
                    min_freq: a.min_freq,
                },
            };
            let data = prepare_data(corpus, &cfg)?;
            if method == EmbeddingMethod::Random {
                ContextualEmbeddings::random(&data.vocab, a.dim, seed)?
            } else {
                let docs: Vec<_> = data.train.iter().map(|e| e.doc.clone()).collect();
                ContextualEmbeddings::from_cooccurrence(&docs, &data.vocab, a.dim, seed)?
            }
        }
    };
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    table.save(&a.out)?;
    log::info!(
        "wrote {} vectors of width {} to {}",
        table.len(),
        table.dim(),
        a.out.display()
    );
    Ok(())
}
