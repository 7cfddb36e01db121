//! Highlighted documents and the standalone HTML report.
//!
//! Word intensity is the word's largest token weight divided by the largest
//! weight in the document, so the strongest word always renders at full
//! strength. Document containers are green when the prediction is correct and
//! red otherwise.

use std::fmt::Write as _;

use html_escape::{encode_double_quoted_attribute as attr, encode_text as text};
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSchema, RawDocument};
use crate::error::{Error, Result};
use crate::keywords::{CategoryKeywordTable, KeywordSet};
use crate::models::Prediction;
use crate::tokenizer::TokenizedDocument;
use crate::training::Metrics;

/// 256-colour background ramp from pale to saturated.
const ANSI_RAMP: [u8; 10] = [230, 229, 228, 227, 226, 220, 214, 208, 202, 196];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Html,
    Ansi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighlightedWord {
    /// The word as written in the source text.
    pub text: String,
    pub start: usize,
    pub end: usize,
    /// Largest attention weight among the word's tokens; 0 for words cut off
    /// by truncation.
    pub weight: f64,
    pub intensity: f64,
    pub keyword: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HighlightedDocument {
    pub doc_id: String,
    pub true_label: String,
    pub predicted_label: String,
    pub correct: bool,
    pub text: String,
    pub words: Vec<HighlightedWord>,
}

impl HighlightedDocument {
    /// Combines one document's prediction and keywords into word-level
    /// highlights. All inputs must carry the same document id.
    pub fn new(
        raw: &RawDocument,
        doc: &TokenizedDocument,
        prediction: &Prediction,
        keywords: &KeywordSet,
        labels: &LabelSchema,
    ) -> Result<Self> {
        for (what, id) in [
            ("tokenized document", &doc.doc_id),
            ("attention profile", &prediction.profile.doc_id),
            ("keyword set", &keywords.doc_id),
        ] {
            if *id != raw.id {
                return Err(Error::invalid(format!(
                    "{what} belongs to document {id:?}, expected {:?}",
                    raw.id
                )));
            }
        }
        let weights = &prediction.profile.weights;
        if weights.len() != doc.len() {
            return Err(Error::Shape {
                op: "highlight",
                lhs: vec![weights.len()],
                rhs: vec![doc.len()],
            });
        }
        let fits = doc.words.iter().all(|w| {
            w.start <= w.end
                && w.end <= raw.text.len()
                && raw.text.is_char_boundary(w.start)
                && raw.text.is_char_boundary(w.end)
        });
        if !fits || doc.words.windows(2).any(|p| p[0].end > p[1].start) {
            return Err(Error::invalid(format!(
                "word spans of {} do not fit its text",
                raw.id
            )));
        }
        let mut word_weight = vec![0.0f64; doc.words.len()];
        for (pos, word) in doc.alignment.iter().enumerate() {
            if let Some(w) = *word {
                word_weight[w] = word_weight[w].max(weights[pos]);
            }
        }
        let top = word_weight.iter().copied().fold(0.0, f64::max);
        let words = doc
            .words
            .iter()
            .zip(&word_weight)
            .enumerate()
            .map(|(i, (w, &weight))| HighlightedWord {
                text: raw.text[w.start..w.end].to_string(),
                start: w.start,
                end: w.end,
                weight,
                intensity: if top > 0.0 { weight / top } else { 0.0 },
                keyword: keywords.contains_index(i),
            })
            .collect();
        let name = |k: usize| labels.name(k).unwrap_or("?").to_string();
        let true_label = raw.label.clone();
        let predicted_label = name(prediction.class);
        Ok(Self {
            doc_id: raw.id.clone(),
            correct: true_label == predicted_label,
            true_label,
            predicted_label,
            text: raw.text.clone(),
            words,
        })
    }

    pub fn keyword_count(&self) -> usize {
        self.words.iter().filter(|w| w.keyword).count()
    }

    /// Text between consecutive words (and before the first / after the last).
    fn gaps(&self) -> impl Iterator<Item = (&str, Option<&HighlightedWord>)> {
        let mut at = 0;
        self.words
            .iter()
            .map(Some)
            .chain(std::iter::once(None))
            .map(move |w| {
                let end = w.map_or(self.text.len(), |w| w.start);
                let gap = &self.text[at..end];
                if let Some(w) = w {
                    at = w.end;
                }
                (gap, w)
            })
    }
}

/// Builds the highlights for one document and renders them.
pub fn render_document(
    raw: &RawDocument,
    doc: &TokenizedDocument,
    prediction: &Prediction,
    keywords: &KeywordSet,
    labels: &LabelSchema,
    format: Format,
) -> Result<String> {
    let h = HighlightedDocument::new(raw, doc, prediction, keywords, labels)?;
    Ok(match format {
        Format::Html => render_html(&h),
        Format::Ansi => render_ansi(&h),
    })
}

pub fn render_html(doc: &HighlightedDocument) -> String {
    let (class, rgb, mark) = if doc.correct {
        ("correct", "46,160,67", "&#10003;")
    } else {
        ("misclassified", "207,34,46", "&#10007;")
    };
    let mut out = String::new();
    let _ = write!(
        out,
        "<div class=\"doc {class}\" data-doc-id=\"{}\">\n<div class=\"doc-head\">{mark} {} &middot; true: {} &middot; predicted: {}</div>\n<p>",
        attr(&doc.doc_id),
        text(&doc.doc_id),
        text(&doc.true_label),
        text(&doc.predicted_label),
    );
    for (gap, word) in doc.gaps() {
        out.push_str(&text(gap));
        if let Some(w) = word {
            let _ = write!(
                out,
                "<span class=\"{}\" data-weight=\"{:.6}\" style=\"background:rgba({rgb},{:.3})\">{}</span>",
                if w.keyword { "w kw" } else { "w" },
                w.weight,
                w.intensity,
                text(&w.text),
            );
        }
    }
    out.push_str("</p>\n</div>\n");
    out
}

pub fn render_ansi(doc: &HighlightedDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} {} (true: {}, predicted: {})",
        if doc.correct { "\u{2713}" } else { "\u{2717}" },
        doc.doc_id,
        doc.true_label,
        doc.predicted_label
    );
    for (gap, word) in doc.gaps() {
        out.push_str(gap);
        let Some(w) = word else { continue };
        if w.intensity <= 0.0 && !w.keyword {
            out.push_str(&w.text);
            continue;
        }
        let level = (w.intensity * (ANSI_RAMP.len() - 1) as f64).round() as usize;
        let underline = if w.keyword { ";4" } else { "" };
        let _ = write!(
            out,
            "\x1b[30;48;5;{}{underline}m{}\x1b[0m",
            ANSI_RAMP[level], w.text
        );
    }
    out.push('\n');
    out
}

/// Everything the report shows besides the keyword tables and highlights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub title: String,
    /// Free-form key/value settings shown under the title.
    pub settings: Vec<(String, String)>,
    /// Accuracy per evaluated collection, such as train and test.
    pub accuracy: Vec<(String, Metrics)>,
}

const STYLE: &str = "body{font-family:sans-serif;max-width:60rem;margin:2rem auto;color:#222}\
table{border-collapse:collapse;margin:1rem 0}\
th,td{border:1px solid #ccc;padding:.25rem .6rem;text-align:left}\
td.num{text-align:right}\
.doc{border-left:6px solid;padding:.3rem .8rem;margin:1rem 0}\
.doc.correct{border-color:#2ea043}\
.doc.misclassified{border-color:#cf222e}\
.doc-head{font-weight:bold}\
.w.kw{text-decoration:underline}\
.tables{display:flex;flex-wrap:wrap;gap:1rem}";

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", 100.0 * v))
}

/// A standalone HTML page: settings, accuracy tables, per-category keyword
/// tables and highlighted documents. The output depends only on the inputs.
pub fn render_report(
    summary: &ReportSummary,
    tables: &[CategoryKeywordTable],
    highlighted: &[HighlightedDocument],
) -> String {
    let mut out = String::new();
    let title = text(&summary.title);
    let _ = write!(
        out,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{title}</title>\n<style>{STYLE}</style>\n</head>\n<body>\n<h1>{title}</h1>\n"
    );

    if !summary.settings.is_empty() {
        out.push_str("<table class=\"settings\">\n");
        for (k, v) in &summary.settings {
            let _ = writeln!(out, "<tr><th>{}</th><td>{}</td></tr>", text(k), text(v));
        }
        out.push_str("</table>\n");
    }

    if !summary.accuracy.is_empty() {
        out.push_str("<h2>Classification accuracy</h2>\n<table class=\"accuracy\">\n<tr><th>Collection</th><th>Documents</th><th>Accuracy</th></tr>\n");
        for (name, m) in &summary.accuracy {
            let _ = writeln!(
                out,
                "<tr><td>{}</td><td class=\"num\">{}</td><td class=\"num\">{}</td></tr>",
                text(name),
                m.total(),
                pct(Some(m.overall))
            );
        }
        out.push_str("</table>\n<h2>Per-category accuracy</h2>\n<table class=\"per-class\">\n<tr><th>Category</th>");
        for (name, _) in &summary.accuracy {
            let _ = write!(out, "<th>{}</th>", text(name));
        }
        out.push_str("</tr>\n");
        let classes = summary.accuracy[0].1.per_class.len();
        for k in 0..classes {
            let _ = write!(
                out,
                "<tr class=\"class-row\"><td>{}</td>",
                text(&summary.accuracy[0].1.per_class[k].label)
            );
            for (_, m) in &summary.accuracy {
                let c = m.per_class.get(k);
                let cell = c.map_or_else(String::new, |c| {
                    format!("{} ({}/{})", pct(c.accuracy), c.correct, c.support)
                });
                let _ = write!(out, "<td class=\"num\">{cell}</td>");
            }
            out.push_str("</tr>\n");
        }
        out.push_str("</table>\n");
    }

    if !tables.is_empty() {
        out.push_str("<h2>Frequent keywords per category</h2>\n<div class=\"tables\">\n");
        for t in tables {
            let _ = write!(
                out,
                "<table class=\"keywords\">\n<tr><th colspan=\"2\">{} ({} documents)</th></tr>\n",
                text(&t.category),
                t.documents
            );
            for e in &t.entries {
                let _ = writeln!(
                    out,
                    "<tr><td>{}</td><td class=\"num\">{}</td></tr>",
                    text(&e.word),
                    e.documents
                );
            }
            out.push_str("</table>\n");
        }
        out.push_str("</div>\n");
    }

    if !highlighted.is_empty() {
        out.push_str("<h2>Highlighted documents</h2>\n");
        for d in highlighted {
            out.push_str(&render_html(d));
        }
    }
    out.push_str("</body>\n</html>\n");
    out
}
