use serde::{Deserialize, Serialize};

use super::Example;
use crate::corpus::LabelSchema;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub label: String,
    pub support: usize,
    pub correct: usize,
    /// `None` when the class has no documents.
    pub accuracy: Option<f64>,
}

/// Accuracy summary. `confusion[true][predicted]` counts documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall: f64,
    pub per_class: Vec<ClassAccuracy>,
    pub confusion: Vec<Vec<usize>>,
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<Self> {
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::invalid(
                "accuracy is undefined for an empty document list",
            ));
        }
        let trace: usize = (0..confusion.len()).map(|k| confusion[k][k]).sum();
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let support: usize = row.iter().sum();
                ClassAccuracy {
                    label: k.to_string(),
                    support,
                    correct: row[k],
                    accuracy: (support > 0).then(|| row[k] as f64 / support as f64),
                }
            })
            .collect();
        Ok(Self {
            overall: trace as f64 / total as f64,
            per_class,
            confusion,
        })
    }

    /// Replaces class indices with label names.
    pub fn with_labels(mut self, labels: &LabelSchema) -> Self {
        for (k, c) in self.per_class.iter_mut().enumerate() {
            if let Some(name) = labels.name(k) {
                c.label = name.to_string();
            }
        }
        self
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Scores `docs` with `model.predict`; parameters are not touched.
pub fn evaluate(
    model: &Model,
    docs: &[Example],
    num_classes: usize,
    exec: Exec,
) -> Result<Metrics> {
    if docs.is_empty() {
        return Err(Error::invalid(
            "accuracy is undefined for an empty document list",
        ));
    }
    let predicted = exec.map(docs, |ex| model.predict(&ex.doc).map(|p| p.class));
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (ex, p) in docs.iter().zip(predicted) {
        let p = p?;
        if ex.label >= num_classes || p >= num_classes {
            return Err(Error::invalid(format!(
                "label {} outside {num_classes} classes",
                ex.label.max(p)
            )));
        }
        confusion[ex.label][p] += 1;
    }
    Metrics::from_confusion(confusion)
}
