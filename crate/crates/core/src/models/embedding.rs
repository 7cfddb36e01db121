use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::params::{ParamId, ParamStore};
use super::transformer::EncoderStandIn;
use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::tokenizer::{TokenizedDocument, Vocabulary, PAD_ID, UNK_TOKEN};

/// How token ids become vectors.
#[derive(Clone, Debug)]
pub enum EmbeddingLayer {
    /// Unit basis vector per vocabulary entry.
    OneHot { vocab_size: usize },
    /// Trainable table.
    Lookup { table: ParamId, dim: usize },
    /// Frozen table loaded from a [`ContextualEmbeddings`] file.
    Contextual { table: ParamId, dim: usize },
    /// Transformer encoder over the whole sequence.
    Encoder(EncoderStandIn),
}

impl EmbeddingLayer {
    pub fn lookup(
        params: &mut ParamStore,
        vocab_size: usize,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        EmbeddingLayer::Lookup {
            table: params.add_uniform("embedding.table", vocab_size, dim, rng),
            dim,
        }
    }

    pub fn contextual(params: &mut ParamStore, table: Tensor) -> Self {
        let dim = table.dims2().1;
        EmbeddingLayer::Contextual {
            table: params.add("embedding.contextual", table, false),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingLayer::OneHot { vocab_size } => *vocab_size,
            EmbeddingLayer::Lookup { dim, .. } | EmbeddingLayer::Contextual { dim, .. } => *dim,
            EmbeddingLayer::Encoder(enc) => enc.shape.dim,
        }
    }

    fn vocab_size(&self, params: &ParamStore) -> usize {
        match self {
            EmbeddingLayer::OneHot { vocab_size } => *vocab_size,
            EmbeddingLayer::Lookup { table, .. } | EmbeddingLayer::Contextual { table, .. } => {
                params.get(*table).dims2().0
            }
            EmbeddingLayer::Encoder(enc) => enc.shape.vocab_size,
        }
    }

    /// One row per position of `doc` (`len × dim`); padding rows are zero.
    pub fn embed(&self, params: &ParamStore, doc: &TokenizedDocument) -> Result<Tensor> {
        let vocab_size = self.vocab_size(params);
        if let Some(&bad) = doc.token_ids.iter().find(|&&id| id as usize >= vocab_size) {
            return Err(Error::TokenOutOfRange {
                id: bad,
                vocab_size,
            });
        }
        let dim = self.dim();
        let len = doc.len();
        let mut out = Tensor::zeros(&[len, dim]);
        match self {
            EmbeddingLayer::OneHot { .. } => {
                for (t, (&id, &real)) in doc.token_ids.iter().zip(&doc.mask).enumerate() {
                    if real && id != PAD_ID {
                        out.data_mut()[t * dim + id as usize] = 1.0;
                    }
                }
            }
            EmbeddingLayer::Lookup { table, .. } | EmbeddingLayer::Contextual { table, .. } => {
                let table = params.get(*table);
                for (t, (&id, &real)) in doc.token_ids.iter().zip(&doc.mask).enumerate() {
                    if real && id != PAD_ID {
                        out.data_mut()[t * dim..(t + 1) * dim]
                            .copy_from_slice(table.row_slice(id as usize));
                    }
                }
            }
            EmbeddingLayer::Encoder(enc) => {
                let ids = doc.real_ids();
                if !ids.is_empty() {
                    let mut g = Graph::new();
                    let p = params.bind(&mut g);
                    let reps = enc.encode(&mut g, &p, ids)?;
                    out.data_mut()[..ids.len() * dim].copy_from_slice(g.value(reps).data());
                }
            }
        }
        Ok(out)
    }
}

/// Static per-token vectors from an external model.
///
/// File form: a `token_count dim` header, then one line per token holding the
/// token string followed by `dim` reals. The unknown token must be present.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextualEmbeddings {
    dim: usize,
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl ContextualEmbeddings {
    pub fn new(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut out = Self {
            dim,
            tokens: Vec::with_capacity(entries.len()),
            vectors: Vec::with_capacity(entries.len()),
            index: HashMap::with_capacity(entries.len()),
        };
        for (token, vector) in entries {
            if vector.len() != dim || vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("bad vector for token {token:?}")));
            }
            if token.is_empty() || token.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid embedding token {token:?}")));
            }
            if out.index.insert(token.clone(), out.tokens.len()).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate embedding token {token:?}"
                )));
            }
            out.tokens.push(token);
            out.vectors.push(vector);
        }
        if !out.index.contains_key(UNK_TOKEN) {
            return Err(Error::invalid(format!(
                "embeddings must supply a vector for {UNK_TOKEN}"
            )));
        }
        Ok(out)
    }

    /// Seeded standard-normal vectors for every token of `vocab`.
    pub fn random(vocab: &Vocabulary, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = vocab
            .tokens()
            .iter()
            .skip(1)
            .map(|t| {
                let v = (0..dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect::<Vec<f64>>();
                (t.clone(), v)
            })
            .collect();
        Self::new(dim, entries)
    }

    /// Random-indexing vectors from document co-occurrence: every document
    /// gets a seeded Gaussian signature and a token's vector is the sum of the
    /// signatures of the documents it occurs in, rescaled to norm `sqrt(dim)`.
    /// Tokens that never occur get the zero vector. Labels are not used.
    pub fn from_cooccurrence(
        docs: &[TokenizedDocument],
        vocab: &Vocabulary,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sums = vec![vec![0.0; dim]; vocab.len()];
        let mut present = vec![false; vocab.len()];
        for doc in docs {
            let signature: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let mut ids: Vec<u32> = doc.real_ids().to_vec();
            ids.sort_unstable();
            ids.dedup();
            for id in ids {
                let Some(row) = sums.get_mut(id as usize) else {
                    return Err(Error::TokenOutOfRange {
                        id,
                        vocab_size: vocab.len(),
                    });
                };
                row.iter_mut().zip(&signature).for_each(|(a, b)| *a += b);
                present[id as usize] = true;
            }
        }
        let target = (dim as f64).sqrt();
        let entries = vocab
            .tokens()
            .iter()
            .zip(sums)
            .zip(present)
            .skip(1)
            .map(|((t, mut v), seen)| {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if seen && norm > 0.0 {
                    v.iter_mut().for_each(|x| *x *= target / norm);
                }
                (t.clone(), v)
            })
            .collect();
        Self::new(dim, entries)
    }

    /// Rows of `table` (`vocab.len() × dim`) keyed by vocabulary token.
    pub fn from_table(vocab: &Vocabulary, table: &Tensor) -> Result<Self> {
        let (rows, dim) = table.dims2();
        if rows != vocab.len() {
            return Err(Error::invalid(format!(
                "embedding table has {rows} rows, vocabulary has {} tokens",
                vocab.len()
            )));
        }
        let entries = vocab
            .tokens()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| (t.clone(), table.row_slice(i).to_vec()))
            .collect();
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.vectors[i].as_slice())
    }

    /// `vocab.len() × dim` table aligned with vocabulary ids. The pad row is
    /// zero; tokens missing from the file take the unknown-token vector.
    pub fn table_for(&self, vocab: &Vocabulary) -> Tensor {
        let unk = self.get(UNK_TOKEN).expect("validated at construction");
        let mut data = vec![0.0; vocab.len() * self.dim];
        for (i, token) in vocab.tokens().iter().enumerate() {
            if i == PAD_ID as usize {
                continue;
            }
            let v = self.get(token).unwrap_or(unk);
            data[i * self.dim..(i + 1) * self.dim].copy_from_slice(v);
        }
        Tensor::from_raw(vec![vocab.len(), self.dim], data)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = format!("{} {}\n", self.tokens.len(), self.dim);
        for (t, v) in self.tokens.iter().zip(&self.vectors) {
            out.push_str(t);
            for x in v {
                write!(out, " {x}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(content: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = content.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(1, format!("header must be \"token_count dim\": {e}")))?;
        let [count, dim] = nums[..] else {
            return Err(parse_err(1, "header must be \"token_count dim\"".into()));
        };
        let mut entries = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().expect("non-empty line").to_string();
            let vector: Vec<f64> = fields
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(line_no, e.to_string()))?;
            if vector.len() != dim {
                return Err(parse_err(
                    line_no,
                    format!("expected {dim} values, found {}", vector.len()),
                ));
            }
            entries.push((token, vector));
        }
        if entries.len() != count {
            return Err(parse_err(
                1,
                format!("header declares {count} tokens, file has {}", entries.len()),
            ));
        }
        Self::new(dim, entries).map_err(|e| parse_err(1, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_string(&content, path)
    }
}
