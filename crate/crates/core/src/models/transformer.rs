//! Small post-norm transformer encoder trained from scratch.

use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderShape {
    pub vocab_size: usize,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub max_positions: usize,
}

#[derive(Clone, Debug)]
struct Block {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    ff_w1: ParamId,
    ff_b1: ParamId,
    ff_w2: ParamId,
    ff_b2: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
}

/// Token and learned position embeddings followed by `layers` blocks of
/// multi-head self-attention and a relu feed-forward layer, each wrapped in a
/// residual connection and layer norm.
#[derive(Clone, Debug)]
pub struct EncoderStandIn {
    pub shape: EncoderShape,
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    blocks: Vec<Block>,
}

impl EncoderStandIn {
    pub fn new(params: &mut ParamStore, shape: EncoderShape, rng: &mut ChaCha8Rng) -> Result<Self> {
        if shape.heads == 0 || !shape.dim.is_multiple_of(shape.heads) {
            return Err(Error::invalid(format!(
                "model dimension {} is not divisible by {} heads",
                shape.dim, shape.heads
            )));
        }
        let d = shape.dim;
        let token_embedding =
            params.add_uniform("encoder.token_embedding", shape.vocab_size, d, rng);
        let position_embedding =
            params.add_uniform("encoder.position_embedding", shape.max_positions, d, rng);
        let blocks = (0..shape.layers)
            .map(|l| {
                let n = |s: &str| format!("encoder.layer{l}.{s}");
                Block {
                    wq: params.add_uniform(n("wq"), d, d, rng),
                    wk: params.add_uniform(n("wk"), d, d, rng),
                    wv: params.add_uniform(n("wv"), d, d, rng),
                    wo: params.add_uniform(n("wo"), d, d, rng),
                    bo: params.add_filled(n("bo"), 1, d, 0.0),
                    ln1_gain: params.add_filled(n("ln1_gain"), 1, d, 1.0),
                    ln1_bias: params.add_filled(n("ln1_bias"), 1, d, 0.0),
                    ff_w1: params.add_uniform(n("ff_w1"), d, shape.ff_dim, rng),
                    ff_b1: params.add_filled(n("ff_b1"), 1, shape.ff_dim, 0.0),
                    ff_w2: params.add_uniform(n("ff_w2"), shape.ff_dim, d, rng),
                    ff_b2: params.add_filled(n("ff_b2"), 1, d, 0.0),
                    ln2_gain: params.add_filled(n("ln2_gain"), 1, d, 1.0),
                    ln2_bias: params.add_filled(n("ln2_bias"), 1, d, 0.0),
                }
            })
            .collect();
        Ok(Self {
            shape,
            token_embedding,
            position_embedding,
            blocks,
        })
    }

    /// Encodes the real tokens `ids` into a `T × dim` matrix. Padding is never
    /// part of the input, so no attention mask is needed.
    pub fn encode(&self, g: &mut Graph<'_>, p: &[Var], ids: &[u32]) -> Result<Var> {
        let len = ids.len();
        if len == 0 {
            return Err(Error::AllMasked { op: "encoder" });
        }
        if len > self.shape.max_positions {
            return Err(Error::invalid(format!(
                "sequence of {len} tokens exceeds the encoder's {} positions",
                self.shape.max_positions
            )));
        }
        let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let tokens = g.gather_rows(p[self.token_embedding.0], &ids)?;
        let positions = g.slice(p[self.position_embedding.0], 0, 0, len)?;
        let mut x = g.add(tokens, positions)?;
        for block in &self.blocks {
            x = self.block(g, p, block, x)?;
        }
        Ok(x)
    }

    fn block(&self, g: &mut Graph<'_>, p: &[Var], b: &Block, x: Var) -> Result<Var> {
        let heads = self.shape.heads;
        let head_dim = self.shape.dim / heads;
        let q = g.matmul(x, p[b.wq.0])?;
        let k = g.matmul(x, p[b.wk.0])?;
        let v = g.matmul(x, p[b.wv.0])?;
        let mut per_head = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice(q, 1, h * head_dim, head_dim)?;
            let kh = g.slice(k, 1, h * head_dim, head_dim)?;
            let vh = g.slice(v, 1, h * head_dim, head_dim)?;
            let kt = g.transpose(kh)?;
            let scores = g.matmul(qh, kt)?;
            let scores = g.scale(scores, 1.0 / (head_dim as f64).sqrt())?;
            let attn = g.softmax(scores, 1)?;
            per_head.push(g.matmul(attn, vh)?);
        }
        let merged = if heads == 1 {
            per_head[0]
        } else {
            g.concat(&per_head, 1)?
        };
        let attended = g.matmul(merged, p[b.wo.0])?;
        let attended = g.add_bias(attended, p[b.bo.0])?;
        let x = g.add(x, attended)?;
        let x = g.layer_norm(x, p[b.ln1_gain.0], p[b.ln1_bias.0], LAYER_NORM_EPS)?;

        let hidden = g.matmul(x, p[b.ff_w1.0])?;
        let hidden = g.add_bias(hidden, p[b.ff_b1.0])?;
        let hidden = g.relu(hidden)?;
        let out = g.matmul(hidden, p[b.ff_w2.0])?;
        let out = g.add_bias(out, p[b.ff_b2.0])?;
        let x = g.add(x, out)?;
        g.layer_norm(x, p[b.ln2_gain.0], p[b.ln2_bias.0], LAYER_NORM_EPS)
    }
}
