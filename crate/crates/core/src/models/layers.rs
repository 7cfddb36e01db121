//! Recurrent encoder, attention layers and the softmax classifier head.

use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Input sequence for a recurrent encoder.
#[derive(Clone, Copy, Debug)]
pub enum SequenceInput<'s> {
    /// Dense `T × d` matrix already on the graph.
    Dense(Var),
    /// One-hot rows given by token ids; multiplying a one-hot row by the
    /// input weights selects one weight row, so this is a row gather.
    OneHot(&'s [u32]),
}

/// LSTM cell. Gate columns of the packed weights are ordered
/// forget, input, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden: usize,
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
}

/// Hidden and cell state after one step.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmCell {
    pub fn new(
        params: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            input_dim,
            hidden,
            w_input: params.add_uniform(format!("{prefix}.w_input"), input_dim, 4 * hidden, rng),
            w_hidden: params.add_uniform(format!("{prefix}.w_hidden"), hidden, 4 * hidden, rng),
            bias: params.add_filled(format!("{prefix}.bias"), 1, 4 * hidden, 0.0),
        }
    }

    /// One step from a raw input row `x_t` (`1 × input_dim`).
    pub fn step(
        &self,
        g: &mut Graph<'_>,
        p: &[Var],
        x_t: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<LstmState> {
        let xw = g.matmul(x_t, p[self.w_input.0])?;
        let xw = g.add_bias(xw, p[self.bias.0])?;
        self.step_projected(g, p, xw, h_prev, c_prev)
    }

    /// One step given `x_t · W_input + bias` (`1 × 4h`).
    pub fn step_projected(
        &self,
        g: &mut Graph<'_>,
        p: &[Var],
        xw: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<LstmState> {
        let h = self.hidden;
        let hw = g.matmul(h_prev, p[self.w_hidden.0])?;
        let z = g.add(xw, hw)?;
        let f = g.slice(z, 1, 0, h)?;
        let f = g.sigmoid(f)?;
        let i = g.slice(z, 1, h, h)?;
        let i = g.sigmoid(i)?;
        let cand = g.slice(z, 1, 2 * h, h)?;
        let cand = g.tanh(cand)?;
        let o = g.slice(z, 1, 3 * h, h)?;
        let o = g.sigmoid(o)?;
        let keep = g.mul(f, c_prev)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let squashed = g.tanh(c)?;
        let h_out = g.mul(o, squashed)?;
        Ok(LstmState { h: h_out, c })
    }

    /// `x · W_input + bias` for every row of the input at once (`T × 4h`).
    fn project(&self, g: &mut Graph<'_>, p: &[Var], input: SequenceInput<'_>) -> Result<Var> {
        let xw = match input {
            SequenceInput::Dense(x) => g.matmul(x, p[self.w_input.0])?,
            SequenceInput::OneHot(ids) => {
                let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
                g.gather_rows(p[self.w_input.0], &ids)?
            }
        };
        g.add_bias(xw, p[self.bias.0])
    }
}

/// Two LSTMs over opposite directions whose outputs are summed elementwise.
#[derive(Clone, Debug)]
pub struct BiLstmEncoder {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

/// Per-direction and combined outputs, each `T × h`.
#[derive(Clone, Copy, Debug)]
pub struct BiLstmOutput {
    pub forward: Var,
    pub backward: Var,
    pub combined: Var,
}

impl BiLstmEncoder {
    pub fn new(
        params: &mut ParamStore,
        input_dim: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            forward: LstmCell::new(params, "bilstm.forward", input_dim, hidden, rng),
            backward: LstmCell::new(params, "bilstm.backward", input_dim, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    /// Runs both directions over the `len` real positions of `input`.
    pub fn encode(
        &self,
        g: &mut Graph<'_>,
        p: &[Var],
        input: SequenceInput<'_>,
        len: usize,
    ) -> Result<BiLstmOutput> {
        if len == 0 {
            return Err(Error::AllMasked {
                op: "bilstm_encode",
            });
        }
        let h = self.hidden();
        let fwd = self.run(g, p, &self.forward, input, len, false)?;
        let bwd = self.run(g, p, &self.backward, input, len, true)?;
        debug_assert_eq!(g.value(fwd).shape(), &[len, h]);
        let combined = g.add(fwd, bwd)?;
        Ok(BiLstmOutput {
            forward: fwd,
            backward: bwd,
            combined,
        })
    }

    fn run(
        &self,
        g: &mut Graph<'_>,
        p: &[Var],
        cell: &LstmCell,
        input: SequenceInput<'_>,
        len: usize,
        reverse: bool,
    ) -> Result<Var> {
        let projected = cell.project(g, p, input)?;
        let zeros = Tensor::zeros(&[1, cell.hidden]);
        let mut state = LstmState {
            h: g.constant(zeros.clone()),
            c: g.constant(zeros),
        };
        let mut outputs = vec![state.h; len];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..len).rev())
        } else {
            Box::new(0..len)
        };
        for t in order {
            let xw = g.slice(projected, 0, t, 1)?;
            state = cell.step_projected(g, p, xw, state.h, state.c)?;
            outputs[t] = state.h;
        }
        g.concat(&outputs, 0)
    }
}

/// Additive attention over BiLSTM outputs: `Z = softmax(w·tanh(H))`,
/// `CV = Σ_t Z_t h_t`.
#[derive(Clone, Debug)]
pub struct BiLstmAttention {
    pub w: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    /// `1 × T` raw scores `w·tanh(h_t)`.
    pub scores: Var,
    /// `1 × T` weights.
    pub weights: Var,
    /// `1 × h` context vector.
    pub context: Var,
}

impl BiLstmAttention {
    pub fn new(params: &mut ParamStore, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: params.add_uniform("attention.w", hidden, 1, rng),
        }
    }

    /// `hidden_seq` is `T × h`; `mask` (length T) marks attendable positions.
    pub fn attend(
        &self,
        g: &mut Graph<'_>,
        p: &[Var],
        hidden_seq: Var,
        mask: Option<&[bool]>,
    ) -> Result<AttentionOutput> {
        let squashed = g.tanh(hidden_seq)?;
        let scores = g.matmul(squashed, p[self.w.0])?;
        let scores = g.transpose(scores)?;
        let weights = match mask {
            Some(m) => g.masked_softmax(scores, 1, m)?,
            None => g.softmax(scores, 1)?,
        };
        let context = g.matmul(weights, hidden_seq)?;
        Ok(AttentionOutput {
            scores,
            weights,
            context,
        })
    }
}

/// Dense attention layer over the flattened token representations with one
/// output neuron per token position.
///
/// The classifier reads `relu(scores)`; the interpretive weights are the
/// softmax of the raw scores over real positions and never feed the classifier.
#[derive(Clone, Debug)]
pub struct TokenAttentionHead {
    pub max_tokens: usize,
    pub dim: usize,
    pub w: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct TokenAttentionOutput {
    /// `1 × max_tokens` raw scores.
    pub scores: Var,
    /// `relu(scores)`, the classifier input.
    pub activations: Var,
    /// `1 × max_tokens` softmax of the scores over real positions.
    pub weights: Var,
}

impl TokenAttentionHead {
    pub fn new(
        params: &mut ParamStore,
        max_tokens: usize,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            max_tokens,
            dim,
            w: params.add_uniform("token_attention.w", max_tokens * dim, max_tokens, rng),
            bias: params.add_filled("token_attention.bias", 1, max_tokens, 0.0),
        }
    }

    /// `reps` holds the `T ≤ max_tokens` real token representations (`T × dim`);
    /// the remaining positions are padding with zero representations.
    pub fn forward(&self, g: &mut Graph<'_>, p: &[Var], reps: Var) -> Result<TokenAttentionOutput> {
        let (len, dim) = g.value(reps).dims2();
        if len == 0 {
            return Err(Error::AllMasked {
                op: "token_attention",
            });
        }
        if len > self.max_tokens || dim != self.dim {
            return Err(Error::Shape {
                op: "token_attention",
                lhs: g.value(reps).shape().to_vec(),
                rhs: vec![self.max_tokens, self.dim],
            });
        }
        let full = if len < self.max_tokens {
            let pad = g.constant(Tensor::zeros(&[self.max_tokens - len, dim]));
            g.concat(&[reps, pad], 0)?
        } else {
            reps
        };
        let flat = g.reshape(full, &[1, self.max_tokens * dim])?;
        let scores = g.matmul(flat, p[self.w.0])?;
        let scores = g.add_bias(scores, p[self.bias.0])?;
        let activations = g.relu(scores)?;
        let mask: Vec<bool> = (0..self.max_tokens).map(|j| j < len).collect();
        let weights = g.masked_softmax(scores, 1, &mask)?;
        Ok(TokenAttentionOutput {
            scores,
            activations,
            weights,
        })
    }
}

/// Linear map to class logits; probabilities are their softmax.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub classes: usize,
    pub w: ParamId,
    pub bias: ParamId,
}

impl ClassifierHead {
    pub fn new(
        params: &mut ParamStore,
        input_dim: usize,
        classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            classes,
            w: params.add_uniform("classifier.w", input_dim, classes, rng),
            bias: params.add_filled("classifier.bias", 1, classes, 0.0),
        }
    }

    /// `1 × K` logits for a `1 × input_dim` row.
    pub fn logits(&self, g: &mut Graph<'_>, p: &[Var], x: Var) -> Result<Var> {
        let z = g.matmul(x, p[self.w.0])?;
        g.add_bias(z, p[self.bias.0])
    }
}
