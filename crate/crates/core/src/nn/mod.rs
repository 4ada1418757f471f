//! Parameterized layers on top of the tape: linear/embedding, an LSTM cell,
//! a plain MLP, and the attention scoring head shared by the spatial and
//! temporal graph stages.
//!
//! Layers own their weights as plain tensors. Before a forward pass they are
//! bound to a tape exactly once (`bind`), which registers every weight and
//! hands back lightweight `Bound*` handles; the same binding is reused for
//! every forward call within that tape so fan-out gradients accumulate.

pub mod serialize;

use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorData, TensorError, Var};
use rand::Rng;

/// Default negative slope for every leaky-relu in the model.
pub const LEAKY_SLOPE: f64 = 0.2;

fn uniform_init<S: Scalar>(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<S> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n)
        .map(|_| S::of_f64(rng.gen_range(-bound..bound)))
        .collect()
}

/// Fully-connected layer `y = W x + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<S> {
    pub w: TensorData<S>,
    pub b: TensorData<S>,
}

impl<S: Scalar> Linear<S> {
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: TensorData::new(vec![out_dim, in_dim], uniform_init(rng, out_dim * in_dim, in_dim))
                .expect("linear init"),
            b: TensorData::zeros(vec![out_dim]),
        }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Linear {
            w: TensorData::zeros(vec![out_dim, in_dim]),
            b: TensorData::zeros(vec![out_dim]),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape<S>, trainable: bool) -> BoundLinear {
        BoundLinear {
            w: tape.input(&self.w, trainable),
            b: tape.input(&self.b, trainable),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub w: Var,
    pub b: Var,
}

impl BoundLinear {
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, x: Var) -> Result<Var, TensorError> {
        let wx = tape.matmul(self.w, x)?;
        tape.add(wx, self.b)
    }
}

/// Embeds a 2-vector (position or displacement) through a linear layer.
/// Non-finite inputs are rejected.
pub fn embed_position<S: Scalar>(
    tape: &mut Tape<S>,
    layer: &BoundLinear,
    p: [S; 2],
) -> Result<Var, TensorError> {
    if !(p[0].is_finite() && p[1].is_finite()) {
        return Err(TensorError::NonFinite {
            op: "embed_position",
        });
    }
    let x = tape.constant(&TensorData::vector(vec![p[0], p[1]]));
    layer.forward(tape, x)
}

/// LSTM cell with four gates, each acting on `[x || h_prev]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<S> {
    pub input_gate: Linear<S>,
    pub forget_gate: Linear<S>,
    pub cell_gate: Linear<S>,
    pub output_gate: Linear<S>,
    hidden: usize,
    input: usize,
}

impl<S: Scalar> LstmCell<S> {
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let gate = |rng: &mut _| Linear::init(hidden, input + hidden, rng);
        LstmCell {
            input_gate: gate(rng),
            forget_gate: gate(rng),
            cell_gate: gate(rng),
            output_gate: gate(rng),
            hidden,
            input,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let gate = || Linear::zeros(hidden, input + hidden);
        LstmCell {
            input_gate: gate(),
            forget_gate: gate(),
            cell_gate: gate(),
            output_gate: gate(),
            hidden,
            input,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn bind(&self, tape: &mut Tape<S>, trainable: bool) -> BoundLstm {
        BoundLstm {
            input_gate: self.input_gate.bind(tape, trainable),
            forget_gate: self.forget_gate.bind(tape, trainable),
            cell_gate: self.cell_gate.bind(tape, trainable),
            output_gate: self.output_gate.bind(tape, trainable),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLstm {
    pub input_gate: BoundLinear,
    pub forget_gate: BoundLinear,
    pub cell_gate: BoundLinear,
    pub output_gate: BoundLinear,
}

/// Carried LSTM state. The cell state exists even where only the hidden
/// state is consumed downstream.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros<S: Scalar>(tape: &mut Tape<S>, hidden: usize) -> Self {
        let z = tape.constant(&TensorData::zeros(vec![hidden]));
        LstmState { h: z, c: z }
    }
}

/// One step of the standard gate equations:
/// sigmoid input/forget/output gates, tanh candidate, `h = o * tanh(c)`.
pub fn lstm_step<S: Scalar>(
    tape: &mut Tape<S>,
    cell: &BoundLstm,
    state: LstmState,
    x: Var,
) -> Result<LstmState, TensorError> {
    let z = tape.concat(&[x, state.h])?;
    let i_pre = cell.input_gate.forward(tape, z)?;
    let i = tape.sigmoid(i_pre)?;
    let f_pre = cell.forget_gate.forward(tape, z)?;
    let f = tape.sigmoid(f_pre)?;
    let g_pre = cell.cell_gate.forward(tape, z)?;
    let g = tape.tanh(g_pre)?;
    let o_pre = cell.output_gate.forward(tape, z)?;
    let o = tape.sigmoid(o_pre)?;

    let keep = tape.mul(f, state.c)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let c_act = tape.tanh(c)?;
    let h = tape.mul(o, c_act)?;
    Ok(LstmState { h, c })
}

/// Attention scoring head: a shared projection and the weight vector of a
/// single-layer feedforward scorer over `[proj(query) || proj(key)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead<S> {
    pub proj: TensorData<S>,
    pub score: TensorData<S>,
    pub leaky_slope: S,
}

impl<S: Scalar> AttentionHead<S> {
    pub fn init(in_dim: usize, proj_dim: usize, rng: &mut impl Rng) -> Self {
        AttentionHead {
            proj: TensorData::new(
                vec![proj_dim, in_dim],
                uniform_init(rng, proj_dim * in_dim, in_dim),
            )
            .expect("attention init"),
            score: TensorData::vector(uniform_init(rng, 2 * proj_dim, 2 * proj_dim)),
            leaky_slope: S::of_f64(LEAKY_SLOPE),
        }
    }

    pub fn proj_dim(&self) -> usize {
        self.proj.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.proj.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape<S>, trainable: bool) -> BoundAttentionHead<S> {
        BoundAttentionHead {
            proj: tape.input(&self.proj, trainable),
            score: tape.input(&self.score, trainable),
            leaky_slope: self.leaky_slope,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundAttentionHead<S> {
    pub proj: Var,
    pub score: Var,
    pub leaky_slope: S,
}

/// Softmax attention weights of `query` over `keys`:
/// `softmax_j(leaky_relu(score . [W q || W k_j]))`.
///
/// Callers must guarantee at least one key (the self/current entry).
pub fn gat_scores<S: Scalar>(
    tape: &mut Tape<S>,
    head: &BoundAttentionHead<S>,
    query: Var,
    keys: &[Var],
) -> Result<Var, TensorError> {
    if keys.is_empty() {
        return Err(TensorError::BadArity {
            op: "gat_scores",
            expected: 1,
            got: 0,
        });
    }
    let wq = tape.matmul(head.proj, query)?;
    let mut scores = Vec::with_capacity(keys.len());
    for &key in keys {
        let wk = tape.matmul(head.proj, key)?;
        let pair = tape.concat(&[wq, wk])?;
        let weighted = tape.mul(head.score, pair)?;
        let s = tape.sum(weighted)?;
        scores.push(tape.leaky_relu(s, head.leaky_slope)?);
    }
    let logits = tape.concat(&scores)?;
    tape.softmax(logits)
}

/// Stack of linear layers with leaky-relu between them; the final layer has
/// no activation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEncoder<S> {
    pub layers: Vec<Linear<S>>,
    pub leaky_slope: S,
}

impl<S: Scalar> MlpEncoder<S> {
    /// `dims = [in, hidden..., out]`.
    pub fn init(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least one layer");
        let layers = dims
            .windows(2)
            .map(|w| Linear::init(w[1], w[0], rng))
            .collect();
        MlpEncoder {
            layers,
            leaky_slope: S::of_f64(LEAKY_SLOPE),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn bind(&self, tape: &mut Tape<S>, trainable: bool) -> BoundMlp<S> {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(tape, trainable)).collect(),
            leaky_slope: self.leaky_slope,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundMlp<S> {
    pub layers: Vec<BoundLinear>,
    pub leaky_slope: S,
}

pub fn mlp_forward<S: Scalar>(
    tape: &mut Tape<S>,
    mlp: &BoundMlp<S>,
    x: Var,
) -> Result<Var, TensorError> {
    let mut cur = x;
    let last = mlp.layers.len() - 1;
    for (i, layer) in mlp.layers.iter().enumerate() {
        cur = layer.forward(tape, cur)?;
        if i != last {
            cur = tape.leaky_relu(cur, mlp.leaky_slope)?;
        }
    }
    Ok(cur)
}
