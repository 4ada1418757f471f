use super::{TensorData, TensorError};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
}

/// The primitive operations the tape understands.
///
/// Shape rules:
/// - `MatMul`: `[m,k] x [k,n] -> [m,n]` or `[m,k] x [k] -> [m]`.
/// - `Add` / `Mul`: identical shapes, or one operand with a single element
///   (scalar-tensor broadcast; nothing wider).
/// - `Concat`: same rank and leading dims, joined along the last axis.
/// - `Softmax`: over the last axis; an empty axis is rejected.
/// - `Sum` / `Mean` / `L2Norm`: full reduction to shape `[1]`.
/// - `Slice`: `[.., extent] -> [.., len]` along the last axis.
/// - `Embed`: row lookup `[rows, d] -> [indices.len(), d]`.
#[derive(Debug, Clone)]
pub enum PrimitiveKind<S> {
    MatMul,
    Add,
    Mul,
    Concat,
    Softmax,
    LeakyRelu(S),
    Sigmoid,
    Tanh,
    Softplus,
    Sum,
    Mean,
    L2Norm,
    Slice { start: usize, len: usize },
    Embed { indices: Vec<usize> },
    ScalarMul(S),
}

impl<S> PrimitiveKind<S> {
    fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::MatMul => "matmul",
            PrimitiveKind::Add => "add",
            PrimitiveKind::Mul => "mul",
            PrimitiveKind::Concat => "concat",
            PrimitiveKind::Softmax => "softmax",
            PrimitiveKind::LeakyRelu(_) => "leaky_relu",
            PrimitiveKind::Sigmoid => "sigmoid",
            PrimitiveKind::Tanh => "tanh",
            PrimitiveKind::Softplus => "softplus",
            PrimitiveKind::Sum => "sum",
            PrimitiveKind::Mean => "mean",
            PrimitiveKind::L2Norm => "l2norm",
            PrimitiveKind::Slice { .. } => "slice",
            PrimitiveKind::Embed { .. } => "embed",
            PrimitiveKind::ScalarMul(_) => "scalar_mul",
        }
    }
}

struct OpRecord<S> {
    kind: PrimitiveKind<S>,
    inputs: Vec<usize>,
    out: usize,
}

/// Wengert tape: values are appended in forward order, so replaying the
/// recorded ops in reverse visits every node exactly once.
///
/// A tape and its variables belong to one worker; a fresh tape is built per
/// rollout (and cleared implicitly by dropping it).
pub struct Tape<S> {
    vals: Vec<TensorData<S>>,
    needs_grad: Vec<bool>,
    ops: Vec<OpRecord<S>>,
    grads: Vec<Option<Vec<S>>>,
    swept: bool,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            vals: Vec::new(),
            needs_grad: Vec::new(),
            ops: Vec::new(),
            grads: Vec::new(),
            swept: false,
        }
    }

    /// Registers a leaf value. Gradients flow to it only when `requires_grad`.
    pub fn input(&mut self, value: &TensorData<S>, requires_grad: bool) -> Var {
        let id = self.vals.len();
        self.vals.push(value.clone());
        self.needs_grad.push(requires_grad);
        Var { id }
    }

    /// Registers a leaf that never receives gradients.
    pub fn constant(&mut self, value: &TensorData<S>) -> Var {
        self.input(value, false)
    }

    pub fn constant_scalar(&mut self, v: S) -> Var {
        self.input(&TensorData::scalar(v), false)
    }

    pub fn value(&self, v: Var) -> &TensorData<S> {
        &self.vals[v.id]
    }

    /// Gradient of the last backward sweep with respect to `v`, if any flowed.
    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    pub fn num_nodes(&self) -> usize {
        self.vals.len()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs_grad[v.id]
    }

    /// Applies one primitive, recording a tape node when any input carries
    /// gradient. This is the single entry point every convenience wrapper
    /// funnels through.
    pub fn apply(&mut self, op: PrimitiveKind<S>, inputs: &[Var]) -> Result<Var, TensorError> {
        let expected = match op {
            PrimitiveKind::MatMul | PrimitiveKind::Add | PrimitiveKind::Mul => 2,
            PrimitiveKind::Concat => {
                if inputs.is_empty() {
                    return Err(TensorError::BadArity {
                        op: "concat",
                        expected: 1,
                        got: 0,
                    });
                }
                inputs.len()
            }
            _ => 1,
        };
        if inputs.len() != expected {
            return Err(TensorError::BadArity {
                op: op.name(),
                expected,
                got: inputs.len(),
            });
        }

        let out_val = self.eval(&op, inputs)?;
        let out_id = self.vals.len();
        let out_needs = inputs.iter().any(|v| self.needs_grad[v.id]);
        self.vals.push(out_val);
        self.needs_grad.push(out_needs);
        if out_needs {
            self.ops.push(OpRecord {
                kind: op,
                inputs: inputs.iter().map(|v| v.id).collect(),
                out: out_id,
            });
        }
        Ok(Var { id: out_id })
    }

    // Convenience wrappers.

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::Add, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::Mul, &[a, b])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::Concat, parts)
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::Softmax, &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: S) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::LeakyRelu(slope), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::Sigmoid, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::Tanh, &[x])
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::Softplus, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::Sum, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::Mean, &[x])
    }

    pub fn l2norm(&mut self, x: Var) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::L2Norm, &[x])
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::Slice { start, len }, &[x])
    }

    pub fn embed(&mut self, table: Var, indices: &[usize]) -> Result<Var, TensorError> {
        self.apply(
            PrimitiveKind::Embed {
                indices: indices.to_vec(),
            },
            &[table],
        )
    }

    pub fn scalar_mul(&mut self, x: Var, c: S) -> Result<Var, TensorError> {
        self.apply(PrimitiveKind::ScalarMul(c), &[x])
    }

    /// `a - b` via `a + (-1) * b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let nb = self.scalar_mul(b, -S::one())?;
        self.add(a, nb)
    }

    fn eval(&self, op: &PrimitiveKind<S>, inputs: &[Var]) -> Result<TensorData<S>, TensorError> {
        let val = |v: &Var| &self.vals[v.id];
        match op {
            PrimitiveKind::MatMul => matmul_forward(val(&inputs[0]), val(&inputs[1])),
            PrimitiveKind::Add => ew_forward("add", val(&inputs[0]), val(&inputs[1]), |a, b| a + b),
            PrimitiveKind::Mul => ew_forward("mul", val(&inputs[0]), val(&inputs[1]), |a, b| a * b),
            PrimitiveKind::Concat => concat_forward(&inputs.iter().map(val).collect::<Vec<_>>()),
            PrimitiveKind::Softmax => softmax_forward(val(&inputs[0])),
            PrimitiveKind::LeakyRelu(slope) => {
                let s = *slope;
                unary(val(&inputs[0]), |x| if x >= S::zero() { x } else { s * x })
            }
            PrimitiveKind::Sigmoid => unary(val(&inputs[0]), sigmoid_scalar),
            PrimitiveKind::Tanh => unary(val(&inputs[0]), |x| x.tanh()),
            PrimitiveKind::Softplus => unary(val(&inputs[0]), softplus_scalar),
            PrimitiveKind::Sum => {
                let t = val(&inputs[0]);
                Ok(TensorData::scalar(
                    t.data().iter().fold(S::zero(), |acc, &v| acc + v),
                ))
            }
            PrimitiveKind::Mean => {
                let t = val(&inputs[0]);
                let n = S::of_usize(t.numel());
                Ok(TensorData::scalar(
                    t.data().iter().fold(S::zero(), |acc, &v| acc + v) / n,
                ))
            }
            PrimitiveKind::L2Norm => {
                let t = val(&inputs[0]);
                Ok(TensorData::scalar(
                    t.data()
                        .iter()
                        .fold(S::zero(), |acc, &v| acc + v * v)
                        .sqrt(),
                ))
            }
            PrimitiveKind::Slice { start, len } => slice_forward(val(&inputs[0]), *start, *len),
            PrimitiveKind::Embed { indices } => embed_forward(val(&inputs[0]), indices),
            PrimitiveKind::ScalarMul(c) => {
                let c = *c;
                unary(val(&inputs[0]), |x| c * x)
            }
        }
    }

    /// Reverse sweep from a scalar loss. Every `requires_grad` ancestor ends
    /// up with `d(loss)/d(tensor)` available through [`Tape::grad`]; nodes off
    /// the ancestor set are left untouched. A second sweep without recording
    /// a fresh graph is an error rather than a silent double-accumulation.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.swept {
            return Err(TensorError::TapeConsumed);
        }
        if self.vals[loss.id].numel() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.vals[loss.id].shape().to_vec(),
            });
        }
        self.swept = true;
        self.grads = vec![None; self.vals.len()];
        self.grads[loss.id] = Some(vec![S::one()]);

        let Tape {
            vals,
            needs_grad,
            ops,
            grads,
            ..
        } = self;

        for op in ops.iter().rev() {
            let Some(out_grad) = grads[op.out].take() else {
                continue;
            };
            backward_op(op, vals, needs_grad, grads, &out_grad);
            grads[op.out] = Some(out_grad);
        }
        Ok(())
    }
}

fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn softplus_scalar<S: Scalar>(x: S) -> S {
    // ln(1 + e^x), stable on both tails.
    if x > S::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn unary<S: Scalar>(t: &TensorData<S>, f: impl Fn(S) -> S) -> Result<TensorData<S>, TensorError> {
    TensorData::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
}

fn ew_forward<S: Scalar>(
    op: &'static str,
    a: &TensorData<S>,
    b: &TensorData<S>,
    f: impl Fn(S, S) -> S,
) -> Result<TensorData<S>, TensorError> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        TensorData::new(a.shape().to_vec(), data)
    } else if b.is_scalar() {
        let s = b.data()[0];
        unary(a, |x| f(x, s))
    } else if a.is_scalar() {
        let s = a.data()[0];
        unary(b, |y| f(s, y))
    } else {
        Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

fn matmul_forward<S: Scalar>(
    a: &TensorData<S>,
    b: &TensorData<S>,
) -> Result<TensorData<S>, TensorError> {
    let (ash, bsh) = (a.shape(), b.shape());
    match (ash.len(), bsh.len()) {
        (2, 2) => {
            let (m, k) = (ash[0], ash[1]);
            let (k2, n) = (bsh[0], bsh[1]);
            if k != k2 {
                return Err(TensorError::ShapeMismatch {
                    op: "matmul",
                    lhs: ash.to_vec(),
                    rhs: bsh.to_vec(),
                });
            }
            let (ad, bd) = (a.data(), b.data());
            let mut out = vec![S::zero(); m * n];
            for i in 0..m {
                for l in 0..k {
                    let av = ad[i * k + l];
                    for j in 0..n {
                        out[i * n + j] += av * bd[l * n + j];
                    }
                }
            }
            TensorData::new(vec![m, n], out)
        }
        (2, 1) => {
            let (m, k) = (ash[0], ash[1]);
            if k != bsh[0] {
                return Err(TensorError::ShapeMismatch {
                    op: "matmul",
                    lhs: ash.to_vec(),
                    rhs: bsh.to_vec(),
                });
            }
            let (ad, bd) = (a.data(), b.data());
            let mut out = vec![S::zero(); m];
            for i in 0..m {
                let mut acc = S::zero();
                for l in 0..k {
                    acc += ad[i * k + l] * bd[l];
                }
                out[i] = acc;
            }
            TensorData::new(vec![m], out)
        }
        _ => Err(TensorError::ShapeMismatch {
            op: "matmul",
            lhs: ash.to_vec(),
            rhs: bsh.to_vec(),
        }),
    }
}

fn concat_forward<S: Scalar>(parts: &[&TensorData<S>]) -> Result<TensorData<S>, TensorError> {
    let rank = parts[0].shape().len();
    let lead = &parts[0].shape()[..rank - 1];
    for p in parts {
        if p.shape().len() != rank || &p.shape()[..rank - 1] != lead {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                lhs: parts[0].shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
    }
    let lead_n: usize = lead.iter().product();
    let total_last: usize = parts.iter().map(|p| p.last_extent()).sum();
    let mut out = Vec::with_capacity(lead_n * total_last);
    for row in 0..lead_n {
        for p in parts {
            let c = p.last_extent();
            out.extend_from_slice(&p.data()[row * c..(row + 1) * c]);
        }
    }
    let mut shape = lead.to_vec();
    shape.push(total_last);
    TensorData::new(shape, out)
}

fn softmax_forward<S: Scalar>(t: &TensorData<S>) -> Result<TensorData<S>, TensorError> {
    let c = t.last_extent();
    if c == 0 {
        return Err(TensorError::EmptySoftmax {
            shape: t.shape().to_vec(),
        });
    }
    let rows = t.numel() / c;
    let mut out = vec![S::zero(); t.numel()];
    for r in 0..rows {
        let row = &t.data()[r * c..(r + 1) * c];
        let max = row.iter().fold(row[0], |m, &v| m.max(v));
        let mut denom = S::zero();
        for (i, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            out[r * c + i] = e;
            denom += e;
        }
        for i in 0..c {
            out[r * c + i] /= denom;
        }
    }
    TensorData::new(t.shape().to_vec(), out)
}

fn slice_forward<S: Scalar>(
    t: &TensorData<S>,
    start: usize,
    len: usize,
) -> Result<TensorData<S>, TensorError> {
    let c = t.last_extent();
    if len == 0 || start + len > c {
        return Err(TensorError::SliceOutOfBounds {
            start,
            len,
            extent: c,
        });
    }
    let rows = t.numel() / c;
    let mut out = Vec::with_capacity(rows * len);
    for r in 0..rows {
        out.extend_from_slice(&t.data()[r * c + start..r * c + start + len]);
    }
    let mut shape = t.shape()[..t.shape().len() - 1].to_vec();
    shape.push(len);
    TensorData::new(shape, out)
}

fn embed_forward<S: Scalar>(
    table: &TensorData<S>,
    indices: &[usize],
) -> Result<TensorData<S>, TensorError> {
    if table.shape().len() != 2 {
        return Err(TensorError::BadRank {
            op: "embed",
            expected: 2,
            shape: table.shape().to_vec(),
        });
    }
    if indices.is_empty() {
        return Err(TensorError::BadArity {
            op: "embed",
            expected: 1,
            got: 0,
        });
    }
    let (rows, d) = (table.shape()[0], table.shape()[1]);
    let mut out = Vec::with_capacity(indices.len() * d);
    for &idx in indices {
        if idx >= rows {
            return Err(TensorError::IndexOutOfBounds { index: idx, rows });
        }
        out.extend_from_slice(&table.data()[idx * d..(idx + 1) * d]);
    }
    TensorData::new(vec![indices.len(), d], out)
}

fn backward_op<S: Scalar>(
    op: &OpRecord<S>,
    vals: &[TensorData<S>],
    needs_grad: &[bool],
    grads: &mut [Option<Vec<S>>],
    out_grad: &[S],
) {
    let mut accum = |id: usize, contrib: Vec<S>| {
        if !needs_grad[id] {
            return;
        }
        match &mut grads[id] {
            Some(existing) => {
                for (e, g) in existing.iter_mut().zip(&contrib) {
                    *e += *g;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    };

    match &op.kind {
        PrimitiveKind::MatMul => {
            let (a, b) = (&vals[op.inputs[0]], &vals[op.inputs[1]]);
            if b.shape().len() == 2 {
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = b.shape()[1];
                let mut da = vec![S::zero(); m * k];
                let mut db = vec![S::zero(); k * n];
                for i in 0..m {
                    for j in 0..n {
                        let g = out_grad[i * n + j];
                        for l in 0..k {
                            da[i * k + l] += g * b.data()[l * n + j];
                            db[l * n + j] += a.data()[i * k + l] * g;
                        }
                    }
                }
                accum(op.inputs[0], da);
                accum(op.inputs[1], db);
            } else {
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let mut da = vec![S::zero(); m * k];
                let mut db = vec![S::zero(); k];
                for i in 0..m {
                    let g = out_grad[i];
                    for l in 0..k {
                        da[i * k + l] = g * b.data()[l];
                        db[l] += a.data()[i * k + l] * g;
                    }
                }
                accum(op.inputs[0], da);
                accum(op.inputs[1], db);
            }
        }
        PrimitiveKind::Add => {
            let (a, b) = (&vals[op.inputs[0]], &vals[op.inputs[1]]);
            accum(op.inputs[0], reduce_for(a, out_grad, |_| S::one()));
            accum(op.inputs[1], reduce_for(b, out_grad, |_| S::one()));
        }
        PrimitiveKind::Mul => {
            let (a, b) = (&vals[op.inputs[0]], &vals[op.inputs[1]]);
            // d/da (a*b) = b, with scalar-broadcast reduction where needed.
            if a.shape() == b.shape() {
                let da = out_grad
                    .iter()
                    .zip(b.data())
                    .map(|(&g, &bv)| g * bv)
                    .collect();
                let db = out_grad
                    .iter()
                    .zip(a.data())
                    .map(|(&g, &av)| g * av)
                    .collect();
                accum(op.inputs[0], da);
                accum(op.inputs[1], db);
            } else if b.is_scalar() {
                let bv = b.data()[0];
                accum(op.inputs[0], out_grad.iter().map(|&g| g * bv).collect());
                let db = out_grad
                    .iter()
                    .zip(a.data())
                    .fold(S::zero(), |acc, (&g, &av)| acc + g * av);
                accum(op.inputs[1], vec![db]);
            } else {
                let av = a.data()[0];
                let da = out_grad
                    .iter()
                    .zip(b.data())
                    .fold(S::zero(), |acc, (&g, &bv)| acc + g * bv);
                accum(op.inputs[0], vec![da]);
                accum(op.inputs[1], out_grad.iter().map(|&g| g * av).collect());
            }
        }
        PrimitiveKind::Concat => {
            let parts: Vec<&TensorData<S>> = op.inputs.iter().map(|&i| &vals[i]).collect();
            let lead_n: usize = parts[0].shape()[..parts[0].shape().len() - 1]
                .iter()
                .product();
            let total_last: usize = parts.iter().map(|p| p.last_extent()).sum();
            let mut offset = 0;
            for (pi, p) in parts.iter().enumerate() {
                let c = p.last_extent();
                let mut dp = Vec::with_capacity(lead_n * c);
                for row in 0..lead_n {
                    let base = row * total_last + offset;
                    dp.extend_from_slice(&out_grad[base..base + c]);
                }
                accum(op.inputs[pi], dp);
                offset += c;
            }
        }
        PrimitiveKind::Softmax => {
            let y = &vals[op.out];
            let c = y.last_extent();
            let rows = y.numel() / c;
            let mut dx = vec![S::zero(); y.numel()];
            for r in 0..rows {
                let yr = &y.data()[r * c..(r + 1) * c];
                let gr = &out_grad[r * c..(r + 1) * c];
                let dot = yr
                    .iter()
                    .zip(gr)
                    .fold(S::zero(), |acc, (&yv, &gv)| acc + yv * gv);
                for i in 0..c {
                    dx[r * c + i] = yr[i] * (gr[i] - dot);
                }
            }
            accum(op.inputs[0], dx);
        }
        PrimitiveKind::LeakyRelu(slope) => {
            let x = &vals[op.inputs[0]];
            let s = *slope;
            let dx = x
                .data()
                .iter()
                .zip(out_grad)
                .map(|(&xv, &g)| if xv >= S::zero() { g } else { s * g })
                .collect();
            accum(op.inputs[0], dx);
        }
        PrimitiveKind::Sigmoid => {
            let y = &vals[op.out];
            let dx = y
                .data()
                .iter()
                .zip(out_grad)
                .map(|(&yv, &g)| g * yv * (S::one() - yv))
                .collect();
            accum(op.inputs[0], dx);
        }
        PrimitiveKind::Tanh => {
            let y = &vals[op.out];
            let dx = y
                .data()
                .iter()
                .zip(out_grad)
                .map(|(&yv, &g)| g * (S::one() - yv * yv))
                .collect();
            accum(op.inputs[0], dx);
        }
        PrimitiveKind::Softplus => {
            let x = &vals[op.inputs[0]];
            let dx = x
                .data()
                .iter()
                .zip(out_grad)
                .map(|(&xv, &g)| g * sigmoid_scalar(xv))
                .collect();
            accum(op.inputs[0], dx);
        }
        PrimitiveKind::Sum => {
            let n = vals[op.inputs[0]].numel();
            accum(op.inputs[0], vec![out_grad[0]; n]);
        }
        PrimitiveKind::Mean => {
            let n = vals[op.inputs[0]].numel();
            let g = out_grad[0] / S::of_usize(n);
            accum(op.inputs[0], vec![g; n]);
        }
        PrimitiveKind::L2Norm => {
            let x = &vals[op.inputs[0]];
            let y = vals[op.out].data()[0];
            // Subgradient 0 at the origin.
            let dx = if y > S::zero() {
                x.data().iter().map(|&xv| out_grad[0] * xv / y).collect()
            } else {
                vec![S::zero(); x.numel()]
            };
            accum(op.inputs[0], dx);
        }
        PrimitiveKind::Slice { start, len } => {
            let x = &vals[op.inputs[0]];
            let c = x.last_extent();
            let rows = x.numel() / c;
            let mut dx = vec![S::zero(); x.numel()];
            for r in 0..rows {
                for i in 0..*len {
                    dx[r * c + start + i] = out_grad[r * len + i];
                }
            }
            accum(op.inputs[0], dx);
        }
        PrimitiveKind::Embed { indices } => {
            let table = &vals[op.inputs[0]];
            let d = table.shape()[1];
            let mut dt = vec![S::zero(); table.numel()];
            for (row, &idx) in indices.iter().enumerate() {
                for j in 0..d {
                    dt[idx * d + j] += out_grad[row * d + j];
                }
            }
            accum(op.inputs[0], dt);
        }
        PrimitiveKind::ScalarMul(c) => {
            let c = *c;
            accum(op.inputs[0], out_grad.iter().map(|&g| c * g).collect());
        }
    }
}

/// Pass-through gradient for `add`, collapsing to a single element when the
/// operand was a broadcast scalar.
fn reduce_for<S: Scalar>(operand: &TensorData<S>, out_grad: &[S], w: impl Fn(usize) -> S) -> Vec<S> {
    if operand.numel() == out_grad.len() {
        out_grad.iter().enumerate().map(|(i, &g)| g * w(i)).collect()
    } else {
        vec![out_grad
            .iter()
            .enumerate()
            .fold(S::zero(), |acc, (i, &g)| acc + g * w(i))]
    }
}
