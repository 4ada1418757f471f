//! Behavior dependency across time: each agent's current state attends
//! directly over a bounded window of its own past states instead of passing
//! information through a chain recurrence. Includes traffic-light sequence
//! encoding and the fusion of spatial and light features.

use crate::data::AgentRecord;
use crate::nn::{gat_scores, lstm_step, BoundAttentionHead, BoundLinear, BoundLstm, BoundMlp, LstmState, mlp_forward};
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorData, TensorError, Var};
use std::collections::VecDeque;

/// Features serialized per observed frame: one-hot light state (3), time
/// remaining, influence-area flag, head-of-queue flag, one-hot maneuver (3).
pub const LIGHT_FEATURES_PER_FRAME: usize = 9;

/// Seconds-remaining values are scaled to minutes so the feature shares the
/// unit range of the flags and one-hots.
pub const LIGHT_REMAINING_SCALE: f64 = 1.0 / 60.0;

/// Serialized per-step light context over an observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct LightSequenceFeature {
    values: Vec<f64>,
    frames: usize,
}

impl LightSequenceFeature {
    pub fn from_obs(records: &[AgentRecord]) -> Self {
        let mut values = Vec::with_capacity(records.len() * LIGHT_FEATURES_PER_FRAME);
        for r in records {
            let mut ls = [0.0; 3];
            ls[r.light_state.index()] = 1.0;
            values.extend_from_slice(&ls);
            values.push(r.light_remaining * LIGHT_REMAINING_SCALE);
            values.push(f64::from(r.in_influence_area));
            values.push(f64::from(r.head_of_queue));
            let mut mb = [0.0; 3];
            mb[r.maneuver.index()] = 1.0;
            values.extend_from_slice(&mb);
        }
        LightSequenceFeature {
            values,
            frames: records.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame_slice(&self, t: usize) -> &[f64] {
        &self.values[t * LIGHT_FEATURES_PER_FRAME..(t + 1) * LIGHT_FEATURES_PER_FRAME]
    }

    pub fn to_tensor<S: Scalar>(&self) -> TensorData<S> {
        TensorData::from_f64_slice(vec![self.values.len()], &self.values)
            .expect("light features are non-empty")
    }
}

/// Feedforward encoding of a whole light sequence: no recurrence across
/// steps, so discontinuous state flips stay directly visible.
pub fn encode_lights<S: Scalar>(
    tape: &mut Tape<S>,
    enc: &BoundMlp<S>,
    feat: &LightSequenceFeature,
) -> Result<Var, TensorError> {
    let x = tape.constant(&feat.to_tensor());
    mlp_forward(tape, enc, x)
}

/// Recurrent light encoder used by the encoder-comparison configuration:
/// an LSTM over the per-frame features, final hidden state returned.
pub fn encode_lights_lstm<S: Scalar>(
    tape: &mut Tape<S>,
    cell: &BoundLstm,
    hidden_dim: usize,
    feat: &LightSequenceFeature,
) -> Result<Var, TensorError> {
    let mut state = LstmState::zeros(tape, hidden_dim);
    for t in 0..feat.frames() {
        let x = tape.constant(
            &TensorData::from_f64_slice(vec![LIGHT_FEATURES_PER_FRAME], feat.frame_slice(t))
                .expect("frame slice is non-empty"),
        );
        state = lstm_step(tape, cell, state, x)?;
    }
    Ok(state.h)
}

/// Concatenates the spatial state with the light encoding and projects the
/// pair to the fused width.
pub fn fuse<S: Scalar>(
    tape: &mut Tape<S>,
    proj: &BoundLinear,
    spatial: Var,
    light: Var,
) -> Result<Var, TensorError> {
    let cat = tape.concat(&[spatial, light])?;
    proj.forward(tape, cat)
}

/// Ring buffer of an agent's past behavior states, capacity `k`. Entries are
/// ordered oldest to newest; anything older than the window is dropped and
/// can never influence later updates.
#[derive(Debug, Clone)]
pub struct BehaviorHistory {
    entries: VecDeque<Var>,
    cap: usize,
    steps: usize,
}

impl BehaviorHistory {
    pub fn new(cap: usize) -> Self {
        assert!(cap > 0, "behavior window must hold at least one state");
        BehaviorHistory {
            entries: VecDeque::with_capacity(cap),
            cap,
            steps: 0,
        }
    }

    pub fn push(&mut self, state: Var) {
        if self.entries.len() == self.cap {
            self.entries.pop_front();
        }
        self.entries.push_back(state);
        self.steps += 1;
    }

    pub fn entries(&self) -> impl Iterator<Item = Var> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    /// Number of updates seen so far (the current timestamp).
    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// One behavior update: the current state attends over the retained window
/// plus itself, each key contributing a projection of `[key || current]`;
/// the weighted sum becomes the new state and is appended to the history.
pub fn temporal_update<S: Scalar>(
    tape: &mut Tape<S>,
    head: &BoundAttentionHead<S>,
    value_proj: &BoundLinear,
    current: Var,
    history: &mut BehaviorHistory,
) -> Result<Var, TensorError> {
    let keys: Vec<Var> = history.entries().chain(std::iter::once(current)).collect();
    let weights = gat_scores(tape, head, current, &keys)?;
    let mut acc: Option<Var> = None;
    for (slot, &key) in keys.iter().enumerate() {
        let pair = tape.concat(&[key, current])?;
        let value = value_proj.forward(tape, pair)?;
        let a = tape.slice(weights, slot, 1)?;
        let term = tape.mul(value, a)?;
        acc = Some(match acc {
            Some(prev) => tape.add(prev, term)?,
            None => term,
        });
    }
    let out = acc.expect("current state is always a key");
    history.push(out);
    Ok(out)
}

#[cfg(test)]
mod tests;
