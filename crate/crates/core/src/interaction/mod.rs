//! Per-frame interaction graph.
//!
//! For each frame, every agent's permitted neighbors are the product of
//! three binary masks: visual scope (a frustum around the heading, wider
//! inside the intersection), Euclidean distance, and lane compatibility.
//! The resulting adjacency is rebuilt from frame geometry alone — nothing is
//! cached across frames — and its weakly-connected components are the
//! interaction sub-graphs. Neighbor hidden states are aggregated with masked
//! attention.

use crate::data::AgentRecord;
use crate::nn::BoundAttentionHead;
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorError, Var};
use std::collections::VecDeque;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("adjacency requires at least one agent")]
    NoAgents,
    #[error("expected {expected} headings, got {got}")]
    HeadingCount { expected: usize, got: usize },
    #[error("non-finite heading for agent index {index}")]
    BadHeading { index: usize },
    #[error("hidden-state count {got} does not match {expected} agents")]
    HiddenCount { expected: usize, got: usize },
}

/// How the lane mask compares two agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LaneRule {
    /// Same travel direction group: `sign(lane_i) == sign(lane_j)`.
    DirectionGroup,
    /// Identical lane ids.
    LiteralLane,
}

/// Geometry thresholds for the interaction masks.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SdgParams {
    /// Half-angle of the visual frustum on road segments, radians.
    pub theta_road: f64,
    /// Half-angle inside the intersection core, radians.
    pub theta_intersection: f64,
    /// Distance threshold in pixels.
    pub d_max: f64,
    pub lane_rule: LaneRule,
    /// `[x0, y0, x1, y1]` intersection core; agents inside use the wider
    /// frustum. `None` means the road angle applies everywhere.
    pub intersection_box: Option<[f64; 4]>,
}

impl Default for SdgParams {
    fn default() -> Self {
        SdgParams {
            theta_road: 60f64.to_radians(),
            theta_intersection: 120f64.to_radians(),
            d_max: 150.0,
            lane_rule: LaneRule::DirectionGroup,
            intersection_box: None,
        }
    }
}

impl SdgParams {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |t: f64| t > 0.0 && t <= std::f64::consts::PI;
        if !ok(self.theta_road) || !ok(self.theta_intersection) {
            return Err("frustum half-angles must lie in (0, pi]".into());
        }
        if self.d_max.is_nan() || self.d_max <= 0.0 {
            return Err("d_max must be positive".into());
        }
        Ok(())
    }

    fn theta_for(&self, pos: (f64, f64)) -> f64 {
        match self.intersection_box {
            Some([x0, y0, x1, y1])
                if pos.0 >= x0 && pos.0 <= x1 && pos.1 >= y0 && pos.1 <= y1 =>
            {
                self.theta_intersection
            }
            _ => self.theta_road,
        }
    }
}

/// Square binary matrix indexed by agent order.
#[derive(Debug, Clone, PartialEq)]
pub struct BitMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl BitMatrix {
    fn filled(n: usize, value: bool) -> Self {
        BitMatrix {
            n,
            bits: vec![value; n * n],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.n + j] = v;
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Per-frame interaction masks: the visual (`v`), distance (`d`), and lane
/// (`l`) factors and their elementwise product `r` with forced self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMask {
    pub agent_ids: Vec<i64>,
    pub v: BitMatrix,
    pub d: BitMatrix,
    pub l: BitMatrix,
    pub r: BitMatrix,
}

impl AdjacencyMask {
    pub fn n(&self) -> usize {
        self.agent_ids.len()
    }

    /// A complete graph over the same agents (the unmasked-attention mode).
    pub fn complete(agent_ids: Vec<i64>) -> Self {
        let n = agent_ids.len();
        AdjacencyMask {
            agent_ids,
            v: BitMatrix::filled(n, true),
            d: BitMatrix::filled(n, true),
            l: BitMatrix::filled(n, true),
            r: BitMatrix::filled(n, true),
        }
    }

    /// CSV debug dump: one `matrix,row,cols...` block per factor.
    pub fn to_csv_block(&self, frame_id: i64) -> String {
        let mut out = String::new();
        for (name, m) in [("V", &self.v), ("D", &self.d), ("L", &self.l), ("R", &self.r)] {
            for i in 0..m.n() {
                let _ = write!(out, "{frame_id},{name},{i}");
                for j in 0..m.n() {
                    let _ = write!(out, ",{}", u8::from(m.get(i, j)));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Builds the frame adjacency from positions, headings, and lane ids.
///
/// A zero heading marks an agent whose facing is unknown (no nonzero
/// displacement yet): its visual row admits every neighbor. The `r` diagonal
/// is forced to 1 so every agent has a defined aggregate.
pub fn build_adjacency(
    agents: &[AgentRecord],
    headings: &[(f64, f64)],
    params: &SdgParams,
) -> Result<AdjacencyMask, GraphError> {
    let n = agents.len();
    if n == 0 {
        return Err(GraphError::NoAgents);
    }
    if headings.len() != n {
        return Err(GraphError::HeadingCount {
            expected: n,
            got: headings.len(),
        });
    }
    for (i, h) in headings.iter().enumerate() {
        if !(h.0.is_finite() && h.1.is_finite()) {
            return Err(GraphError::BadHeading { index: i });
        }
    }

    let mut v = BitMatrix::filled(n, false);
    let mut d = BitMatrix::filled(n, false);
    let mut l = BitMatrix::filled(n, false);
    let mut r = BitMatrix::filled(n, false);

    for i in 0..n {
        let pi = agents[i].position();
        let hi = headings[i];
        let omni = hi == (0.0, 0.0);
        let theta = params.theta_for(pi);
        for j in 0..n {
            if i == j {
                v.set(i, j, true);
                d.set(i, j, true);
                l.set(i, j, true);
                r.set(i, j, true);
                continue;
            }
            let pj = agents[j].position();
            let delta = (pj.0 - pi.0, pj.1 - pi.1);
            let dist = (delta.0 * delta.0 + delta.1 * delta.1).sqrt();

            let visible = if omni || dist == 0.0 {
                true
            } else {
                let hn = (hi.0 * hi.0 + hi.1 * hi.1).sqrt();
                let cos = (hi.0 * delta.0 + hi.1 * delta.1) / (hn * dist);
                cos.clamp(-1.0, 1.0).acos() <= theta
            };
            let near = dist <= params.d_max;
            let lane_ok = match params.lane_rule {
                LaneRule::DirectionGroup => {
                    agents[i].lane_id.signum() == agents[j].lane_id.signum()
                }
                LaneRule::LiteralLane => agents[i].lane_id == agents[j].lane_id,
            };

            v.set(i, j, visible);
            d.set(i, j, near);
            l.set(i, j, lane_ok);
            r.set(i, j, visible && near && lane_ok);
        }
    }

    Ok(AdjacencyMask {
        agent_ids: agents.iter().map(|a| a.agent_id).collect(),
        v,
        d,
        l,
        r,
    })
}

/// Weakly-connected components of `r`, as sorted lists of agent ids;
/// singletons are kept.
pub fn partition_subgraphs(mask: &AdjacencyMask) -> Vec<Vec<i64>> {
    let n = mask.n();
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(mask.agent_ids[i]);
            #[allow(clippy::needless_range_loop)]
            for j in 0..n {
                if !seen[j] && (mask.r.get(i, j) || mask.r.get(j, i)) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    components
}

/// Masked attention aggregation: for each agent, attention weights over its
/// permitted neighbors only, then the weighted sum of their hidden states.
/// Hidden states of non-neighbors cannot influence the output.
///
/// Each agent's projection is computed once and shared across every pair it
/// appears in; the scores are otherwise exactly the head's scoring form.
pub fn spatial_aggregate<S: Scalar>(
    tape: &mut Tape<S>,
    hidden: &[Var],
    mask: &AdjacencyMask,
    head: &BoundAttentionHead<S>,
) -> Result<Vec<Var>, TensorError> {
    assert_eq!(
        hidden.len(),
        mask.n(),
        "hidden-state count must match the mask"
    );
    let n = mask.n();
    let projected: Vec<Var> = hidden
        .iter()
        .map(|&h| tape.matmul(head.proj, h))
        .collect::<Result<_, _>>()?;

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let neighbors: Vec<usize> = (0..n).filter(|&j| mask.r.get(i, j)).collect();
        let mut scores = Vec::with_capacity(neighbors.len());
        for &j in &neighbors {
            let pair = tape.concat(&[projected[i], projected[j]])?;
            let weighted = tape.mul(head.score, pair)?;
            let s = tape.sum(weighted)?;
            scores.push(tape.leaky_relu(s, head.leaky_slope)?);
        }
        let logits = tape.concat(&scores)?;
        let weights = tape.softmax(logits)?;
        let mut acc: Option<Var> = None;
        for (slot, &j) in neighbors.iter().enumerate() {
            let a = tape.slice(weights, slot, 1)?;
            let term = tape.mul(hidden[j], a)?;
            acc = Some(match acc {
                Some(prev) => tape.add(prev, term)?,
                None => term,
            });
        }
        out.push(acc.expect("self-loop guarantees at least one neighbor"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
