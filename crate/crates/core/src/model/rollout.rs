//! Forward rollout: encode the observed frames through the interaction and
//! behavior stages, then decode future displacements autoregressively.

use super::{
    BehaviorMode, GeneratorBinding, HyperParams, LightEncoderBinding, ModelBinding, ModelError,
    ModelParams, SpatialMode,
};
use crate::behavior::{
    encode_lights, encode_lights_lstm, fuse, temporal_update, BehaviorHistory,
    LightSequenceFeature,
};
use crate::data::{to_relative, RelativeWindow, TrajectoryWindow};
use crate::interaction::{build_adjacency, spatial_aggregate, AdjacencyMask, SdgParams};
use crate::nn::{embed_position, lstm_step, LstmState};
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorData, TensorError, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Predicted or ground-truth positions for one agent, one per step.
pub type Trajectory = Vec<(f64, f64)>;

/// Which distance the best-of-K objective minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VarietyMode {
    /// L2 norm of the full concatenated error vector.
    SequenceNorm,
    /// Sum of per-step Euclidean distances.
    StepSum,
}

/// Everything a rollout needs that is pure frame geometry: the displacement
/// encoding, per-frame adjacency, per-frame headings, and per-agent light
/// features. Reusable across samples and epochs.
#[derive(Debug, Clone)]
pub struct RolloutInputs {
    pub rel: RelativeWindow,
    pub masks: Vec<AdjacencyMask>,
    pub light_feats: Vec<LightSequenceFeature>,
    /// Absolute position of each agent at the last observed frame.
    pub last_obs_pos: Vec<(f64, f64)>,
}

/// Precomputes the tape-independent inputs for one window.
///
/// Headings come from the last nonzero displacement; an agent that has not
/// moved yet gets an omnidirectional visual row. Adjacency is rebuilt from
/// each frame's geometry alone.
pub fn prepare_inputs(
    window: &TrajectoryWindow,
    hp: &HyperParams,
    sdg: &SdgParams,
) -> Result<RolloutInputs, ModelError> {
    if window.obs_len() != hp.obs_len {
        return Err(ModelError::ObsLen {
            expected: hp.obs_len,
            got: window.obs_len(),
        });
    }
    let rel = to_relative(window);
    let n = window.num_agents();

    let mut masks = Vec::with_capacity(hp.obs_len);
    let mut last_heading: Vec<(f64, f64)> = vec![(0.0, 0.0); n];
    for t in 0..hp.obs_len {
        let frame_agents: Vec<_> = window.obs.iter().map(|rs| rs[t].clone()).collect();
        let mut headings = Vec::with_capacity(n);
        for (a, disps) in rel.obs_disp.iter().enumerate() {
            let d = disps[t];
            if d != (0.0, 0.0) {
                last_heading[a] = d;
            }
            headings.push(last_heading[a]);
        }
        let mask = match hp.ablation.spatial {
            SpatialMode::Sdg => build_adjacency(&frame_agents, &headings, sdg)?,
            SpatialMode::GatGlobal => {
                AdjacencyMask::complete(frame_agents.iter().map(|r| r.agent_id).collect())
            }
        };
        masks.push(mask);
    }

    let light_feats = window
        .obs
        .iter()
        .map(|records| LightSequenceFeature::from_obs(records))
        .collect();
    let last_obs_pos = window
        .obs
        .iter()
        .map(|records| records.last().expect("obs_len > 0").position())
        .collect();

    Ok(RolloutInputs {
        rel,
        masks,
        light_feats,
        last_obs_pos,
    })
}

/// Predicted displacement vars, `[agent][pred_len]`, each shape `[2]`.
#[derive(Debug, Clone)]
pub struct RolloutOutput {
    pub pred_disp: Vec<Vec<Var>>,
}

impl RolloutOutput {
    /// Integrates displacements into absolute positions.
    pub fn positions<S: Scalar>(
        &self,
        tape: &Tape<S>,
        last_obs_pos: &[(f64, f64)],
    ) -> Vec<Trajectory> {
        self.pred_disp
            .iter()
            .zip(last_obs_pos)
            .map(|(disps, &(mut x, mut y))| {
                disps
                    .iter()
                    .map(|&d| {
                        let v = tape.value(d).data();
                        x += v[0].as_f64();
                        y += v[1].as_f64();
                        (x, y)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Runs the generator over one window on an existing tape/binding.
pub fn rollout<S: Scalar>(
    tape: &mut Tape<S>,
    gen: &GeneratorBinding<S>,
    inputs: &RolloutInputs,
    hp: &HyperParams,
    noise: &TensorData<S>,
) -> Result<RolloutOutput, ModelError> {
    if noise.numel() != hp.noise_dim.max(1) && hp.noise_dim > 0 {
        return Err(ModelError::NoiseDim {
            expected: hp.noise_dim,
            got: noise.numel(),
        });
    }
    let n = inputs.rel.agent_ids.len();
    let noise_var = (hp.noise_dim > 0).then(|| tape.constant(noise));

    // Per-agent light encodings, computed once per window.
    let light_codes: Vec<Option<Var>> = if hp.ablation.lights {
        let enc = gen
            .light
            .as_ref()
            .expect("lights-on configuration carries a light encoder");
        inputs
            .light_feats
            .iter()
            .map(|feat| -> Result<Option<Var>, TensorError> {
                Ok(Some(match enc {
                    LightEncoderBinding::Mlp(mlp) => encode_lights(tape, mlp, feat)?,
                    LightEncoderBinding::Lstm(cell) => {
                        encode_lights_lstm(tape, cell, hp.hidden_dim, feat)?
                    }
                }))
            })
            .collect::<Result<_, _>>()?
    } else {
        vec![None; n]
    };

    // Observation phase.
    let mut enc_states: Vec<LstmState> = (0..n)
        .map(|_| LstmState::zeros(tape, hp.hidden_dim))
        .collect();
    let mut histories: Vec<BehaviorHistory> =
        (0..n).map(|_| BehaviorHistory::new(hp.k_window)).collect();
    let mut chain_states: Vec<LstmState> = (0..n)
        .map(|_| LstmState::zeros(tape, hp.fused_width()))
        .collect();
    let mut behavior_states: Vec<Option<Var>> = vec![None; n];

    for t in 0..hp.obs_len {
        let mut hidden = Vec::with_capacity(n);
        #[allow(clippy::needless_range_loop)]
        for a in 0..n {
            let d = inputs.rel.obs_disp[a][t];
            let e = embed_position(
                tape,
                &gen.pos_embed,
                [S::of_f64(d.0), S::of_f64(d.1)],
            )?;
            enc_states[a] = lstm_step(tape, &gen.encoder, enc_states[a], e)?;
            hidden.push(enc_states[a].h);
        }
        let spatial = spatial_aggregate(tape, &hidden, &inputs.masks[t], &gen.spatial_head)?;

        for a in 0..n {
            let fused = match (light_codes[a], &gen.fuse_proj) {
                (Some(code), Some(proj)) => fuse(tape, proj, spatial[a], code)?,
                _ => spatial[a],
            };
            let updated = match hp.ablation.behavior {
                BehaviorMode::Bdg => temporal_update(
                    tape,
                    gen.temporal_head
                        .as_ref()
                        .expect("window-attention configuration carries a head"),
                    gen.temporal_value
                        .as_ref()
                        .expect("window-attention configuration carries a value projection"),
                    fused,
                    &mut histories[a],
                )?,
                BehaviorMode::LstmChain => {
                    let cell = gen
                        .behavior_lstm
                        .as_ref()
                        .expect("chain configuration carries a cell");
                    chain_states[a] = lstm_step(tape, cell, chain_states[a], fused)?;
                    chain_states[a].h
                }
            };
            behavior_states[a] = Some(updated);
        }
    }

    // Decode phase: the last behavior state and encoder hidden state are the
    // per-agent context; the previous displacement is embedded and fed back.
    let mut pred_disp: Vec<Vec<Var>> = Vec::with_capacity(n);
    for a in 0..n {
        let behavior = behavior_states[a].expect("obs_len > 0");
        let enc_h = enc_states[a].h;
        let mut dec_state = LstmState::zeros(tape, hp.hidden_dim);
        let last_d = inputs.rel.obs_disp[a][hp.obs_len - 1];
        let mut prev = tape.constant(&TensorData::vector(vec![
            S::of_f64(last_d.0),
            S::of_f64(last_d.1),
        ]));
        let mut steps = Vec::with_capacity(hp.pred_len);
        for _ in 0..hp.pred_len {
            let fb = gen.feedback_embed.forward(tape, prev)?;
            let parts: Vec<Var> = match noise_var {
                Some(nv) => vec![behavior, enc_h, fb, nv],
                None => vec![behavior, enc_h, fb],
            };
            let x = tape.concat(&parts)?;
            dec_state = lstm_step(tape, &gen.decoder, dec_state, x)?;
            let d = gen.output_head.forward(tape, dec_state.h)?;
            steps.push(d);
            prev = d;
        }
        pred_disp.push(steps);
    }

    Ok(RolloutOutput { pred_disp })
}

/// One full forward pass on a fresh tape: returns absolute predicted
/// positions, `[agent][pred_len]`. Output is checked finite.
pub fn forward_rollout<S: Scalar>(
    window: &TrajectoryWindow,
    params: &ModelParams<S>,
    sdg: &SdgParams,
    noise: &TensorData<S>,
) -> Result<Vec<Trajectory>, ModelError> {
    let inputs = prepare_inputs(window, &params.hp, sdg)?;
    let mut tape = Tape::new();
    let binding = params.bind(&mut tape, false, false);
    let out = rollout(&mut tape, &binding.gen, &inputs, &params.hp, noise)?;
    let positions = out.positions(&tape, &inputs.last_obs_pos);
    if positions
        .iter()
        .flatten()
        .any(|p| !(p.0.is_finite() && p.1.is_finite()))
    {
        return Err(ModelError::NonFinite {
            context: "forward_rollout",
        });
    }
    Ok(positions)
}

/// Draws one noise vector. Components are uniform in [-1, 1].
pub fn draw_noise<S: Scalar>(rng: &mut ChaCha8Rng, dim: usize) -> TensorData<S> {
    if dim == 0 {
        return TensorData::scalar(S::zero());
    }
    TensorData::vector((0..dim).map(|_| S::of_f64(rng.gen_range(-1.0..1.0))).collect())
}

/// K independent rollouts with fresh noise per sample; extending K under the
/// same seed keeps the earlier samples' noise unchanged.
pub fn predict_k<S: Scalar>(
    window: &TrajectoryWindow,
    params: &ModelParams<S>,
    sdg: &SdgParams,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<Trajectory>>, ModelError> {
    if k == 0 {
        return Err(ModelError::NoSamples);
    }
    let mut rng = rand::SeedableRng::seed_from_u64(seed);
    let inputs = prepare_inputs(window, &params.hp, sdg)?;
    let mut samples = Vec::with_capacity(k);
    for _ in 0..k {
        let noise = draw_noise::<S>(&mut rng, params.hp.noise_dim);
        let mut tape = Tape::new();
        let binding = params.bind(&mut tape, false, false);
        let out = rollout(&mut tape, &binding.gen, &inputs, &params.hp, &noise)?;
        let positions = out.positions(&tape, &inputs.last_obs_pos);
        if positions
            .iter()
            .flatten()
            .any(|p| !(p.0.is_finite() && p.1.is_finite()))
        {
            return Err(ModelError::NonFinite { context: "predict_k" });
        }
        samples.push(positions);
    }
    Ok(samples)
}

/// Tape distance between one predicted trajectory and its target.
fn trajectory_distance<S: Scalar>(
    tape: &mut Tape<S>,
    pred_disp: &[Var],
    target_disp: &[(f64, f64)],
    mode: VarietyMode,
) -> Result<Var, TensorError> {
    // Positions relative to the shared last observed point: cumulative sums
    // of displacements on both sides.
    let mut pred_pos = Vec::with_capacity(pred_disp.len());
    let mut acc: Option<Var> = None;
    for &d in pred_disp {
        acc = Some(match acc {
            Some(prev) => tape.add(prev, d)?,
            None => d,
        });
        pred_pos.push(acc.unwrap());
    }
    let mut gt_pos = Vec::with_capacity(target_disp.len());
    let (mut gx, mut gy) = (0.0, 0.0);
    for d in target_disp {
        gx += d.0;
        gy += d.1;
        gt_pos.push((gx, gy));
    }

    let mut errs = Vec::with_capacity(pred_pos.len());
    for (p, g) in pred_pos.iter().zip(&gt_pos) {
        let gvar = tape.constant(&TensorData::vector(vec![S::of_f64(g.0), S::of_f64(g.1)]));
        errs.push(tape.sub(*p, gvar)?);
    }
    match mode {
        VarietyMode::SequenceNorm => {
            let flat = tape.concat(&errs)?;
            tape.l2norm(flat)
        }
        VarietyMode::StepSum => {
            let mut total: Option<Var> = None;
            for e in errs {
                let d = tape.l2norm(e)?;
                total = Some(match total {
                    Some(prev) => tape.add(prev, d)?,
                    None => d,
                });
            }
            Ok(total.expect("pred_len > 0"))
        }
    }
}

/// Best-of-K objective on the tape: per agent, the minimum distance over the
/// K samples (gradient flows only into the chosen sample), averaged over
/// agents. Returns the loss and each agent's chosen sample index.
pub fn variety_loss<S: Scalar>(
    tape: &mut Tape<S>,
    samples: &[RolloutOutput],
    inputs: &RolloutInputs,
    mode: VarietyMode,
) -> Result<(Var, Vec<usize>), ModelError> {
    if samples.is_empty() {
        return Err(ModelError::NoSamples);
    }
    let n = inputs.rel.agent_ids.len();
    let mut per_agent = Vec::with_capacity(n);
    let mut chosen = Vec::with_capacity(n);
    for a in 0..n {
        let mut best: Option<(Var, f64, usize)> = None;
        for (k, sample) in samples.iter().enumerate() {
            let d = trajectory_distance(
                tape,
                &sample.pred_disp[a],
                &inputs.rel.target_disp[a],
                mode,
            )?;
            let val = tape.value(d).data()[0].as_f64();
            if best.as_ref().is_none_or(|(_, b, _)| val < *b) {
                best = Some((d, val, k));
            }
        }
        let (var, _, k) = best.expect("samples is non-empty");
        per_agent.push(var);
        chosen.push(k);
    }
    let stacked = tape.concat(&per_agent)?;
    let loss = tape.mean(stacked)?;
    Ok((loss, chosen))
}

/// Scalar best-of-K distance from plain position arrays (no tape), for
/// callers that already have concrete trajectories.
pub fn variety_loss_values(
    gt: &[Trajectory],
    samples: &[Vec<Trajectory>],
    mode: VarietyMode,
) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::NoSamples);
    }
    let n = gt.len();
    let mut total = 0.0;
    for a in 0..n {
        let mut best = f64::INFINITY;
        for sample in samples {
            let d = match mode {
                VarietyMode::SequenceNorm => gt[a]
                    .iter()
                    .zip(&sample[a])
                    .map(|(g, p)| (g.0 - p.0).powi(2) + (g.1 - p.1).powi(2))
                    .sum::<f64>()
                    .sqrt(),
                VarietyMode::StepSum => gt[a]
                    .iter()
                    .zip(&sample[a])
                    .map(|(g, p)| (g.0 - p.0).hypot(g.1 - p.1))
                    .sum(),
            };
            best = best.min(d);
        }
        total += best;
    }
    Ok(total / n as f64)
}

/// Discriminator forward for one agent: LSTM over the embedded 20-step
/// displacement sequence, light features through the MLP branch when
/// enabled, linear head. Returns `(probability, logit)`.
pub fn discriminate<S: Scalar>(
    tape: &mut Tape<S>,
    binding: &ModelBinding<S>,
    hp: &HyperParams,
    traj_disp: &[Var],
    light_feat: &LightSequenceFeature,
) -> Result<(Var, Var), ModelError> {
    let disc = binding
        .disc
        .as_ref()
        .expect("discriminate requires a discriminator configuration");
    if traj_disp.len() != hp.obs_len + hp.pred_len {
        return Err(ModelError::ObsLen {
            expected: hp.obs_len + hp.pred_len,
            got: traj_disp.len(),
        });
    }
    let mut state = LstmState::zeros(tape, hp.hidden_dim);
    for &d in traj_disp {
        let e = disc.traj_embed.forward(tape, d)?;
        state = lstm_step(tape, &disc.traj_lstm, state, e)?;
    }
    let features = match &disc.light_mlp {
        Some(mlp) => {
            let lm = encode_lights(tape, mlp, light_feat)?;
            tape.concat(&[state.h, lm])?
        }
        None => state.h,
    };
    let logit = disc.head.forward(tape, features)?;
    let prob = tape.sigmoid(logit)?;
    Ok((prob, logit))
}

/// Displacement sequence (observed then future) as tape vars; future
/// displacements may be predictions (vars) or ground truth (constants).
pub fn full_disp_sequence<S: Scalar>(
    tape: &mut Tape<S>,
    inputs: &RolloutInputs,
    agent: usize,
    future: Option<&[Var]>,
) -> Vec<Var> {
    let mut seq: Vec<Var> = inputs.rel.obs_disp[agent]
        .iter()
        .map(|d| tape.constant(&TensorData::vector(vec![S::of_f64(d.0), S::of_f64(d.1)])))
        .collect();
    match future {
        Some(vars) => seq.extend_from_slice(vars),
        None => seq.extend(inputs.rel.target_disp[agent].iter().map(|d| {
            tape.constant(&TensorData::vector(vec![S::of_f64(d.0), S::of_f64(d.1)]))
        })),
    }
    seq
}
