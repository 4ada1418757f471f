//! Gradient verification suite: every layer plus the end-to-end miniature
//! model checked against central finite differences in f64.
//!
//! Shared by the `gradcheck` CLI command and the acceptance tests.

use crate::behavior::{
    encode_lights, fuse, temporal_update, BehaviorHistory, LightSequenceFeature,
};
use crate::data::{window_scene, AgentRecord, LightState, Maneuver, Scene, TrajectoryWindow};
use crate::interaction::{build_adjacency, spatial_aggregate, SdgParams};

use crate::model::{
    discriminate, full_disp_sequence, prepare_inputs, rollout, variety_loss, HyperParams,
    ModelParams, VarietyMode,
};
use crate::nn::{
    gat_scores, lstm_step, mlp_forward, AttentionHead, BoundAttentionHead, BoundLinear, BoundLstm,
    BoundMlp, Linear, LstmCell, LstmState, MlpEncoder,
};
use crate::tensor::{grad_check_many, GradReport, TensorData, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub report: GradReport,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.report.passes(GRAD_TOLERANCE)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> TensorData<f64> {
    TensorData::vector((0..n).map(|_| rng.gen_range(-0.9..0.9)).collect())
}

/// Miniature two-agent window: one queued agent with a stop-go profile, one
/// free-flowing neighbor.
fn miniature_window(hp: &HyperParams) -> TrajectoryWindow {
    let span = hp.obs_len + hp.pred_len;
    let frames = (0..span)
        .map(|f| {
            let records = (0..2)
                .map(|a| {
                    let slow = a == 0 && f >= 2;
                    AgentRecord {
                        frame_id: f as i64,
                        agent_id: a + 1,
                        x: 300.0 + f as f64 * if slow { 2.0 } else { 7.0 } + 30.0 * a as f64,
                        y: 400.0 + 3.0 * a as f64 * f as f64,
                        lane_id: 1,
                        in_influence_area: a == 0,
                        head_of_queue: a == 0,
                        maneuver: if a == 0 {
                            Maneuver::Straight
                        } else {
                            Maneuver::Left
                        },
                        light_id: 1,
                        light_state: if f < 2 {
                            LightState::Red
                        } else {
                            LightState::Green
                        },
                        light_remaining: 4.0 - f as f64 * 0.3,
                    }
                })
                .collect();
            (f as i64, records)
        })
        .collect();
    window_scene(&Scene::new(frames), hp.obs_len, hp.pred_len, 1)
        .into_iter()
        .next()
        .expect("miniature scene yields one window")
}

fn unwrap_tensor_err(e: crate::model::ModelError) -> TensorError {
    match e {
        crate::model::ModelError::Tensor(t) => t,
        other => panic!("unexpected model failure in gradient suite: {other}"),
    }
}

/// Runs the whole suite. Every outcome should satisfy
/// `max_rel_err < GRAD_TOLERANCE`.
pub fn gradient_suite() -> Result<Vec<CheckOutcome>, TensorError> {
    let mut out = Vec::new();

    // Linear embedding layer.
    {
        let mut r = rng(101);
        let layer = Linear::<f64>::init(16, 2, &mut r);
        let x = rand_vec(&mut r, 2);
        let report = grad_check_many(
            |tape, vars| {
                let bound = BoundLinear { w: vars[0], b: vars[1] };
                let y = bound.forward(tape, vars[2])?;
                let s = tape.sigmoid(y)?;
                tape.l2norm(s)
            },
            &[layer.w, layer.b, x],
            EPS,
        )?;
        out.push(CheckOutcome { name: "linear_embed", report });
    }

    // LSTM cell step.
    {
        let mut r = rng(103);
        let cell = LstmCell::<f64>::init(4, 6, &mut r);
        let tensors = vec![
            cell.input_gate.w.clone(),
            cell.input_gate.b.clone(),
            cell.forget_gate.w.clone(),
            cell.forget_gate.b.clone(),
            cell.cell_gate.w.clone(),
            cell.cell_gate.b.clone(),
            cell.output_gate.w.clone(),
            cell.output_gate.b.clone(),
            rand_vec(&mut r, 4),
            rand_vec(&mut r, 6),
            rand_vec(&mut r, 6),
        ];
        let report = grad_check_many(
            |tape, vars| {
                let bound = BoundLstm {
                    input_gate: BoundLinear { w: vars[0], b: vars[1] },
                    forget_gate: BoundLinear { w: vars[2], b: vars[3] },
                    cell_gate: BoundLinear { w: vars[4], b: vars[5] },
                    output_gate: BoundLinear { w: vars[6], b: vars[7] },
                };
                let state = LstmState { h: vars[9], c: vars[10] };
                let next = lstm_step(tape, &bound, state, vars[8])?;
                let both = tape.concat(&[next.h, next.c])?;
                tape.l2norm(both)
            },
            &tensors,
            EPS,
        )?;
        out.push(CheckOutcome { name: "lstm_cell", report });
    }

    // Attention scoring head.
    {
        let mut r = rng(107);
        let head = AttentionHead::<f64>::init(5, 5, &mut r);
        let tensors = vec![
            head.proj.clone(),
            head.score.clone(),
            rand_vec(&mut r, 5),
            rand_vec(&mut r, 5),
            rand_vec(&mut r, 5),
            rand_vec(&mut r, 3),
        ];
        let report = grad_check_many(
            |tape, vars| {
                let bound = BoundAttentionHead {
                    proj: vars[0],
                    score: vars[1],
                    leaky_slope: 0.2,
                };
                let w = gat_scores(tape, &bound, vars[2], &[vars[3], vars[4], vars[2]])?;
                let p = tape.mul(w, vars[5])?;
                tape.sum(p)
            },
            &tensors,
            EPS,
        )?;
        out.push(CheckOutcome { name: "attention_scores", report });
    }

    // MLP encoder.
    {
        let mut r = rng(109);
        let mlp = MlpEncoder::<f64>::init(&[6, 5, 3], &mut r);
        let tensors = vec![
            mlp.layers[0].w.clone(),
            mlp.layers[0].b.clone(),
            mlp.layers[1].w.clone(),
            mlp.layers[1].b.clone(),
            rand_vec(&mut r, 6),
        ];
        let report = grad_check_many(
            |tape, vars| {
                let bound = BoundMlp {
                    layers: vec![
                        BoundLinear { w: vars[0], b: vars[1] },
                        BoundLinear { w: vars[2], b: vars[3] },
                    ],
                    leaky_slope: 0.2,
                };
                let y = mlp_forward(tape, &bound, vars[4])?;
                tape.l2norm(y)
            },
            &tensors,
            EPS,
        )?;
        out.push(CheckOutcome { name: "mlp_encoder", report });
    }

    // Masked spatial aggregation over a 3-agent frame.
    {
        let mut r = rng(113);
        let head = AttentionHead::<f64>::init(4, 4, &mut r);
        let agents: Vec<AgentRecord> = (0..3)
            .map(|i| AgentRecord {
                frame_id: 0,
                agent_id: i + 1,
                x: 10.0 * i as f64,
                y: 3.0 * i as f64,
                lane_id: 1,
                in_influence_area: false,
                head_of_queue: false,
                maneuver: Maneuver::Straight,
                light_id: 0,
                light_state: LightState::Green,
                light_remaining: 1.0,
            })
            .collect();
        let mask = build_adjacency(
            &agents,
            &[(1.0, 0.0), (1.0, 0.2), (0.0, 0.0)],
            &SdgParams::default(),
        )
        .expect("adjacency builds");
        let tensors = vec![
            head.proj.clone(),
            head.score.clone(),
            rand_vec(&mut r, 4),
            rand_vec(&mut r, 4),
            rand_vec(&mut r, 4),
        ];
        let report = grad_check_many(
            |tape, vars| {
                let bound = BoundAttentionHead {
                    proj: vars[0],
                    score: vars[1],
                    leaky_slope: 0.2,
                };
                let agg = spatial_aggregate(tape, &vars[2..5], &mask, &bound)?;
                let flat = tape.concat(&agg)?;
                tape.l2norm(flat)
            },
            &tensors,
            EPS,
        )?;
        out.push(CheckOutcome { name: "spatial_aggregate", report });
    }

    // Behavior stage: light encode, fuse, two window updates.
    {
        let mut r = rng(127);
        let dim = 4;
        let mlp = MlpEncoder::<f64>::init(&[18, 6, dim], &mut r);
        let fuse_proj = Linear::<f64>::init(dim, 2 * dim, &mut r);
        let head = AttentionHead::<f64>::init(dim, dim, &mut r);
        let value = Linear::<f64>::init(dim, 2 * dim, &mut r);
        let records: Vec<AgentRecord> = (0..2)
            .map(|f| AgentRecord {
                frame_id: f,
                agent_id: 1,
                x: 0.0,
                y: 0.0,
                lane_id: 1,
                in_influence_area: f == 1,
                head_of_queue: f == 1,
                maneuver: Maneuver::Right,
                light_id: 0,
                light_state: LightState::Yellow,
                light_remaining: 2.5,
            })
            .collect();
        let feat = LightSequenceFeature::from_obs(&records);
        let tensors = vec![
            mlp.layers[0].w.clone(),
            mlp.layers[0].b.clone(),
            mlp.layers[1].w.clone(),
            mlp.layers[1].b.clone(),
            fuse_proj.w.clone(),
            fuse_proj.b.clone(),
            head.proj.clone(),
            head.score.clone(),
            value.w.clone(),
            value.b.clone(),
            rand_vec(&mut r, dim),
            rand_vec(&mut r, dim),
        ];
        let report = grad_check_many(
            |tape, vars| {
                let mlp = BoundMlp {
                    layers: vec![
                        BoundLinear { w: vars[0], b: vars[1] },
                        BoundLinear { w: vars[2], b: vars[3] },
                    ],
                    leaky_slope: 0.2,
                };
                let fuse_proj = BoundLinear { w: vars[4], b: vars[5] };
                let head = BoundAttentionHead {
                    proj: vars[6],
                    score: vars[7],
                    leaky_slope: 0.2,
                };
                let value = BoundLinear { w: vars[8], b: vars[9] };
                let code = encode_lights(tape, &mlp, &feat)?;
                let mut hist = BehaviorHistory::new(2);
                let f0 = fuse(tape, &fuse_proj, vars[10], code)?;
                let _ = temporal_update(tape, &head, &value, f0, &mut hist)?;
                let f1 = fuse(tape, &fuse_proj, vars[11], code)?;
                let outv = temporal_update(tape, &head, &value, f1, &mut hist)?;
                tape.l2norm(outv)
            },
            &tensors,
            EPS,
        )?;
        out.push(CheckOutcome { name: "behavior_stage", report });
    }

    // End-to-end miniature model: best-of-2 objective plus the adversarial
    // term, differentiated through every generator and discriminator weight.
    {
        let hp = HyperParams::miniature();
        let params = ModelParams::<f64>::init(&hp, 131);
        let window = miniature_window(&hp);
        let inputs =
            prepare_inputs(&window, &hp, &SdgParams::default()).expect("miniature inputs prepare");
        let mut r = rng(137);
        let noises: Vec<TensorData<f64>> =
            (0..2).map(|_| rand_vec(&mut r, hp.noise_dim)).collect();

        let named: Vec<TensorData<f64>> =
            params.named().iter().map(|(_, t)| (*t).clone()).collect();
        let n_gen = params.gen_named().len();
        let report = grad_check_many(
            |tape, vars| {
                let binding = params.binding_from_vars(&vars[..n_gen], &vars[n_gen..]);
                let samples: Vec<_> = noises
                    .iter()
                    .map(|noise| rollout(tape, &binding.gen, &inputs, &hp, noise))
                    .collect::<Result<_, _>>()
                    .map_err(unwrap_tensor_err)?;
                let (variety, chosen) =
                    variety_loss(tape, &samples, &inputs, VarietyMode::SequenceNorm)
                        .map_err(unwrap_tensor_err)?;
                let mut adv_terms = Vec::new();
                for (a, &k) in chosen.iter().enumerate() {
                    let fake =
                        full_disp_sequence(tape, &inputs, a, Some(&samples[k].pred_disp[a]));
                    let (_, logit) =
                        discriminate(tape, &binding, &hp, &fake, &inputs.light_feats[a])
                            .map_err(unwrap_tensor_err)?;
                    let sp = tape.softplus(logit)?;
                    adv_terms.push(tape.sub(sp, logit)?);
                }
                let stacked = tape.concat(&adv_terms)?;
                let adv = tape.mean(stacked)?;
                tape.add(variety, adv)
            },
            &named,
            EPS,
        )?;
        out.push(CheckOutcome { name: "end_to_end_miniature", report });
    }

    Ok(out)
}
