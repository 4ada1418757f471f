use super::*;
use crate::data::{LightState, Maneuver};
use crate::nn::{AttentionHead, BoundAttentionHead, BoundLinear, BoundMlp, Linear, LstmCell, MlpEncoder};
use crate::tensor::grad_check_many;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(ls: LightState, lt: f64, pa: bool, f: bool, mb: Maneuver) -> AgentRecord {
    AgentRecord {
        frame_id: 0,
        agent_id: 1,
        x: 10.0,
        y: 20.0,
        lane_id: 1,
        in_influence_area: pa,
        head_of_queue: f && pa,
        maneuver: mb,
        light_id: 0,
        light_state: ls,
        light_remaining: lt,
    }
}

fn sample_records(n: usize) -> Vec<AgentRecord> {
    (0..n)
        .map(|i| {
            record(
                [LightState::Red, LightState::Green, LightState::Yellow][i % 3],
                i as f64 + 0.5,
                i % 2 == 0,
                i % 4 == 0,
                [Maneuver::Straight, Maneuver::Left, Maneuver::Right][i % 3],
            )
        })
        .collect()
}

#[test]
fn light_feature_layout_is_nine_per_frame() {
    let records = sample_records(8);
    let feat = LightSequenceFeature::from_obs(&records);
    assert_eq!(feat.len(), 8 * LIGHT_FEATURES_PER_FRAME);
    assert_eq!(feat.frames(), 8);
    // Frame 0: red, lt 0.5, pa=1, f=1, straight.
    assert_eq!(feat.frame_slice(0), &[1.0, 0.0, 0.0, 0.5 / 60.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
    // Frame 1: green, lt 1.5, pa=0, f=0, left.
    assert_eq!(feat.frame_slice(1), &[0.0, 1.0, 0.0, 1.5 / 60.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn zero_weight_encoder_returns_final_bias() {
    let mut mlp = MlpEncoder::<f64>::init(&[72, 16, 32], &mut ChaCha8Rng::seed_from_u64(1));
    for layer in &mut mlp.layers {
        layer.w.data_mut().fill(0.0);
        layer.b.data_mut().fill(0.0);
    }
    mlp.layers[1].b.data_mut()[3] = 0.25;
    let feat = LightSequenceFeature::from_obs(&sample_records(8));
    let mut tape = Tape::new();
    let bound = mlp.bind(&mut tape, false);
    let out = encode_lights(&mut tape, &bound, &feat).unwrap();
    let mut expect = vec![0.0; 32];
    expect[3] = 0.25;
    assert_eq!(tape.value(out).data(), &expect[..]);
}

#[test]
fn zeroed_first_frame_columns_ignore_frame_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mlp = MlpEncoder::<f64>::init(&[72, 16, 32], &mut rng);
    // Zero the first layer's columns for frame 0's features.
    let in_dim = 72;
    for row in 0..16 {
        for col in 0..LIGHT_FEATURES_PER_FRAME {
            mlp.layers[0].w.data_mut()[row * in_dim + col] = 0.0;
        }
    }
    let a = sample_records(8);
    let mut b = a.clone();
    b[0] = record(LightState::Yellow, 99.0, true, false, Maneuver::Right);

    let encode = |records: &[AgentRecord]| {
        let feat = LightSequenceFeature::from_obs(records);
        let mut tape = Tape::new();
        let bound = mlp.bind(&mut tape, false);
        let out = encode_lights(&mut tape, &bound, &feat).unwrap();
        tape.value(out).data().to_vec()
    };
    assert_eq!(encode(&a), encode(&b));
}

#[test]
fn encoder_matches_layer_by_layer_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mlp = MlpEncoder::<f64>::init(&[18, 8, 4], &mut rng);
    let feat = LightSequenceFeature::from_obs(&sample_records(2));
    assert_eq!(feat.len(), 18);

    let forward_layer = |layer: &Linear<f64>, x: &[f64]| -> Vec<f64> {
        (0..layer.out_dim())
            .map(|i| {
                let mut acc = layer.b.data()[i];
                for j in 0..layer.in_dim() {
                    acc += layer.w.data()[i * layer.in_dim() + j] * x[j];
                }
                acc
            })
            .collect()
    };
    let h: Vec<f64> = forward_layer(&mlp.layers[0], feat.values())
        .into_iter()
        .map(|v| if v >= 0.0 { v } else { 0.2 * v })
        .collect();
    let expect = forward_layer(&mlp.layers[1], &h);

    let mut tape = Tape::new();
    let bound = mlp.bind(&mut tape, false);
    let out = encode_lights(&mut tape, &bound, &feat).unwrap();
    for (got, want) in tape.value(out).data().iter().zip(&expect) {
        assert!((got - want).abs() < 1e-13);
    }
}

#[test]
fn encoder_rejects_length_mismatch() {
    let mlp = MlpEncoder::<f64>::init(&[72, 8], &mut ChaCha8Rng::seed_from_u64(4));
    let feat = LightSequenceFeature::from_obs(&sample_records(3)); // 27 features
    let mut tape = Tape::new();
    let bound = mlp.bind(&mut tape, false);
    assert!(encode_lights(&mut tape, &bound, &feat).is_err());
}

#[test]
fn lstm_light_encoder_runs_over_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cell = LstmCell::<f64>::init(LIGHT_FEATURES_PER_FRAME, 16, &mut rng);
    let feat = LightSequenceFeature::from_obs(&sample_records(8));
    let mut tape = Tape::new();
    let bound = cell.bind(&mut tape, false);
    let out = encode_lights_lstm(&mut tape, &bound, 16, &feat).unwrap();
    assert_eq!(tape.value(out).shape(), &[16]);
    assert!(tape.value(out).data().iter().all(|v| v.is_finite()));
}

#[test]
fn fuse_of_zeros_with_zero_bias_is_zero() {
    let mut proj = Linear::<f64>::init(16, 16, &mut ChaCha8Rng::seed_from_u64(6));
    proj.b.data_mut().fill(0.0);
    let mut tape = Tape::new();
    let bound = proj.bind(&mut tape, false);
    let z = tape.constant(&TensorData::zeros(vec![8]));
    let out = fuse(&mut tape, &bound, z, z).unwrap();
    assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
}

#[test]
fn fuse_is_order_sensitive() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let proj = Linear::<f64>::init(6, 6, &mut rng);
    let a = TensorData::vector(vec![1.0, -2.0, 0.5]);
    let b = TensorData::vector(vec![0.25, 3.0, -1.0]);
    let run = |x: &TensorData<f64>, y: &TensorData<f64>| {
        let mut tape = Tape::new();
        let bound = proj.bind(&mut tape, false);
        let (xv, yv) = (tape.constant(x), tape.constant(y));
        let out = fuse(&mut tape, &bound, xv, yv).unwrap();
        tape.value(out).data().to_vec()
    };
    assert_ne!(run(&a, &b), run(&b, &a));
}

#[test]
fn fuse_matches_concat_then_matvec_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let proj = Linear::<f64>::init(5, 8, &mut rng);
    let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let cat: Vec<f64> = a.iter().chain(&b).copied().collect();
    let expect: Vec<f64> = (0..5)
        .map(|i| {
            let mut acc = proj.b.data()[i];
            for j in 0..8 {
                acc += proj.w.data()[i * 8 + j] * cat[j];
            }
            acc
        })
        .collect();

    let mut tape = Tape::new();
    let bound = proj.bind(&mut tape, false);
    let av = tape.constant(&TensorData::vector(a));
    let bv = tape.constant(&TensorData::vector(b));
    let out = fuse(&mut tape, &bound, av, bv).unwrap();
    for (got, want) in tape.value(out).data().iter().zip(&expect) {
        assert!((got - want).abs() < 1e-14);
    }
}

struct Stage {
    head: AttentionHead<f64>,
    value: Linear<f64>,
}

impl Stage {
    fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Stage {
            head: AttentionHead::init(dim, dim, &mut rng),
            value: Linear::init(dim, 2 * dim, &mut rng),
        }
    }
}

#[test]
fn empty_history_returns_value_of_current_exactly() {
    let stage = Stage::new(6, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cur = TensorData::vector((0..6).map(|_| rng.gen_range(-1.0..1.0)).collect());

    let mut tape = Tape::new();
    let head = stage.head.bind(&mut tape, false);
    let value = stage.value.bind(&mut tape, false);
    let cv = tape.constant(&cur);
    let mut hist = BehaviorHistory::new(3);
    let out = temporal_update(&mut tape, &head, &value, cv, &mut hist).unwrap();

    // value(current) by direct forward: singleton softmax weight is 1.
    let mut expect_tape = Tape::<f64>::new();
    let vb = stage.value.bind(&mut expect_tape, false);
    let cve = expect_tape.constant(&cur);
    let pair = expect_tape.concat(&[cve, cve]).unwrap();
    let expect = vb.forward(&mut expect_tape, pair).unwrap();
    assert_eq!(tape.value(out).data(), expect_tape.value(expect).data());
    assert_eq!(hist.len(), 1);
}

#[test]
fn identical_history_entry_yields_the_shared_value() {
    let stage = Stage::new(5, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cur = TensorData::vector((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect());

    let mut tape = Tape::new();
    let head = stage.head.bind(&mut tape, false);
    let value = stage.value.bind(&mut tape, false);
    let cv = tape.constant(&cur);
    let mut hist = BehaviorHistory::new(4);
    hist.push(cv); // one entry, bit-identical to the current state

    let out = temporal_update(&mut tape, &head, &value, cv, &mut hist).unwrap();

    let pair = tape.concat(&[cv, cv]).unwrap();
    let shared = value.forward(&mut tape, pair).unwrap();
    for (got, want) in tape.value(out).data().iter().zip(tape.value(shared).data()) {
        assert!((got - want).abs() < 1e-15);
    }
}

/// Scalar re-computation of the whole unrolled window for a synthetic
/// sequence of external states.
#[test]
fn five_step_window_matches_scalar_oracle() {
    let dim = 4;
    let k = 3;
    let stage = Stage::new(dim, 13);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let inputs: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();

    // Production path.
    let mut tape = Tape::new();
    let head = stage.head.bind(&mut tape, false);
    let value = stage.value.bind(&mut tape, false);
    let mut hist = BehaviorHistory::new(k);
    let mut got = Vec::new();
    for x in &inputs {
        let cv = tape.constant(&TensorData::vector(x.clone()));
        let out = temporal_update(&mut tape, &head, &value, cv, &mut hist).unwrap();
        got.push(tape.value(out).data().to_vec());
    }

    // Scalar oracle.
    let matvec = |m: &TensorData<f64>, v: &[f64]| -> Vec<f64> {
        let (rows, cols) = (m.shape()[0], m.shape()[1]);
        (0..rows)
            .map(|i| (0..cols).map(|j| m.data()[i * cols + j] * v[j]).sum())
            .collect()
    };
    let value_of = |entry: &[f64], cur: &[f64]| -> Vec<f64> {
        let cat: Vec<f64> = entry.iter().chain(cur).copied().collect();
        let mut out = matvec(&stage.value.w, &cat);
        for (o, b) in out.iter_mut().zip(stage.value.b.data()) {
            *o += b;
        }
        out
    };
    let mut window: Vec<Vec<f64>> = Vec::new();
    for (t, cur) in inputs.iter().enumerate() {
        let keys: Vec<Vec<f64>> = window.iter().cloned().chain([cur.clone()]).collect();
        let wq = matvec(&stage.head.proj, cur);
        let scores: Vec<f64> = keys
            .iter()
            .map(|key| {
                let wk = matvec(&stage.head.proj, key);
                let mut s = 0.0;
                for (i, &b) in stage.head.score.data().iter().enumerate() {
                    s += b * if i < dim { wq[i] } else { wk[i - dim] };
                }
                if s >= 0.0 {
                    s
                } else {
                    0.2 * s
                }
            })
            .collect();
        let m = scores.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = scores.iter().map(|&s| (s - m).exp()).collect();
        let denom: f64 = exps.iter().sum();
        let mut expect = vec![0.0; dim];
        for (slot, key) in keys.iter().enumerate() {
            let val = value_of(key, cur);
            for (e, v) in expect.iter_mut().zip(&val) {
                *e += exps[slot] / denom * v;
            }
        }
        for (g, w) in got[t].iter().zip(&expect) {
            assert!((g - w).abs() < 1e-12, "step {t}: {g} vs {w}");
        }
        window.push(expect);
        if window.len() > k {
            window.remove(0);
        }
    }
}

#[test]
fn evicted_entries_cannot_influence_the_output() {
    let stage = Stage::new(4, 15);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let k = 2;
    let states: Vec<TensorData<f64>> = (0..4)
        .map(|_| TensorData::vector((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let cur = TensorData::vector((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());

    let run = |first: &TensorData<f64>| {
        let mut tape = Tape::new();
        let head = stage.head.bind(&mut tape, false);
        let value = stage.value.bind(&mut tape, false);
        let mut hist = BehaviorHistory::new(k);
        hist.push(tape.constant(first));
        for s in &states[1..] {
            hist.push(tape.constant(s));
        }
        let cv = tape.constant(&cur);
        let out = temporal_update(&mut tape, &head, &value, cv, &mut hist).unwrap();
        tape.value(out).data().to_vec()
    };

    let base = run(&states[0]);
    let mut evicted = states[0].clone();
    for v in evicted.data_mut() {
        *v = rng.gen_range(-50.0..50.0);
    }
    let perturbed = run(&evicted);
    for (a, b) in base.iter().zip(&perturbed) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn attention_weights_sum_to_one_per_update() {
    let dim = 5;
    let stage = Stage::new(dim, 17);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut tape = Tape::new();
    let head = stage.head.bind(&mut tape, false);
    let mut hist = BehaviorHistory::new(3);
    for _ in 0..5 {
        let cur = tape.constant(&TensorData::vector(
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        ));
        let keys: Vec<Var> = hist.entries().chain([cur]).collect();
        let w = gat_scores(&mut tape, &head, cur, &keys).unwrap();
        let total: f64 = tape.value(w).data().iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
        hist.push(cur);
    }
}

#[test]
fn non_adjacent_past_state_reaches_the_current_output() {
    // With k >= 2, perturbing the state two steps back while holding the
    // last step fixed must change the output: the window attends directly,
    // unlike a chain recurrence.
    let stage = Stage::new(4, 19);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..10 {
        let older = TensorData::vector((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let newer = TensorData::vector((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let cur = TensorData::vector((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());

        let run = |t_minus_2: &TensorData<f64>| {
            let mut tape = Tape::new();
            let head = stage.head.bind(&mut tape, false);
            let value = stage.value.bind(&mut tape, false);
            let mut hist = BehaviorHistory::new(3);
            hist.push(tape.constant(t_minus_2));
            hist.push(tape.constant(&newer));
            let cv = tape.constant(&cur);
            let out = temporal_update(&mut tape, &head, &value, cv, &mut hist).unwrap();
            tape.value(out).data().to_vec()
        };
        let base = run(&older);
        let mut shifted = older.clone();
        shifted.data_mut()[0] += 1.0;
        assert_ne!(base, run(&shifted));
    }
}

#[test]
fn behavior_stage_passes_end_to_end_gradcheck() {
    // encode lights -> fuse with a spatial state -> two window updates.
    let dim = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mlp = MlpEncoder::<f64>::init(&[18, 6, dim], &mut rng);
    let fuse_proj = Linear::<f64>::init(dim, 2 * dim, &mut rng);
    let head = AttentionHead::<f64>::init(dim, dim, &mut rng);
    let value = Linear::<f64>::init(dim, 2 * dim, &mut rng);
    let feat = LightSequenceFeature::from_obs(&sample_records(2));
    let spatial0 = TensorData::vector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let spatial1 = TensorData::vector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect());

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
        spatial0,
        spatial1,
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

            let lh = encode_lights(tape, &mlp, &feat)?;
            let mut hist = BehaviorHistory::new(2);
            let f0 = fuse(tape, &fuse_proj, vars[10], lh)?;
            let _ = temporal_update(tape, &head, &value, f0, &mut hist)?;
            let f1 = fuse(tape, &fuse_proj, vars[11], lh)?;
            let out = temporal_update(tape, &head, &value, f1, &mut hist)?;
            tape.l2norm(out)
        },
        &tensors,
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

