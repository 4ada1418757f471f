//! Adversarial best-of-K training with Adam.

use super::rollout::{
    draw_noise, full_disp_sequence, prepare_inputs, rollout, variety_loss, RolloutInputs,
    VarietyMode,
};
use super::{ModelError, ModelParams};
use crate::data::TrajectoryWindow;
use crate::interaction::SdgParams;
use crate::metrics;
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorData};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

/// Adam moment state aligned with a fixed parameter order.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
    step: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            m: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![S::zero(); n]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One update: first/second moment tracking with bias correction.
    pub fn step(&mut self, params: &mut [&mut TensorData<S>], grads: &[Vec<S>], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let b1 = S::of_f64(self.beta1);
        let b2 = S::of_f64(self.beta2);
        let eps = S::of_f64(self.eps);
        let lr = S::of_f64(lr);
        let bc1 = S::one() - b1.powi(t);
        let bc2 = S::one() - b2.powi(t);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            debug_assert_eq!(p.numel(), g.len());
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (S::one() - b1) * g[i];
                v[i] = b2 * v[i] + (S::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let delta = lr * m_hat / (v_hat.sqrt() + eps);
                p.data_mut()[i] = p.data_mut()[i] - delta;
            }
        }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    /// Samples per generator step; defaults to the model's K.
    pub k_variety: Option<usize>,
    /// Weight of the adversarial term; forced to 0 with the discriminator off.
    pub lambda_adv: f64,
    pub variety: VarietyMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            seed: 0,
            k_variety: None,
            lambda_adv: 1.0,
            variety: VarietyMode::SequenceNorm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub gen_loss: f64,
    pub disc_loss: f64,
    pub train_ade: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,gen_loss,disc_loss,train_ade\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.gen_loss, e.disc_loss, e.train_ade);
        }
        out
    }
}

fn mean_grads<S: Scalar>(acc: &mut [Vec<S>], scale: f64) {
    let s = S::of_f64(scale);
    for g in acc {
        for v in g {
            *v *= s;
        }
    }
}

fn dump_window(w: &TrajectoryWindow) -> String {
    format!(
        "window start_frame={} agents={:?} first_positions={:?}",
        w.start_frame,
        w.agent_ids,
        w.obs.iter().map(|rs| rs[0].position()).collect::<Vec<_>>()
    )
}

/// Trains in place: per minibatch, a generator step minimizing the best-of-K
/// distance plus the adversarial term, then a discriminator step minimizing
/// binary cross-entropy on real/fake sequences. Deterministic for a fixed
/// seed.
pub fn train<S: Scalar>(
    windows: &[TrajectoryWindow],
    params: &mut ModelParams<S>,
    sdg: &SdgParams,
    cfg: &TrainConfig,
) -> Result<TrainLog, ModelError> {
    train_hooked(windows, params, sdg, cfg, |_, _| Ok(()))
}

/// Held-out model selection policy for [`train_selected`].
#[derive(Debug, Clone, Copy)]
pub struct Selection {
    /// Score the validation split every this many epochs.
    pub every: usize,
    /// Best-of-K samples per validation window.
    pub k: usize,
    pub seed: u64,
}

/// Training with held-out model selection: the validation split is scored
/// periodically and the best-scoring parameters are restored at the end.
/// Returns the log and the selected validation ADE.
pub fn train_selected<S: Scalar>(
    windows: &[TrajectoryWindow],
    val_windows: &[TrajectoryWindow],
    params: &mut ModelParams<S>,
    sdg: &SdgParams,
    cfg: &TrainConfig,
    selection: Selection,
) -> Result<(TrainLog, f64), ModelError> {
    assert!(selection.every > 0 && selection.k > 0);
    let mut best: Option<(f64, ModelParams<S>)> = None;
    let log = train_hooked(windows, params, sdg, cfg, |epoch, current| {
        if (epoch + 1) % selection.every == 0 || epoch + 1 == cfg.epochs {
            let report = crate::metrics::evaluate(
                val_windows,
                current,
                sdg,
                selection.k,
                selection.seed,
                "selection",
            )
            .map_err(|e| match e {
                crate::metrics::MetricsError::Model(m) => m,
                other => ModelError::Checkpoint(other.to_string()),
            })?;
            if best.as_ref().is_none_or(|(b, _)| report.ade < *b) {
                best = Some((report.ade, current.clone()));
            }
        }
        Ok(())
    })?;
    let (val_ade, chosen) = best.expect("selection ran at least once");
    *params = chosen;
    Ok((log, val_ade))
}

fn train_hooked<S: Scalar>(
    windows: &[TrajectoryWindow],
    params: &mut ModelParams<S>,
    sdg: &SdgParams,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &ModelParams<S>) -> Result<(), ModelError>,
) -> Result<TrainLog, ModelError> {
    if windows.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let hp = params.hp.clone();
    let k_variety = cfg.k_variety.unwrap_or(hp.k_best).max(1);
    let lambda_adv = if params.disc.is_some() { cfg.lambda_adv } else { 0.0 };

    let inputs: Vec<RolloutInputs> = windows
        .iter()
        .map(|w| prepare_inputs(w, &hp, sdg))
        .collect::<Result<_, _>>()?;

    let gen_sizes: Vec<usize> = params.gen_named().iter().map(|(_, t)| t.numel()).collect();
    let disc_sizes: Vec<usize> = params.disc_named().iter().map(|(_, t)| t.numel()).collect();
    let mut adam_gen = AdamState::<S>::new(&gen_sizes);
    let mut adam_disc = AdamState::<S>::new(&disc_sizes);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut log = TrainLog::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_gen_loss = 0.0;
        let mut epoch_disc_loss = 0.0;
        let mut epoch_ade = 0.0;
        let mut epoch_windows = 0usize;

        for (batch_idx, batch) in order.chunks(hp.batch).enumerate() {
            // Generator step.
            let mut gen_acc: Vec<Vec<S>> = gen_sizes.iter().map(|&n| vec![S::zero(); n]).collect();
            for &wi in batch {
                let win_inputs = &inputs[wi];
                let mut tape = Tape::new();
                let binding = params.bind(&mut tape, true, false);
                let samples: Vec<_> = (0..k_variety)
                    .map(|_| {
                        let noise = draw_noise::<S>(&mut rng, hp.noise_dim);
                        rollout(&mut tape, &binding.gen, win_inputs, &hp, &noise)
                    })
                    .collect::<Result<_, _>>()?;
                let (variety, chosen) = variety_loss(&mut tape, &samples, win_inputs, cfg.variety)?;

                let loss = if lambda_adv > 0.0 {
                    // Push the chosen sample toward the discriminator's
                    // "real" side: BCE(y=1 | logit) = softplus(logit) - logit.
                    let n = win_inputs.rel.agent_ids.len();
                    let mut adv_terms = Vec::with_capacity(n);
                    for a in 0..n {
                        let fake = full_disp_sequence(
                            &mut tape,
                            win_inputs,
                            a,
                            Some(&samples[chosen[a]].pred_disp[a]),
                        );
                        let (_, logit) = super::rollout::discriminate(
                            &mut tape,
                            &binding,
                            &hp,
                            &fake,
                            &win_inputs.light_feats[a],
                        )?;
                        let sp = tape.softplus(logit)?;
                        adv_terms.push(tape.sub(sp, logit)?);
                    }
                    let stacked = tape.concat(&adv_terms)?;
                    let adv = tape.mean(stacked)?;
                    let weighted = tape.scalar_mul(adv, S::of_f64(lambda_adv))?;
                    tape.add(variety, weighted)?
                } else {
                    variety
                };

                let loss_val = tape.value(loss).data()[0].as_f64();
                if !loss_val.is_finite() {
                    return Err(ModelError::NanLoss {
                        epoch,
                        batch: batch_idx,
                        dump: dump_window(&windows[wi]),
                    });
                }
                epoch_gen_loss += loss_val;

                // Training ADE of the chosen samples.
                let gt = &windows[wi].target;
                let mut window_ade = 0.0;
                for (a, &k) in chosen.iter().enumerate() {
                    let pred =
                        samples[k].positions(&tape, &win_inputs.last_obs_pos);
                    window_ade += metrics::ade(&pred[a], &gt[a]).expect("equal lengths");
                }
                epoch_ade += window_ade / gt.len() as f64;
                epoch_windows += 1;

                tape.backward(loss)?;
                for (slot, var) in binding.gen_vars.iter().enumerate() {
                    if let Some(g) = tape.grad(*var) {
                        for (acc, &gv) in gen_acc[slot].iter_mut().zip(g) {
                            *acc += gv;
                        }
                    }
                }
            }
            mean_grads(&mut gen_acc, 1.0 / batch.len() as f64);
            adam_gen.step(&mut params.gen_tensors_mut(), &gen_acc, hp.lr);

            // Discriminator step.
            if params.disc.is_some() {
                let mut disc_acc: Vec<Vec<S>> =
                    disc_sizes.iter().map(|&n| vec![S::zero(); n]).collect();
                for &wi in batch {
                    let win_inputs = &inputs[wi];
                    let mut tape = Tape::new();
                    let binding = params.bind(&mut tape, false, true);
                    let noise = draw_noise::<S>(&mut rng, hp.noise_dim);
                    let fake_out = rollout(&mut tape, &binding.gen, win_inputs, &hp, &noise)?;

                    let n = win_inputs.rel.agent_ids.len();
                    let mut terms = Vec::with_capacity(2 * n);
                    for a in 0..n {
                        let real = full_disp_sequence(&mut tape, win_inputs, a, None);
                        let (_, real_logit) = super::rollout::discriminate(
                            &mut tape,
                            &binding,
                            &hp,
                            &real,
                            &win_inputs.light_feats[a],
                        )?;
                        // BCE(y=1) = softplus(z) - z
                        let sp = tape.softplus(real_logit)?;
                        terms.push(tape.sub(sp, real_logit)?);

                        let fake = full_disp_sequence(
                            &mut tape,
                            win_inputs,
                            a,
                            Some(&fake_out.pred_disp[a]),
                        );
                        let (_, fake_logit) = super::rollout::discriminate(
                            &mut tape,
                            &binding,
                            &hp,
                            &fake,
                            &win_inputs.light_feats[a],
                        )?;
                        // BCE(y=0) = softplus(z)
                        terms.push(tape.softplus(fake_logit)?);
                    }
                    let stacked = tape.concat(&terms)?;
                    let loss = tape.mean(stacked)?;
                    let loss_val = tape.value(loss).data()[0].as_f64();
                    if !loss_val.is_finite() {
                        return Err(ModelError::NanLoss {
                            epoch,
                            batch: batch_idx,
                            dump: dump_window(&windows[wi]),
                        });
                    }
                    epoch_disc_loss += loss_val;

                    tape.backward(loss)?;
                    for (slot, var) in binding.disc_vars.iter().enumerate() {
                        if let Some(g) = tape.grad(*var) {
                            for (acc, &gv) in disc_acc[slot].iter_mut().zip(g) {
                                *acc += gv;
                            }
                        }
                    }
                }
                mean_grads(&mut disc_acc, 1.0 / batch.len() as f64);
                adam_disc.step(&mut params.disc_tensors_mut(), &disc_acc, hp.lr);
            }
        }

        let n = epoch_windows.max(1) as f64;
        log.epochs.push(EpochStats {
            epoch,
            gen_loss: epoch_gen_loss / n,
            disc_loss: epoch_disc_loss / n,
            train_ade: epoch_ade / n,
        });
        on_epoch(epoch, params)?;
    }
    Ok(log)
}
