//! Displacement-error metrics and best-of-K evaluation reports.

use crate::data::TrajectoryWindow;
use crate::interaction::SdgParams;
use crate::model::{predict_k, ModelError, ModelParams};
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trajectory lengths differ: {pred} vs {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("empty trajectory")]
    Empty,
    #[error("evaluation needs a non-empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How per-step displacement errors are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum MetricMode {
    /// Euclidean distance per step (the convention used throughout).
    Euclidean,
    /// Squared distance per step, for sensitivity checks.
    Squared,
}

fn step_error(p: (f64, f64), g: (f64, f64), mode: MetricMode) -> f64 {
    let d2 = (p.0 - g.0).powi(2) + (p.1 - g.1).powi(2);
    match mode {
        MetricMode::Euclidean => d2.sqrt(),
        MetricMode::Squared => d2,
    }
}

/// Mean per-step error between a predicted and ground-truth trajectory.
pub fn ade_mode(
    pred: &[(f64, f64)],
    gt: &[(f64, f64)],
    mode: MetricMode,
) -> Result<f64, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: f64 = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| step_error(p, g, mode))
        .sum();
    Ok(total / pred.len() as f64)
}

pub fn ade(pred: &[(f64, f64)], gt: &[(f64, f64)]) -> Result<f64, MetricsError> {
    ade_mode(pred, gt, MetricMode::Euclidean)
}

/// Final-step error.
pub fn fde_mode(
    pred: &[(f64, f64)],
    gt: &[(f64, f64)],
    mode: MetricMode,
) -> Result<f64, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let (p, g) = match (pred.last(), gt.last()) {
        (Some(&p), Some(&g)) => (p, g),
        _ => return Err(MetricsError::Empty),
    };
    Ok(step_error(p, g, mode))
}

pub fn fde(pred: &[(f64, f64)], gt: &[(f64, f64)]) -> Result<f64, MetricsError> {
    fde_mode(pred, gt, MetricMode::Euclidean)
}

/// One agent in one window: the chosen sample's errors plus the
/// independently minimized FDE.
#[derive(Debug, Clone, Serialize)]
pub struct AgentReport {
    pub window_index: usize,
    pub start_frame: i64,
    pub agent_id: i64,
    /// Minimum ADE over the K samples.
    pub ade: f64,
    /// FDE of the sample that attained the minimum ADE.
    pub fde: f64,
    /// FDE minimized independently over the K samples.
    pub min_fde: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub ade: f64,
    pub fde: f64,
    pub min_fde: f64,
    pub k: usize,
    pub config_fingerprint: String,
    pub per_agent: Vec<AgentReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("window,start_frame,agent,ade,fde,min_fde\n");
        for r in &self.per_agent {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.window_index, r.start_frame, r.agent_id, r.ade, r.fde, r.min_fde
            );
        }
        out
    }
}

/// Best-of-K evaluation: per agent per window, the minimum-ADE sample's
/// errors (and the independent minimum FDE), averaged over all agents and
/// windows. Per-window sample seeds derive from `seed` and the window index,
/// so results do not depend on the worker count.
pub fn evaluate<S: Scalar>(
    windows: &[TrajectoryWindow],
    params: &ModelParams<S>,
    sdg: &SdgParams,
    k: usize,
    seed: u64,
    config_fingerprint: &str,
) -> Result<EvalReport, MetricsError> {
    if windows.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    if k == 0 {
        return Err(MetricsError::Model(ModelError::NoSamples));
    }

    let per_window: Vec<Result<Vec<AgentReport>, MetricsError>> = windows
        .par_iter()
        .enumerate()
        .map(|(wi, window)| {
            let samples = predict_k(
                window,
                params,
                sdg,
                k,
                seed.wrapping_add(wi as u64).wrapping_mul(0x9e3779b97f4a7c15),
            )?;
            let mut reports = Vec::with_capacity(window.num_agents());
            for (a, agent_id) in window.agent_ids.iter().enumerate() {
                let gt = &window.target[a];
                let mut best_ade = f64::INFINITY;
                let mut linked_fde = f64::INFINITY;
                let mut best_fde = f64::INFINITY;
                for sample in &samples {
                    let sample_ade = ade(&sample[a], gt)?;
                    let sample_fde = fde(&sample[a], gt)?;
                    if sample_ade < best_ade {
                        best_ade = sample_ade;
                        linked_fde = sample_fde;
                    }
                    best_fde = best_fde.min(sample_fde);
                }
                reports.push(AgentReport {
                    window_index: wi,
                    start_frame: window.start_frame,
                    agent_id: *agent_id,
                    ade: best_ade,
                    fde: linked_fde,
                    min_fde: best_fde,
                });
            }
            Ok(reports)
        })
        .collect();

    let mut per_agent = Vec::new();
    for r in per_window {
        per_agent.extend(r?);
    }
    let n = per_agent.len() as f64;
    Ok(EvalReport {
        ade: per_agent.iter().map(|r| r.ade).sum::<f64>() / n,
        fde: per_agent.iter().map(|r| r.fde).sum::<f64>() / n,
        min_fde: per_agent.iter().map(|r| r.min_fde).sum::<f64>() / n,
        k,
        config_fingerprint: config_fingerprint.to_string(),
        per_agent,
    })
}

/// Plot-ready trace of the minimum-ADE sample for every agent:
/// `window,agent,step,gt_x,gt_y,pred_x,pred_y`.
pub fn trace_csv<S: Scalar>(
    windows: &[TrajectoryWindow],
    params: &ModelParams<S>,
    sdg: &SdgParams,
    k: usize,
    seed: u64,
) -> Result<String, MetricsError> {
    let mut out = String::from("window,agent,step,gt_x,gt_y,pred_x,pred_y\n");
    for (wi, window) in windows.iter().enumerate() {
        let samples = predict_k(
            window,
            params,
            sdg,
            k,
            seed.wrapping_add(wi as u64).wrapping_mul(0x9e3779b97f4a7c15),
        )?;
        for (a, agent_id) in window.agent_ids.iter().enumerate() {
            let gt = &window.target[a];
            let best = samples
                .iter()
                .map(|s| ade(&s[a], gt).expect("lengths match"))
                .enumerate()
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .map(|(i, _)| i)
                .expect("k >= 1");
            for (t, (&g, &p)) in gt.iter().zip(&samples[best][a]).enumerate() {
                let _ = writeln!(
                    out,
                    "{wi},{agent_id},{t},{},{},{},{}",
                    g.0, g.1, p.0, p.1
                );
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
