//! Checkpoints: the parameter blob + manifest alongside a JSON description
//! of the hyperparameters and graph geometry.

use super::{HyperParams, ModelError, ModelParams};
use crate::interaction::SdgParams;
use crate::nn::serialize::{load_params, save_params};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const PARAMS_STEM: &str = "params";
pub const META_FILE: &str = "hyperparams.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub hp: HyperParams,
    pub sdg: SdgParams,
}

pub fn save_checkpoint<S: Scalar>(
    dir: &Path,
    params: &ModelParams<S>,
    sdg: &SdgParams,
) -> Result<(), ModelError> {
    let named = params.named();
    save_params(dir, PARAMS_STEM, &named).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let meta = CheckpointMeta {
        hp: params.hp.clone(),
        sdg: sdg.clone(),
    };
    fs::write(
        dir.join(META_FILE),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )
    .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(dir: &Path) -> Result<(ModelParams<S>, SdgParams), ModelError> {
    let meta: CheckpointMeta = serde_json::from_str(
        &fs::read_to_string(dir.join(META_FILE))
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?,
    )
    .map_err(|e| ModelError::Checkpoint(e.to_string()))?;

    let mut params = ModelParams::<S>::init(&meta.hp, 0);
    let loaded =
        load_params::<S>(dir, PARAMS_STEM).map_err(|e| ModelError::Checkpoint(e.to_string()))?;

    let expected: Vec<String> = params.named().iter().map(|(n, _)| n.clone()).collect();
    let got: Vec<&String> = loaded.iter().map(|(n, _)| n).collect();
    if expected.len() != got.len() || expected.iter().zip(&got).any(|(e, g)| &e != g) {
        return Err(ModelError::Checkpoint(format!(
            "parameter names do not match the configuration: expected {expected:?}, got {got:?}"
        )));
    }

    let n_gen = params.gen_named().len();
    {
        let mut slots = params.gen_tensors_mut();
        for (slot, (name, tensor)) in slots.iter_mut().zip(loaded[..n_gen].iter()) {
            if slot.shape() != tensor.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "{name}: shape {:?} does not match expected {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            **slot = tensor.clone();
        }
    }
    {
        let mut slots = params.disc_tensors_mut();
        for (slot, (name, tensor)) in slots.iter_mut().zip(loaded[n_gen..].iter()) {
            if slot.shape() != tensor.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "{name}: shape {:?} does not match expected {:?}",
                    tensor.shape(),
                    slot.shape()
                )));
            }
            **slot = tensor.clone();
        }
    }
    Ok((params, meta.sdg))
}
