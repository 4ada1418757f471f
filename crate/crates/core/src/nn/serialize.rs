//! Parameter serialization: a flat little-endian binary blob of f64 values
//! plus a JSON manifest of (name, shape, element offset) records.
//!
//! Values are widened to f64 on save regardless of the run's scalar type, so
//! save/load round-trips are bit-exact for both f32 and f64 models.

use crate::scalar::Scalar;
use crate::tensor::TensorData;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the blob, counted in f64 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub total_elements: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SerializeError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("blob holds {got} elements, manifest expects {expected}")]
    BlobSize { got: usize, expected: usize },
    #[error("entry {name}: shape {shape:?} does not fit at offset {offset}")]
    BadEntry {
        name: String,
        shape: Vec<usize>,
        offset: usize,
    },
}

/// Writes named tensors as `<stem>.bin` + `<stem>.manifest.json`.
pub fn save_params<S: Scalar>(
    dir: &Path,
    stem: &str,
    named: &[(String, &TensorData<S>)],
) -> Result<Manifest, SerializeError> {
    let mut entries = Vec::with_capacity(named.len());
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    for (name, tensor) in named {
        entries.push(ManifestEntry {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            offset,
        });
        for v in tensor.data() {
            blob.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        offset += tensor.numel();
    }
    let manifest = Manifest {
        entries,
        total_elements: offset,
    };

    fs::create_dir_all(dir)?;
    let mut bin = fs::File::create(dir.join(format!("{stem}.bin")))?;
    bin.write_all(&blob)?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(format!("{stem}.manifest.json")), json)?;
    Ok(manifest)
}

/// Reads back a parameter blob. Returns tensors in manifest order.
pub fn load_params<S: Scalar>(
    dir: &Path,
    stem: &str,
) -> Result<Vec<(String, TensorData<S>)>, SerializeError> {
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.manifest.json")))?)?;
    let mut blob = Vec::new();
    fs::File::open(dir.join(format!("{stem}.bin")))?.read_to_end(&mut blob)?;
    if blob.len() != manifest.total_elements * 8 {
        return Err(SerializeError::BlobSize {
            got: blob.len() / 8,
            expected: manifest.total_elements,
        });
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut out = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let numel: usize = entry.shape.iter().product();
        let end = entry.offset + numel;
        if end > values.len() || numel == 0 {
            return Err(SerializeError::BadEntry {
                name: entry.name.clone(),
                shape: entry.shape.clone(),
                offset: entry.offset,
            });
        }
        let t = TensorData::from_f64_slice(entry.shape.clone(), &values[entry.offset..end])
            .map_err(|_| SerializeError::BadEntry {
                name: entry.name.clone(),
                shape: entry.shape.clone(),
                offset: entry.offset,
            })?;
        out.push((entry.name.clone(), t));
    }
    Ok(out)
}
