//! Checkpoint files.
//!
//! Both formats store the flat sequence `N, L, t, V_0[0..4], ..., V_{N-1}[0..4]`
//! (cell-major): little-endian `f64` for the binary format and a JSON array
//! of numbers otherwise.

use std::path::Path;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use super::StateField1D;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointFormat {
    Binary,
    Json,
}

impl CheckpointFormat {
    /// `.json` selects JSON, anything else binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => CheckpointFormat::Json,
            _ => CheckpointFormat::Binary,
        }
    }
}

fn flatten(field: &StateField1D) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 + 4 * field.n());
    out.extend([field.n() as f64, field.length, field.t]);
    for v in &field.v {
        out.extend(v.iter());
    }
    out
}

fn unflatten(data: &[f64]) -> Result<StateField1D> {
    let bad = |m: &str| Error::Config(format!("malformed checkpoint: {m}"));
    if data.len() < 3 {
        return Err(bad("missing header"));
    }
    let n = data[0];
    if !(n >= 0.0 && n.fract() == 0.0) || data.len() != 3 + 4 * n as usize {
        return Err(bad("cell count does not match payload"));
    }
    let v = data[3..].chunks_exact(4).map(Vector4::from_column_slice).collect();
    StateField1D::new(data[1], data[2], v)
}

pub fn write_checkpoint(path: &Path, field: &StateField1D, format: CheckpointFormat) -> Result<()> {
    let flat = flatten(field);
    match format {
        CheckpointFormat::Binary => {
            let bytes: Vec<u8> = flat.iter().flat_map(|x| x.to_le_bytes()).collect();
            std::fs::write(path, bytes)?;
        }
        CheckpointFormat::Json => std::fs::write(path, serde_json::to_string(&flat)?)?,
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path, format: CheckpointFormat) -> Result<StateField1D> {
    let flat: Vec<f64> = match format {
        CheckpointFormat::Binary => {
            let bytes = std::fs::read(path)?;
            if bytes.len() % 8 != 0 {
                return Err(Error::Config("malformed checkpoint: truncated value".into()));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        }
        CheckpointFormat::Json => serde_json::from_str(&std::fs::read_to_string(path)?)?,
    };
    unflatten(&flat)
}
