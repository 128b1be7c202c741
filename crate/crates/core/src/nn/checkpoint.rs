//! Checkpoint layout: magic `TMCK`, little-endian u64 header length, JSON
//! header, then every parameter, every first moment and every second moment
//! in header order as little-endian f64.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelState, NetworkConfig, Param};
use super::tape::Tensor;
use super::NnError;

const MAGIC: &[u8; 4] = b"TMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: NetworkConfig,
    step: u64,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

pub fn write_checkpoint(state: &ModelState, mut w: impl Write) -> Result<(), NnError> {
    let header = Header {
        version: CHECKPOINT_VERSION,
        config: state.config.clone(),
        step: state.step,
        tensors: state
            .params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| bad(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let tensors = state
        .params
        .iter()
        .map(|p| &p.value)
        .chain(&state.moment1)
        .chain(&state.moment2);
    let mut buf = Vec::new();
    for t in tensors {
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<ModelState, NnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| bad("truncated header"))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("malformed header: {e}")))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "version mismatch: file {} expected {CHECKPOINT_VERSION}",
            header.version
        )));
    }
    header.config.validate()?;

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let total: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if payload.len() != 3 * total * 8 {
        return Err(bad(format!(
            "shape mismatch: expected {} bytes of tensor data, found {}",
            3 * total * 8,
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut next = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), values.by_ref().take(n).collect())
    };
    let params = header
        .tensors
        .iter()
        .map(|t| Param {
            name: t.name.clone(),
            value: next(&t.shape),
        })
        .collect();
    let moment1 = header.tensors.iter().map(|t| next(&t.shape)).collect();
    let moment2 = header.tensors.iter().map(|t| next(&t.shape)).collect();
    let state = ModelState {
        config: header.config,
        params,
        moment1,
        moment2,
        step: header.step,
    };
    state.check_shapes()?;
    Ok(state)
}

pub fn save_checkpoint(state: &ModelState, path: impl AsRef<Path>) -> Result<(), NnError> {
    let mut buf = Vec::new();
    write_checkpoint(state, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelState, NnError> {
    read_checkpoint(fs::File::open(path)?)
}
