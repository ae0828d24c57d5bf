//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//! magic `KWSPOT1`, u32 format version, u32 config length + JSON config,
//! u32 tensor count, then per tensor: u32 name length + UTF-8 name, u32 rank,
//! u32 per dimension, and the values as f32.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::params::Parameters;
use super::ModelConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"KWSPOT1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(params: &Parameters, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config = serde_json::to_vec(&params.config).map_err(|e| Error::invalid(e.to_string()))?;
    buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
    buf.extend_from_slice(&config);
    let tensors = params.tensors();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in &tensors {
        buf.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.data {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Parameters> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |message: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let truncated = || fail("file is truncated");
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(CHECKPOINT_MAGIC.len()).ok_or_else(truncated)? != CHECKPOINT_MAGIC {
        return Err(fail("bad magic"));
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != CHECKPOINT_VERSION {
        return Err(fail(&format!("unsupported format version {version}")));
    }
    let len = r.u32().ok_or_else(truncated)? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(len).ok_or_else(truncated)?)
        .map_err(|e| fail(&format!("config: {e}")))?;
    config.validate().map_err(|e| fail(&e.to_string()))?;
    let mut params = Parameters::zeros(&config);
    let count = r.u32().ok_or_else(truncated)? as usize;
    {
        let mut slots = params.tensors_mut();
        if count != slots.len() {
            return Err(fail(&format!(
                "expected {} tensors, found {count}",
                slots.len()
            )));
        }
        for slot in slots.iter_mut() {
            let name_len = r.u32().ok_or_else(truncated)? as usize;
            let name = std::str::from_utf8(r.take(name_len).ok_or_else(truncated)?)
                .map_err(|_| fail("tensor name is not UTF-8"))?;
            if name != slot.name {
                return Err(fail(&format!(
                    "expected tensor {}, found {name}",
                    slot.name
                )));
            }
            let rank = r.u32().ok_or_else(truncated)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32().ok_or_else(truncated)? as usize);
            }
            if shape != slot.shape {
                return Err(fail(&format!(
                    "tensor {name} has shape {shape:?}, expected {:?}",
                    slot.shape
                )));
            }
            let raw = r.take(4 * slot.data.len()).ok_or_else(truncated)?;
            for (x, b) in slot.data.iter_mut().zip(raw.chunks_exact(4)) {
                *x = f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64;
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(fail("trailing bytes after the last tensor"));
    }
    if !params.all_finite() {
        return Err(fail("non-finite parameter values"));
    }
    Ok(params)
}

/// Loads a checkpoint and rejects it unless it was saved for `expected`.
pub fn load_checkpoint_expecting(
    path: impl AsRef<Path>,
    expected: &ModelConfig,
) -> Result<Parameters> {
    let path = path.as_ref();
    let params = load_checkpoint(path)?;
    if &params.config != expected {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            message: "model configuration differs from the requested one".into(),
        });
    }
    Ok(params)
}
