//! Binary checkpoint: magic, format version, a JSON header with the layer
//! sizes and input scaler, then each tensor as a `u64` length followed by
//! little-endian `f64` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LstmConfig, LstmModel, Params};
use crate::error::{NilmError, Result};
use crate::preprocess::ScalerParams;

const MAGIC: &[u8; 8] = b"NILMLSTM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: LstmConfig,
    input_scaler: Option<ScalerParams>,
}

pub fn save_checkpoint(model: &LstmModel, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + model.params.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let header = serde_json::to_vec(&Header { config: model.config, input_scaler: model.input_scaler.clone() }).map_err(|e| NilmError::Format(e.to_string()))?;
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for t in model.params.tensors() {
        buf.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    // Write next to the target and rename so readers never see a partial file.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf).map_err(|e| NilmError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| NilmError::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| NilmError::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<LstmModel> {
    let bytes = fs::read(path).map_err(|e| NilmError::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    let magic = r.take(8).map_err(|_| NilmError::Format(format!("{} is not an LSTM checkpoint", path.display())))?;
    if magic != MAGIC {
        return Err(NilmError::Format(format!("{} is not an LSTM checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(NilmError::VersionMismatch { path: path.into(), expected: CHECKPOINT_VERSION.to_string(), found: version.to_string() });
    }
    let hlen = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| NilmError::Format(format!("checkpoint header: {e}")))?;
    header.config.validate()?;
    let mut params = Params::zeros(&header.config);
    for t in params.tensors_mut() {
        let n = r.u64()? as usize;
        if n != t.len() {
            return Err(NilmError::ShapeMismatch(format!("checkpoint tensor has {n} values, config implies {}", t.len())));
        }
        let raw = r.take(n * 8)?;
        for (v, c) in t.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
    }
    if r.pos != bytes.len() {
        return Err(NilmError::Format("trailing bytes after checkpoint tensors".into()));
    }
    Ok(LstmModel { config: header.config, params, input_scaler: header.input_scaler })
}
