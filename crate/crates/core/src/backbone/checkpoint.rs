//! Named-tensor checkpoint container.
//!
//! Layout (little-endian): magic `TVFW`, `u32` format version, `u32` header
//! length and a JSON header, `u32` record count, then per record a `u32`
//! name length, the UTF-8 name, `u32` rank, `u32` dims and `f32` data in
//! row-major order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::BackboneConfig;
use super::weights::BackboneWeights;
use crate::error::{Result, TvfError};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"TVFW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: BackboneConfig,
    mode: String,
}

/// Weights plus the control mode they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub weights: BackboneWeights,
    pub mode: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            config: self.weights.config.clone(),
            mode: self.mode.clone(),
        })
        .map_err(|e| TvfError::Format {
            what: "checkpoint header",
            detail: e.to_string(),
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.weights.num_params());
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, header.len() as u32);
        out.extend_from_slice(&header);
        put_u32(&mut out, self.weights.tensors.len() as u32);
        for t in &self.weights.tensors {
            put_u32(&mut out, t.name.len() as u32);
            out.extend_from_slice(t.name.as_bytes());
            put_u32(&mut out, t.shape.len() as u32);
            for &d in &t.shape {
                put_u32(&mut out, d as u32);
            }
            for &v in &t.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("format version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let hlen = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| bad(e.to_string()))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(nlen)?)
                .map_err(|e| bad(e.to_string()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| bad("tensor size overflow".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        header.config.validate()?;
        let weights = BackboneWeights {
            config: header.config,
            tensors,
        };
        weights.check_layout()?;
        weights.check_finite()?;
        Ok(Checkpoint {
            weights,
            mode: header.mode,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| TvfError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| TvfError::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn bad(detail: String) -> TvfError {
    TvfError::Format {
        what: "checkpoint",
        detail,
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Rounds every weight to the nearest `f32`, the precision a checkpoint keeps.
pub fn round_to_storage(weights: &mut BackboneWeights) {
    for t in &mut weights.tensors {
        for v in &mut t.data {
            *v = *v as f32 as f64;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::weights::init_weights;

    #[test]
    fn bit_exact_round_trip() {
        let mut w = init_weights(7, 0.01).unwrap();
        round_to_storage(&mut w);
        let ck = Checkpoint { weights: w, mode: "time_varying".into() };
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupt_files_rejected() {
        let ck = Checkpoint { weights: init_weights(0, 0.0).unwrap(), mode: "static_peq".into() };
        let bytes = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
