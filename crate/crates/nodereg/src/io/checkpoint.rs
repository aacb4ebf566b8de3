//! Model checkpoints.
//!
//! Layout (little-endian):
//!   magic "NJCK" | version u16 | state dim u32 | hidden u32 |
//!   parameters as f64 in fixed order W1,b1,W2,b2,W3,b3 |
//!   trailing UTF-8 JSON config snapshot (rest of file).

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::MlpParams;
use crate::numerics::vector::{Matrix, Vector};
use crate::train::ExperimentConfig;

const MAGIC: &[u8; 4] = b"NJCK";
const VERSION: u16 = 1;

pub fn encode(p: &MlpParams, cfg: &ExperimentConfig) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(p.state_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(p.hidden() as u32).to_le_bytes());
    for tensor in p.slices() {
        for &x in tensor {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let json = serde_json::to_string_pretty(cfg)
        .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
    buf.extend_from_slice(json.as_bytes());
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<(MlpParams, ExperimentConfig)> {
    if bytes.len() < 14 {
        return Err(Error::Format("checkpoint truncated header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint format version {version}"
        )));
    }
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let count = n * h + h + h * h + h + h * n + n;
    let payload_end = 14 + count * 8;
    if bytes.len() < payload_end {
        return Err(Error::Format(format!(
            "checkpoint payload shorter than {count} parameters"
        )));
    }
    let mut vals = Vec::with_capacity(count);
    for i in 0..count {
        let off = 14 + i * 8;
        vals.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
    }
    let mut cursor = 0usize;
    let mut take = |len: usize| -> Vec<f64> {
        let out = vals[cursor..cursor + len].to_vec();
        cursor += len;
        out
    };
    let params = MlpParams {
        w1: Matrix::new(h, n, take(h * n))?,
        b1: Vector::from(take(h)),
        w2: Matrix::new(h, h, take(h * h))?,
        b2: Vector::from(take(h)),
        w3: Matrix::new(n, h, take(n * h))?,
        b3: Vector::from(take(n)),
    };
    let json = std::str::from_utf8(&bytes[payload_end..])
        .map_err(|e| Error::Format(format!("checkpoint config not UTF-8: {e}")))?;
    let cfg: ExperimentConfig = serde_json::from_str(json)
        .map_err(|e| Error::Format(format!("checkpoint config JSON: {e}")))?;
    Ok((params, cfg))
}

pub fn write_checkpoint(path: &Path, p: &MlpParams, cfg: &ExperimentConfig) -> Result<()> {
    super::write_atomic(path, &encode(p, cfg)?)
}

pub fn read_checkpoint(path: &Path) -> Result<(MlpParams, ExperimentConfig)> {
    decode(&std::fs::read(path)?)
}
