//! Binary trajectory files.
//!
//! Layout (little-endian):
//!   magic "NJRT" | version u16 | system tag u8 | dim u32 | n_states u32 |
//!   dt f64 | t0 f64 | payload: n_states·dim f64, state-major.

use std::path::Path;

use crate::dynamics::SystemId;
use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::numerics::vector::Vector;

const MAGIC: &[u8; 4] = b"NJRT";
const VERSION: u16 = 1;

pub fn encode(traj: &Trajectory) -> Vec<u8> {
    let dim = traj.dim();
    let n_states = traj.states.len();
    let mut buf = Vec::with_capacity(31 + n_states * dim * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(traj.system.tag_byte());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(n_states as u32).to_le_bytes());
    buf.extend_from_slice(&traj.dt.to_le_bytes());
    buf.extend_from_slice(&traj.t0.to_le_bytes());
    for s in &traj.states {
        for &x in s.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

pub fn decode(bytes: &[u8]) -> Result<Trajectory> {
    if bytes.len() < 31 {
        return Err(Error::Format("trajectory file truncated header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad trajectory magic".into()));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported trajectory format version {version}"
        )));
    }
    let system = SystemId::from_tag_byte(bytes[6])?;
    let dim = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let n_states = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let dt = f64::from_le_bytes(bytes[15..23].try_into().unwrap());
    let t0 = f64::from_le_bytes(bytes[23..31].try_into().unwrap());
    let payload = &bytes[31..];
    if payload.len() != n_states * dim * 8 {
        return Err(Error::Format(format!(
            "trajectory payload length {} != {}·{}·8",
            payload.len(),
            n_states,
            dim
        )));
    }
    let mut states = Vec::with_capacity(n_states);
    for i in 0..n_states {
        let mut v = Vec::with_capacity(dim);
        for j in 0..dim {
            let off = (i * dim + j) * 8;
            v.push(f64::from_le_bytes(payload[off..off + 8].try_into().unwrap()));
        }
        states.push(Vector::from(v));
    }
    Trajectory::new(states, dt, t0, system)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    super::write_atomic(path, &encode(traj))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    decode(&std::fs::read(path)?)
}
