//! Persistence: binary trajectory and checkpoint formats, JSON configs,
//! CSV emission for metrics, and native SVG plotting.

pub mod checkpoint;
pub mod config;
pub mod csv;
pub mod svg;
pub mod trajectory_file;

use std::path::Path;

use crate::error::Result;

/// Write via a temp file in the same directory, then rename into place, so
/// readers never observe a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
