//! File formats: OFF/OBJ meshes, PGM images, checkpoints, hierarchy
//! sidecars, and the flat key=value experiment config.

pub mod checkpoint;
pub mod config;
pub mod hierarchy;
pub mod off;
pub mod pgm;

use std::path::Path;

use crate::error::{Error, Result};

/// Write-temp-then-rename so interrupted runs never leave partial files.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}
