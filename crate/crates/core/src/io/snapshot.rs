//! Binary snapshots of strip fields.
//!
//! Layout, all little-endian: the magic `MSKS`, `u32 nx`, `u32 nz`, then
//! `nx·nz` `f64` values in row-major order (row `j = 0` is the bottom).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::one_phase::{StripField, StripGrid};

pub const MAGIC: &[u8; 4] = b"MSKS";

pub fn encode(field: &StripField) -> Vec<u8> {
    let g = field.grid;
    let mut out = Vec::with_capacity(12 + 8 * field.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(g.nx as u32).to_le_bytes());
    out.extend_from_slice(&(g.nz as u32).to_le_bytes());
    for v in &field.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a snapshot onto `grid`, whose dimensions must match the header.
pub fn decode(bytes: &[u8], grid: StripGrid) -> Result<StripField> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a strip snapshot".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (nx, nz) = (word(4), word(8));
    if (nx, nz) != (grid.nx, grid.nz) {
        return Err(Error::Format(format!(
            "snapshot is {nx}×{nz}, grid is {}×{}",
            grid.nx, grid.nz
        )));
    }
    let body = &bytes[12..];
    if body.len() != 8 * nx * nz {
        return Err(Error::Format(format!("expected {} bytes of data, got {}", 8 * nx * nz, body.len())));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    StripField::new(grid, values)
}

pub fn write_snapshot(path: &Path, field: &StripField) -> Result<()> {
    fs::write(path, encode(field)).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path, grid: StripGrid) -> Result<StripField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, grid)
}
