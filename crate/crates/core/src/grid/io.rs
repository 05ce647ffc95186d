//! Field snapshot formats.
//!
//! Binary layout, all little-endian:
//!
//! | offset | type  | content                 |
//! |--------|-------|-------------------------|
//! | 0      | `u32` | dimension `d`           |
//! | 4      | `u32` | points per axis `n`     |
//! | 8      | `f64` | half width `L`          |
//! | 16     | `f64` × `n^d` | values, row-major (x fastest) |
//!
//! CSV has a header row `x,u` (1-d) or `x,y,u` (2-d) and prints every number
//! with 17 significant digits.

use std::io::{Read, Write};

use super::{PeriodicGrid, ScalarField};
use crate::error::{Error, Result};

pub const FIELD_HEADER_BYTES: usize = 16;

pub fn write_field_binary<W: Write>(f: &ScalarField, mut w: W) -> Result<()> {
    let g = f.grid();
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    w.write_all(&(g.n() as u32).to_le_bytes())?;
    w.write_all(&g.half_width().to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * g.len());
    for v in f.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field_binary<R: Read>(mut r: R) -> Result<ScalarField> {
    let mut head = [0u8; FIELD_HEADER_BYTES];
    r.read_exact(&mut head)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    let dim = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let l = f64::from_le_bytes(head[8..16].try_into().unwrap());
    let grid = PeriodicGrid::new(dim, l, n).map_err(|e| Error::Format(e.to_string()))?;
    let mut payload = vec![0u8; 8 * grid.len()];
    r.read_exact(&mut payload)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::new(grid, values)
}

pub fn write_field_csv<W: Write>(f: &ScalarField, mut w: W) -> Result<()> {
    let g = f.grid();
    if g.dim() == 1 {
        writeln!(w, "x,u")?;
    } else {
        writeln!(w, "x,y,u")?;
    }
    for (i, v) in f.values().iter().enumerate() {
        let p = g.point(i);
        if g.dim() == 1 {
            writeln!(w, "{:.16e},{:.16e}", p[0], v)?;
        } else {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", p[0], p[1], v)?;
        }
    }
    Ok(())
}
