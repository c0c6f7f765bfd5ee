//! The `AGF1` binary field format.
//!
//! Layout (all little-endian):
//! bytes 0–3 magic `AGF1`; `u32 nx`; `u32 ny`; `f64 half_length_x`;
//! `f64 half_length_y`; `f64 s`; then `nx * ny` `f64` samples, `y`-major.
//! Round-trips are bit-exact.

use crate::grid::{Field, Grid};
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"AGF1";

/// Writes a field together with the fractional order it was computed at.
pub fn write_field(path: impl AsRef<Path>, field: &Field, s: f64) -> Result<()> {
    let grid = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(grid.nx as u32).to_le_bytes())?;
    w.write_all(&(grid.ny as u32).to_le_bytes())?;
    w.write_all(&grid.half_length_x.to_le_bytes())?;
    w.write_all(&grid.half_length_y.to_le_bytes())?;
    w.write_all(&s.to_le_bytes())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field and the stored fractional order.
pub fn read_field(path: impl AsRef<Path>) -> Result<(Field, f64)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let nx = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let ny = u32::from_le_bytes(b4) as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let lx = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let ly = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let s = f64::from_le_bytes(b8);

    let grid = Grid::new(lx, ly, nx, ny)
        .map_err(|e| Error::Format(format!("header describes an invalid grid: {e}")))?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after samples".into()));
    }
    let field = Field::from_values(&grid, values)
        .map_err(|e| Error::Format(format!("invalid samples: {e}")))?;
    Ok((field, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid::new(7.5, 3.25, 24, 16).unwrap();
        let u = synth::random_smooth_field(&g, 9);
        let dir = std::env::temp_dir().join("anisonls_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.agf1");
        write_field(&path, &u, 0.625).unwrap();
        let (back, s) = read_field(&path).unwrap();
        assert_eq!(s.to_bits(), 0.625f64.to_bits());
        assert_eq!(back.grid(), u.grid());
        for (a, b) in back.values().iter().zip(u.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = std::env::temp_dir().join("anisonls_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.agf1");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_field(&path), Err(Error::Format(_))));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn rejects_truncated_payload() {
        let g = Grid::new(2.0, 2.0, 8, 8).unwrap();
        let u = synth::gaussian(&g, 1.0, 0.0, 0.0, 0.5, 0.5);
        let dir = std::env::temp_dir().join("anisonls_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trunc.agf1");
        write_field(&path, &u, 0.75).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(read_field(&path).is_err());
        std::fs::remove_file(&path).unwrap();
    }
}
