//! Binary field container and its plain-text provenance sidecar.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic     4 bytes  "HMFD"
//! version   u32      currently 1
//! dim       u32
//! flags     u32      bit 0: periodic
//! axes      dim x u64  cells per axis
//! h         f64
//! lambda    f64
//! Lambda    f64
//! data      cells x d(d+1)/2 x f64, canonical layout
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{tri_len, CoefficientField, EllipticityBounds, FieldError, GridSpec};

pub const CONTAINER_MAGIC: &[u8; 4] = b"HMFD";
pub const CONTAINER_VERSION: u32 = 1;

const FLAG_PERIODIC: u32 = 1;

pub fn write_field<W: Write>(mut w: W, field: &CoefficientField) -> Result<(), FieldError> {
    let grid = field.grid();
    w.write_all(CONTAINER_MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    let flags = if grid.is_periodic() { FLAG_PERIODIC } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    for &n in grid.cells() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&grid.h().to_le_bytes())?;
    w.write_all(&field.bounds().lambda().to_le_bytes())?;
    w.write_all(&field.bounds().big_lambda().to_le_bytes())?;
    let mut buf = Vec::with_capacity(field.raw().len() * 8);
    for v in field.raw() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, FieldError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, FieldError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, FieldError> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub fn read_field<R: Read>(mut r: R) -> Result<CoefficientField, FieldError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CONTAINER_MAGIC {
        return Err(FieldError::Container(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != CONTAINER_VERSION {
        return Err(FieldError::Container(format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    if !(1..=3).contains(&dim) {
        return Err(FieldError::Container(format!("bad dimension {dim}")));
    }
    let flags = read_u32(&mut r)?;
    let cells = (0..dim)
        .map(|_| read_u64(&mut r).map(|n| n as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let h = read_f64(&mut r)?;
    let lambda = read_f64(&mut r)?;
    let big_lambda = read_f64(&mut r)?;
    let grid = GridSpec::new(cells, h, flags & FLAG_PERIODIC != 0)?;
    let bounds = EllipticityBounds::new(lambda, big_lambda)?;
    let count = grid.num_cells() * tri_len(dim);
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(FieldError::Container("trailing bytes after cell data".into()));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    CoefficientField::from_raw(grid, data, bounds)
}

/// Writes `key = value` lines.
pub fn write_provenance(path: &Path, entries: &[(String, String)]) -> Result<(), FieldError> {
    let mut out = String::new();
    for (k, v) in entries {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_provenance(path: &Path) -> Result<Vec<(String, String)>, FieldError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once(" = ")
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| FieldError::Container(format!("malformed provenance line {l:?}")))
        })
        .collect()
}
