//! Headerless little-endian scalar files.

use std::fs;
use std::io::Write;
use std::path::Path;

use mrc_core::Volume;

use crate::error::{usage, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn from_width(w: u8) -> Result<Self> {
        match w {
            4 => Ok(Dtype::F32),
            8 => Ok(Dtype::F64),
            _ => Err(mrc_core::Error::Format(format!("unsupported scalar width {w}")).into()),
        }
    }
}

pub fn decode_values(bytes: &[u8], dtype: Dtype) -> Vec<f64> {
    match dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    }
}

pub fn encode_values(values: &[f64], dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * dtype.width());
    for &v in values {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: &Path, dims: [usize; 3], dtype: Dtype) -> Result<Volume> {
    let bytes = read_file(path)?;
    let n: usize = dims.iter().product();
    if bytes.len() != n * dtype.width() {
        usage!(
            "{}: {} bytes, expected {} for {dims:?} {dtype:?}",
            path.display(),
            bytes.len(),
            n * dtype.width()
        );
    }
    Ok(Volume::new(dims, decode_values(&bytes, dtype))?)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Parses `NXxNYxNZ` or `NX,NY,NZ`.
pub fn parse_dims(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(['x', ',']).collect();
    if parts.len() != 3 {
        return Err(format!("expected three dimensions, got {s:?}"));
    }
    let mut dims = [0; 3];
    for (d, p) in dims.iter_mut().zip(parts) {
        *d = p.trim().parse().map_err(|_| format!("bad dimension {p:?}"))?;
        if *d == 0 {
            return Err("dimensions must be positive".into());
        }
    }
    Ok(dims)
}
