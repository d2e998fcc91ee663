//! Block-wise 3D Lorenzo prediction.
//!
//! The array is cut into 4x4x4 blocks (partial at the high edges), visited
//! in linear block order. Inside a block every cell is predicted from its
//! reconstructed lower neighbours by inclusion-exclusion; neighbours outside
//! the block read as zero, so blocks never depend on each other.

use alloc::vec;
use alloc::vec::Vec;

use super::quantize::{QuantizedStream, DEFAULT_CODE_CAP};
use crate::error::Result;

pub const LORENZO_BLOCK: usize = 4;

/// Visits blocks and cells in codec order, calling `f(flat_index, pred)`
/// where `pred` is computed from `recon`.
fn for_each_cell(
    dims: [usize; 3],
    recon: &mut [f64],
    mut f: impl FnMut(usize, f64, &mut [f64]) -> Result<()>,
) -> Result<()> {
    let [nx, ny, nz] = dims;
    let b = LORENZO_BLOCK;
    let sx = 1;
    let sy = nx;
    let sz = nx * ny;
    for oz in (0..nz).step_by(b) {
        for oy in (0..ny).step_by(b) {
            for ox in (0..nx).step_by(b) {
                let (ex, ey, ez) = ((ox + b).min(nx), (oy + b).min(ny), (oz + b).min(nz));
                for z in oz..ez {
                    for y in oy..ey {
                        for x in ox..ex {
                            let i = x + nx * (y + ny * z);
                            let (hx, hy, hz) = (x > ox, y > oy, z > oz);
                            let at = |r: &[f64], ok: bool, off: usize| if ok { r[i - off] } else { 0.0 };
                            let pred = at(recon, hx, sx) + at(recon, hy, sy) + at(recon, hz, sz)
                                - at(recon, hx && hy, sx + sy)
                                - at(recon, hx && hz, sx + sz)
                                - at(recon, hy && hz, sy + sz)
                                + at(recon, hx && hy && hz, sx + sy + sz);
                            f(i, pred, recon)?;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

pub(super) fn encode(values: &[f64], dims: [usize; 3], eb: f64) -> Result<QuantizedStream> {
    let mut recon = vec![0.0; values.len()];
    let mut stream = QuantizedStream::with_capacity(DEFAULT_CODE_CAP, values.len());
    for_each_cell(dims, &mut recon, |i, pred, r| {
        r[i] = stream.push(pred, values[i], eb)?;
        Ok(())
    })?;
    Ok(stream)
}

pub(super) fn decode(stream: &QuantizedStream, dims: [usize; 3], eb: f64) -> Result<Vec<f64>> {
    let mut recon = vec![0.0; dims.iter().product()];
    let mut reader = stream.reader();
    for_each_cell(dims, &mut recon, |i, pred, r| {
        r[i] = reader.next(pred, eb)?;
        Ok(())
    })?;
    reader.finish()?;
    Ok(recon)
}
