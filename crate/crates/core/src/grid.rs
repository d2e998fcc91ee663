//! Dense volumes, block addressing and 2x resampling.
//!
//! Storage is x-fastest: the cell `(x, y, z)` lives at
//! `x + nx * (y + ny * z)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};

/// A dense 3D scalar field of `f64` values.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Volume {
    dims: [usize; 3],
    values: Vec<f64>,
    value_range: Option<(f64, f64)>,
}

impl Volume {
    /// Builds a volume, rejecting zero dimensions, a length mismatch and
    /// non-finite values.
    pub fn new(dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            bail!(Dimension, "dimensions must be positive, got {dims:?}");
        }
        let expected = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]));
        if expected != Some(values.len()) {
            bail!(
                Shape,
                "{} values do not fill a {}x{}x{} volume",
                values.len(),
                dims[0],
                dims[1],
                dims[2]
            );
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            bail!(Data, "non-finite value {} at index {i}", values[i]);
        }
        Ok(Self {
            dims,
            values,
            value_range: None,
        })
    }

    pub fn filled(dims: [usize; 3], value: f64) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, vec![value; n])
    }

    /// Samples `f(x, y, z)` on every cell.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    values.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, values)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        linear_index(self.dims, x, y, z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    /// Overwrites one cell. Non-finite values are rejected and any cached
    /// range is dropped.
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            bail!(Data, "non-finite value {value}");
        }
        let i = self.index(x, y, z);
        self.values[i] = value;
        self.value_range = None;
        Ok(())
    }

    /// Exact `(min, max)` over all cells, cached after the first call.
    pub fn value_range(&mut self) -> (f64, f64) {
        if let Some(r) = self.value_range {
            return r;
        }
        let r = min_max(&self.values);
        self.value_range = Some(r);
        r
    }

    /// Like [`Volume::value_range`] without touching the cache.
    pub fn compute_range(&self) -> (f64, f64) {
        self.value_range.unwrap_or_else(|| min_max(&self.values))
    }

    pub fn cached_range(&self) -> Option<(f64, f64)> {
        self.value_range
    }

    /// Copies the `b`-cube at block coordinate `c` out of the volume.
    pub fn extract_block(&self, c: BlockCoord, b: usize) -> Result<Vec<f64>> {
        self.check_block(c, b)?;
        let [ox, oy, oz] = c.origin(b);
        let mut out = Vec::with_capacity(b * b * b);
        for z in oz..oz + b {
            for y in oy..oy + b {
                let start = self.index(ox, y, z);
                out.extend_from_slice(&self.values[start..start + b]);
            }
        }
        Ok(out)
    }

    /// Writes a `b`-cube of values at block coordinate `c`.
    pub fn insert_block(&mut self, c: BlockCoord, b: usize, data: &[f64]) -> Result<()> {
        self.check_block(c, b)?;
        if data.len() != b * b * b {
            bail!(Shape, "block payload has {} values, expected {}", data.len(), b * b * b);
        }
        if data.iter().any(|v| !v.is_finite()) {
            bail!(Data, "non-finite value in block payload");
        }
        let [ox, oy, oz] = c.origin(b);
        for (row, chunk) in data.chunks_exact(b).enumerate() {
            let y = oy + row % b;
            let z = oz + row / b;
            let start = self.index(ox, y, z);
            self.values[start..start + b].copy_from_slice(chunk);
        }
        self.value_range = None;
        Ok(())
    }

    /// Copies an axis-aligned box `[origin, origin + size)` out of the volume.
    pub fn sub_volume(&self, origin: [usize; 3], size: [usize; 3]) -> Result<Volume> {
        for a in 0..3 {
            if size[a] == 0 || origin[a] + size[a] > self.dims[a] {
                bail!(
                    Bounds,
                    "box at {origin:?} of size {size:?} exceeds volume {:?}",
                    self.dims
                );
            }
        }
        let mut out = Vec::with_capacity(size.iter().product());
        for z in origin[2]..origin[2] + size[2] {
            for y in origin[1]..origin[1] + size[1] {
                let start = self.index(origin[0], y, z);
                out.extend_from_slice(&self.values[start..start + size[0]]);
            }
        }
        Ok(Volume {
            dims: size,
            values: out,
            value_range: None,
        })
    }

    fn check_block(&self, c: BlockCoord, b: usize) -> Result<()> {
        if b == 0 {
            bail!(Parameter, "block edge must be positive");
        }
        let [ox, oy, oz] = c.origin(b);
        if ox + b > self.dims[0] || oy + b > self.dims[1] || oz + b > self.dims[2] {
            bail!(
                Bounds,
                "block {c:?} of edge {b} exceeds volume {:?}",
                self.dims
            );
        }
        Ok(())
    }
}

#[inline]
pub fn linear_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

/// Inverse of [`linear_index`].
#[inline]
pub fn coords_of(dims: [usize; 3], i: usize) -> (usize, usize, usize) {
    let x = i % dims[0];
    let r = i / dims[0];
    (x, r % dims[1], r / dims[1])
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Position of a block in a block grid. Cell origin is `coord * edge`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockCoord {
    pub bx: usize,
    pub by: usize,
    pub bz: usize,
}

impl BlockCoord {
    pub const fn new(bx: usize, by: usize, bz: usize) -> Self {
        Self { bx, by, bz }
    }

    pub fn origin(self, edge: usize) -> [usize; 3] {
        [self.bx * edge, self.by * edge, self.bz * edge]
    }

    /// Sort key giving `(bz, by, bx)` ascending order.
    pub fn zyx(self) -> (usize, usize, usize) {
        (self.bz, self.by, self.bx)
    }

    /// Linear index within a block grid, x-fastest.
    pub fn linear(self, grid: [usize; 3]) -> usize {
        linear_index(grid, self.bx, self.by, self.bz)
    }

    pub fn from_linear(grid: [usize; 3], i: usize) -> Self {
        let (bx, by, bz) = coords_of(grid, i);
        Self { bx, by, bz }
    }
}

/// Checks the ROI block edge: a power of two no smaller than 8.
pub fn validate_block_edge(b: usize) -> Result<()> {
    if !b.is_power_of_two() || b < 8 {
        bail!(Parameter, "block edge must be a power of two >= 8, got {b}");
    }
    Ok(())
}

/// Number of `b`-blocks per axis, requiring exact divisibility.
pub fn block_grid(dims: [usize; 3], b: usize) -> Result<[usize; 3]> {
    if b == 0 || dims.iter().any(|d| d % b != 0) {
        bail!(Dimension, "dimensions {dims:?} are not divisible by block edge {b}");
    }
    Ok([dims[0] / b, dims[1] / b, dims[2] / b])
}

/// Exact `(min, max)` of the `b`-cube at `c`.
pub fn block_value_range(v: &Volume, c: BlockCoord, b: usize) -> Result<(f64, f64)> {
    v.check_block(c, b)?;
    let [ox, oy, oz] = c.origin(b);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for z in oz..oz + b {
        for y in oy..oy + b {
            let start = v.index(ox, y, z);
            for &value in &v.values[start..start + b] {
                lo = lo.min(value);
                hi = hi.max(value);
            }
        }
    }
    Ok((lo, hi))
}

/// Halves each dimension by averaging every 2x2x2 cell group.
pub fn downsample2x(v: &Volume) -> Result<Volume> {
    let [nx, ny, nz] = v.dims;
    if nx % 2 != 0 || ny % 2 != 0 || nz % 2 != 0 {
        bail!(Dimension, "downsampling needs even dimensions, got {:?}", v.dims);
    }
    let (hx, hy, hz) = (nx / 2, ny / 2, nz / 2);
    let mut out = Vec::with_capacity(hx * hy * hz);
    for z in 0..hz {
        for y in 0..hy {
            for x in 0..hx {
                // Pairwise order keeps the mean of equal values exact.
                let g = |dx, dy, dz| v.get(2 * x + dx, 2 * y + dy, 2 * z + dz);
                let sum = ((g(0, 0, 0) + g(1, 0, 0)) + (g(0, 1, 0) + g(1, 1, 0)))
                    + ((g(0, 0, 1) + g(1, 0, 1)) + (g(0, 1, 1) + g(1, 1, 1)));
                out.push(sum / 8.0);
            }
        }
    }
    Volume::new([hx, hy, hz], out)
}

/// Doubles each dimension by replicating every cell into its 2x2x2 children.
pub fn upsample2x(v: &Volume) -> Volume {
    upsample_by(v, 2)
}

/// Nearest-neighbour replication by an integer factor per axis.
pub fn upsample_by(v: &Volume, factor: usize) -> Volume {
    let [nx, ny, nz] = v.dims;
    let dims = [nx * factor, ny * factor, nz * factor];
    let mut out = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            let row = v.index(0, y / factor, z / factor);
            for x in 0..dims[0] {
                out.push(v.values[row + x / factor]);
            }
        }
    }
    Volume {
        dims,
        values: out,
        value_range: v.value_range,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(dims: [usize; 3]) -> Volume {
        Volume::from_fn(dims, |x, y, z| (x + y + z) as f64).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        assert!(matches!(
            Volume::new([2, 1, 1], vec![0.0, f64::NAN]),
            Err(crate::Error::Data(_))
        ));
        assert!(matches!(
            Volume::new([2, 2, 1], vec![0.0; 3]),
            Err(crate::Error::Shape(_))
        ));
        assert!(Volume::new([0, 2, 1], vec![]).is_err());
    }

    #[test]
    fn cached_range_matches_scan() {
        let mut v = Volume::from_fn([5, 4, 3], |x, y, z| x as f64 - 2.0 * y as f64 + z as f64).unwrap();
        let r = v.value_range();
        assert_eq!(v.cached_range(), Some(r));
        assert_eq!(r, min_max(v.values()));
        v.set(0, 0, 0, 100.0).unwrap();
        assert_eq!(v.cached_range(), None);
        assert_eq!(v.value_range().1, 100.0);
    }

    #[test]
    fn block_range_constant() {
        let v = Volume::filled([8, 8, 8], 3.0).unwrap();
        assert_eq!(block_value_range(&v, BlockCoord::new(0, 0, 0), 8).unwrap(), (3.0, 3.0));
    }

    #[test]
    fn block_range_sparse_values() {
        let mut v = Volume::filled([16, 8, 8], 0.0).unwrap();
        v.set(9, 1, 2, -1.0).unwrap();
        v.set(15, 7, 7, 5.0).unwrap();
        assert_eq!(block_value_range(&v, BlockCoord::new(1, 0, 0), 8).unwrap(), (-1.0, 5.0));
        assert_eq!(block_value_range(&v, BlockCoord::new(0, 0, 0), 8).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn block_range_ramp() {
        let v = ramp([8, 8, 8]);
        assert_eq!(block_value_range(&v, BlockCoord::new(0, 0, 0), 8).unwrap(), (0.0, 21.0));
    }

    #[test]
    fn block_range_out_of_bounds() {
        let v = ramp([8, 8, 8]);
        assert!(matches!(
            block_value_range(&v, BlockCoord::new(1, 0, 0), 8),
            Err(crate::Error::Bounds(_))
        ));
    }

    #[test]
    fn downsample_examples() {
        let c = Volume::filled([4, 4, 4], 7.0).unwrap();
        assert_eq!(downsample2x(&c).unwrap(), Volume::filled([2, 2, 2], 7.0).unwrap());

        let v = Volume::new([2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        assert_eq!(downsample2x(&v).unwrap().values(), &[3.5]);

        let r = Volume::from_fn([4, 4, 4], |x, _, _| x as f64).unwrap();
        let d = downsample2x(&r).unwrap();
        assert_eq!(d.dims(), [2, 2, 2]);
        for z in 0..2 {
            for y in 0..2 {
                assert_eq!(d.get(0, y, z), 0.5);
                assert_eq!(d.get(1, y, z), 2.5);
            }
        }
    }

    #[test]
    fn downsample_odd_dimension() {
        let v = Volume::filled([3, 2, 2], 1.0).unwrap();
        assert!(matches!(downsample2x(&v), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn upsample_examples() {
        let one = Volume::new([1, 1, 1], vec![5.0]).unwrap();
        assert_eq!(upsample2x(&one), Volume::filled([2, 2, 2], 5.0).unwrap());

        let v = Volume::new([2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let u = upsample2x(&v);
        assert_eq!(u.dims(), [4, 4, 4]);
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    assert_eq!(u.get(x, y, z), v.get(x / 2, y / 2, z / 2));
                }
            }
        }
    }

    #[test]
    fn block_extract_insert_round_trip() {
        let v = ramp([16, 8, 8]);
        let block = v.extract_block(BlockCoord::new(1, 0, 0), 8).unwrap();
        assert_eq!(block[0], 8.0);
        let mut w = Volume::filled([16, 8, 8], 0.0).unwrap();
        w.insert_block(BlockCoord::new(1, 0, 0), 8, &block).unwrap();
        assert_eq!(w.get(15, 7, 7), v.get(15, 7, 7));
        assert_eq!(w.get(7, 7, 7), 0.0);
    }

    #[test]
    fn validates_block_edges() {
        assert!(validate_block_edge(8).is_ok());
        assert!(validate_block_edge(64).is_ok());
        assert!(validate_block_edge(4).is_err());
        assert!(validate_block_edge(12).is_err());
        assert!(block_grid([16, 16, 24], 8).is_ok());
        assert!(block_grid([16, 16, 20], 8).is_err());
    }

    fn arb_volume() -> impl Strategy<Value = Volume> {
        (1usize..6, 1usize..6, 1usize..6).prop_flat_map(|(nx, ny, nz)| {
            proptest::collection::vec(-1e6f64..1e6, nx * ny * nz)
                .prop_map(move |vals| Volume::new([nx, ny, nz], vals).unwrap())
        })
    }

    proptest! {
        #[test]
        fn index_round_trip(nx in 1usize..20, ny in 1usize..20, nz in 1usize..20, seed in 0usize..10_000) {
            let dims = [nx, ny, nz];
            let i = seed % (nx * ny * nz);
            let (x, y, z) = coords_of(dims, i);
            prop_assert_eq!(linear_index(dims, x, y, z), i);
        }

        #[test]
        fn down_of_up_is_identity(v in arb_volume()) {
            let back = downsample2x(&upsample2x(&v)).unwrap();
            prop_assert_eq!(back.values(), v.values());
        }

        #[test]
        fn block_range_matches_scan(vals in proptest::collection::vec(-1e3f64..1e3, 16 * 8 * 8), bx in 0usize..2) {
            let v = Volume::new([16, 8, 8], vals).unwrap();
            let c = BlockCoord::new(bx, 0, 0);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for z in 0..8 { for y in 0..8 { for x in 0..8 {
                let val = v.get(bx * 8 + x, y, z);
                lo = lo.min(val);
                hi = hi.max(val);
            }}}
            prop_assert_eq!(block_value_range(&v, c, 8).unwrap(), (lo, hi));
        }
    }
}
