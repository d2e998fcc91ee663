//! Unit blocks merged into a single compressible array.
//!
//! The linear merge concatenates blocks along z, so a level of `k` blocks
//! of edge `u` becomes a `u x u x (u k)` array. Padding appends one
//! linearly extrapolated layer at the high end of x and y, which gives the
//! interpolation predictor a right neighbour for every inner point of the
//! two short axes.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::grid::{linear_index, BlockCoord};

/// A cube of `u^3` values, x-fastest, tagged with its block coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitBlock {
    coord: BlockCoord,
    u: usize,
    data: Vec<f64>,
}

impl UnitBlock {
    pub fn new(coord: BlockCoord, u: usize, data: Vec<f64>) -> Result<Self> {
        if u == 0 || !u.is_power_of_two() {
            bail!(Parameter, "unit block edge must be a power of two, got {u}");
        }
        if data.len() != u * u * u {
            bail!(Shape, "unit block of edge {u} needs {} values, got {}", u * u * u, data.len());
        }
        Ok(Self { coord, u, data })
    }

    pub fn coord(&self) -> BlockCoord {
        self.coord
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Arrangement {
    /// Blocks concatenated along z.
    Linear,
    /// Blocks placed row-major into the most compact block grid.
    Stacked,
}

impl Arrangement {
    pub fn id(self) -> u8 {
        match self {
            Arrangement::Linear => 0,
            Arrangement::Stacked => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Arrangement::Linear),
            1 => Ok(Arrangement::Stacked),
            _ => bail!(Format, "unknown arrangement id {id}"),
        }
    }
}

/// Merged (and possibly padded) array plus the block order needed to undo
/// the merge.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedArray {
    dims: [usize; 3],
    values: Vec<f64>,
    order: Vec<BlockCoord>,
    padded: bool,
    u: usize,
    arrangement: Arrangement,
}

impl MergedArray {
    /// Reassembles a merged array from decoded parts, checking that the
    /// dimensions agree with the arrangement.
    pub fn from_parts(
        values: Vec<f64>,
        order: Vec<BlockCoord>,
        u: usize,
        arrangement: Arrangement,
        padded: bool,
    ) -> Result<Self> {
        if u == 0 || !u.is_power_of_two() {
            bail!(Parameter, "unit block edge must be a power of two, got {u}");
        }
        if order.is_empty() {
            bail!(Shape, "merged array needs at least one block");
        }
        let k = order.len();
        let dims = match (arrangement, padded) {
            (Arrangement::Linear, false) => [u, u, u * k],
            (Arrangement::Linear, true) => [u + 1, u + 1, u * k],
            (Arrangement::Stacked, false) => stack_grid(k).map(|g| g * u),
            (Arrangement::Stacked, true) => bail!(State, "stacked arrays are never padded"),
        };
        if values.len() != dims.iter().product::<usize>() {
            bail!(
                Shape,
                "{} values for merged dims {dims:?}",
                values.len()
            );
        }
        Ok(Self {
            dims,
            values,
            order,
            padded,
            u,
            arrangement,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn order(&self) -> &[BlockCoord] {
        &self.order
    }

    pub fn is_padded(&self) -> bool {
        self.padded
    }

    pub fn unit(&self) -> usize {
        self.u
    }

    pub fn arrangement(&self) -> Arrangement {
        self.arrangement
    }

    /// Same layout, new values (for example the output of a lossy round trip).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_parts(values, self.order.clone(), self.u, self.arrangement, self.padded)
    }
}

fn check_uniform(blocks: &[UnitBlock]) -> Result<usize> {
    let Some(first) = blocks.first() else {
        bail!(Shape, "cannot merge an empty block list");
    };
    let u = first.u;
    if let Some(b) = blocks.iter().find(|b| b.u != u) {
        bail!(Shape, "mixed unit sizes {u} and {}", b.u);
    }
    Ok(u)
}

/// Block `i` occupies the z-slab `[i u, (i + 1) u)`.
pub fn linear_merge(blocks: &[UnitBlock]) -> Result<MergedArray> {
    let u = check_uniform(blocks)?;
    let mut values = Vec::with_capacity(blocks.len() * u * u * u);
    for b in blocks {
        values.extend_from_slice(&b.data);
    }
    Ok(MergedArray {
        dims: [u, u, u * blocks.len()],
        values,
        order: blocks.iter().map(|b| b.coord).collect(),
        padded: false,
        u,
        arrangement: Arrangement::Linear,
    })
}

/// Smallest block grid holding `k` blocks: minimal longest side first,
/// then fewest slots, then fewest z and y layers.
pub fn stack_grid(k: usize) -> [usize; 3] {
    let k = k.max(1);
    let mut side = 1;
    while side * side * side < k {
        side += 1;
    }
    let mut best = [side; 3];
    let mut best_total = side * side * side;
    for gz in 1..=side {
        for gy in 1..=side {
            let gx = k.div_ceil(gy * gz);
            if gx > side {
                continue;
            }
            let total = gx * gy * gz;
            if total < best_total {
                best = [gx, gy, gz];
                best_total = total;
            }
        }
    }
    best
}

/// Cubic-ish stacking of blocks. Unused slots hold the last block's mean.
pub fn stack_merge(blocks: &[UnitBlock]) -> Result<MergedArray> {
    let u = check_uniform(blocks)?;
    let grid = stack_grid(blocks.len());
    let dims = grid.map(|g| g * u);
    let fill = blocks[blocks.len() - 1].mean();
    let mut values = alloc::vec![fill; dims.iter().product()];
    for (i, b) in blocks.iter().enumerate() {
        let [ox, oy, oz] = BlockCoord::from_linear(grid, i).origin(u);
        for (row, chunk) in b.data.chunks_exact(u).enumerate() {
            let start = linear_index(dims, ox, oy + row % u, oz + row / u);
            values[start..start + u].copy_from_slice(chunk);
        }
    }
    Ok(MergedArray {
        dims,
        values,
        order: blocks.iter().map(|b| b.coord).collect(),
        padded: false,
        u,
        arrangement: Arrangement::Stacked,
    })
}

/// Splits an unpadded merged array back into its blocks, dropping fillers.
pub fn unmerge(m: &MergedArray) -> Result<Vec<UnitBlock>> {
    if m.padded {
        bail!(State, "unpad the array before unmerging");
    }
    let u = m.u;
    let cube = u * u * u;
    match m.arrangement {
        Arrangement::Linear => Ok(m
            .order
            .iter()
            .zip(m.values.chunks_exact(cube))
            .map(|(&coord, data)| UnitBlock {
                coord,
                u,
                data: data.to_vec(),
            })
            .collect()),
        Arrangement::Stacked => {
            let grid = stack_grid(m.order.len());
            Ok(m.order
                .iter()
                .enumerate()
                .map(|(i, &coord)| {
                    let [ox, oy, oz] = BlockCoord::from_linear(grid, i).origin(u);
                    let mut data = Vec::with_capacity(cube);
                    for z in oz..oz + u {
                        for y in oy..oy + u {
                            let start = linear_index(m.dims, ox, y, z);
                            data.extend_from_slice(&m.values[start..start + u]);
                        }
                    }
                    UnitBlock { coord, u, data }
                })
                .collect())
        }
    }
}

/// Pads a linear array only when `u > 4`; otherwise returns it unchanged.
pub fn pad_linear(m: &MergedArray) -> Result<MergedArray> {
    if m.arrangement != Arrangement::Linear {
        bail!(State, "only linear arrangements are padded");
    }
    if m.u <= 4 {
        return Ok(m.clone());
    }
    pad_layers(m)
}

/// Appends one layer at the high end of x, then one at the high end of y
/// (covering the new x column), each by linear extrapolation along its axis.
pub fn pad_layers(m: &MergedArray) -> Result<MergedArray> {
    if m.arrangement != Arrangement::Linear {
        bail!(State, "only linear arrangements are padded");
    }
    if m.padded {
        bail!(State, "array is already padded");
    }
    let [nx, ny, nz] = m.dims;
    let (px, py) = (nx + 1, ny + 1);
    let mut out = alloc::vec![0.0; px * py * nz];
    for z in 0..nz {
        for y in 0..ny {
            let src = &m.values[linear_index(m.dims, 0, y, z)..][..nx];
            let dst = linear_index([px, py, nz], 0, y, z);
            out[dst..dst + nx].copy_from_slice(src);
            out[dst + nx] = extrapolate(src[nx.saturating_sub(2)], src[nx - 1], nx);
        }
        let last = linear_index([px, py, nz], 0, ny - 1, z);
        let prev = linear_index([px, py, nz], 0, ny.saturating_sub(2), z);
        let dst = linear_index([px, py, nz], 0, ny, z);
        for x in 0..px {
            out[dst + x] = extrapolate(out[prev + x], out[last + x], ny);
        }
    }
    Ok(MergedArray {
        dims: [px, py, nz],
        values: out,
        order: m.order.clone(),
        padded: true,
        u: m.u,
        arrangement: m.arrangement,
    })
}

/// Next value of the line `.., before, last` of length `len`; lines shorter
/// than two replicate the edge.
#[inline]
fn extrapolate(before: f64, last: f64, len: usize) -> f64 {
    if len < 2 {
        last
    } else {
        2.0 * last - before
    }
}

/// Drops the padded x and y layers.
pub fn unpad(m: &MergedArray) -> Result<MergedArray> {
    if !m.padded {
        bail!(State, "array is not padded");
    }
    let [px, py, nz] = m.dims;
    let (nx, ny) = (px - 1, py - 1);
    let mut values = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            let start = linear_index(m.dims, 0, y, z);
            values.extend_from_slice(&m.values[start..start + nx]);
        }
    }
    Ok(MergedArray {
        dims: [nx, ny, nz],
        values,
        order: m.order.clone(),
        padded: false,
        u: m.u,
        arrangement: m.arrangement,
    })
}

/// Size ratio of a padded to an unpadded linear array: `(u + 1)^2 / u^2`.
pub fn padding_overhead(u: usize) -> f64 {
    let u = u as f64;
    (u + 1.0) * (u + 1.0) / (u * u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn block(i: usize, u: usize) -> UnitBlock {
        let data = (0..u * u * u).map(|j| (i * 1000 + j) as f64).collect();
        UnitBlock::new(BlockCoord::new(i, 0, 0), u, data).unwrap()
    }

    #[test]
    fn linear_dims() {
        let blocks: Vec<_> = (0..3).map(|i| block(i, 8)).collect();
        let m = linear_merge(&blocks).unwrap();
        assert_eq!(m.dims(), [8, 8, 24]);
        assert_eq!(m.order().len(), 3);
        let one = linear_merge(&blocks[..1]).unwrap();
        assert_eq!(one.values(), blocks[0].data());
    }

    #[test]
    fn mixed_units_rejected() {
        let blocks = vec![block(0, 8), block(1, 4)];
        assert!(matches!(linear_merge(&blocks), Err(crate::Error::Shape(_))));
        assert!(linear_merge(&[]).is_err());
    }

    #[test]
    fn stack_grids() {
        assert_eq!(stack_grid(1), [1, 1, 1]);
        assert_eq!(stack_grid(8), [2, 2, 2]);
        assert_eq!(stack_grid(5), [2, 2, 2]);
        assert_eq!(stack_grid(3), [2, 2, 1]);
        assert_eq!(stack_grid(2), [2, 1, 1]);
        assert_eq!(stack_grid(9), [3, 3, 1]);
    }

    #[test]
    fn stack_dims_and_fillers() {
        let blocks: Vec<_> = (0..5).map(|i| block(i, 8)).collect();
        let m = stack_merge(&blocks).unwrap();
        assert_eq!(m.dims(), [16, 16, 16]);
        // Slot 7 (bx=1, by=1, bz=1) is a filler.
        let mean = blocks[4].mean();
        assert_eq!(m.values()[linear_index([16; 3], 15, 15, 15)], mean);
        assert_eq!(unmerge(&m).unwrap(), blocks);

        let eight: Vec<_> = (0..8).map(|i| block(i, 8)).collect();
        assert_eq!(stack_merge(&eight).unwrap().dims(), [16, 16, 16]);
        let single = stack_merge(&eight[..1]).unwrap();
        assert_eq!(single.values(), eight[0].data());
    }

    #[test]
    fn pad_value_is_linear_extrapolation() {
        // Each x-line is 0, 2, 4, ..., so the padded x value is 2 * 7 * 2 - 12 = 16.
        let u = 8;
        let data = (0..u * u * u).map(|j| 2.0 * (j % u) as f64).collect();
        let m = linear_merge(&[UnitBlock::new(BlockCoord::new(0, 0, 0), u, data).unwrap()]).unwrap();
        let p = pad_linear(&m).unwrap();
        assert!(p.is_padded());
        assert_eq!(p.dims(), [9, 9, 8]);
        assert_eq!(p.values()[linear_index(p.dims(), 8, 0, 0)], 16.0);
        // Along y the lines are constant, so the y pad equals the row above it.
        assert_eq!(p.values()[linear_index(p.dims(), 3, 8, 5)], 6.0);
        assert_eq!(p.values()[linear_index(p.dims(), 8, 8, 5)], 16.0);
    }

    #[test]
    fn pad_row_two_four() {
        // A row ending [.., 2, 4] pads to 6.
        assert_eq!(extrapolate(2.0, 4.0, 8), 6.0);
        assert_eq!(extrapolate(9.0, 4.0, 1), 4.0);
    }

    #[test]
    fn pad_constant() {
        let u = 8;
        let m = linear_merge(&[UnitBlock::new(BlockCoord::new(0, 0, 0), u, vec![3.25; 512]).unwrap()]).unwrap();
        let p = pad_linear(&m).unwrap();
        assert!(p.values().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn small_units_are_not_padded() {
        let m = linear_merge(&[block(0, 4), block(1, 4)]).unwrap();
        let p = pad_linear(&m).unwrap();
        assert!(!p.is_padded());
        assert_eq!(p, m);
        let forced = pad_layers(&m).unwrap();
        assert_eq!(forced.values().len() as f64 / m.values().len() as f64, 1.5625);
    }

    #[test]
    fn unpad_dims_and_state() {
        let blocks: Vec<_> = (0..3).map(|i| block(i, 16)).collect();
        let m = linear_merge(&blocks).unwrap();
        let p = pad_linear(&m).unwrap();
        assert_eq!(p.dims(), [17, 17, 48]);
        assert_eq!(unpad(&p).unwrap(), m);
        assert!(matches!(unpad(&m), Err(crate::Error::State(_))));
        assert!(matches!(unmerge(&p), Err(crate::Error::State(_))));
        let stacked = stack_merge(&blocks).unwrap();
        assert!(pad_linear(&stacked).is_err());
    }

    #[test]
    fn overhead_formula() {
        assert_eq!(padding_overhead(4), 1.5625);
        assert!((padding_overhead(16) - 289.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn from_parts_checks_dims() {
        let blocks: Vec<_> = (0..2).map(|i| block(i, 8)).collect();
        let m = linear_merge(&blocks).unwrap();
        let again = MergedArray::from_parts(m.values().to_vec(), m.order().to_vec(), 8, Arrangement::Linear, false).unwrap();
        assert_eq!(again, m);
        assert!(MergedArray::from_parts(vec![0.0; 10], m.order().to_vec(), 8, Arrangement::Linear, false).is_err());
    }

    fn arb_blocks() -> impl Strategy<Value = Vec<UnitBlock>> {
        (prop::sample::select(vec![1usize, 2, 4, 8]), 1usize..6).prop_flat_map(|(u, k)| {
            proptest::collection::vec(proptest::collection::vec(-1e9f64..1e9, u * u * u), k).prop_map(
                move |datas| {
                    datas
                        .into_iter()
                        .enumerate()
                        .map(|(i, d)| UnitBlock::new(BlockCoord::new(i, 0, 0), u, d).unwrap())
                        .collect()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn linear_pad_round_trip(blocks in arb_blocks()) {
            let m = linear_merge(&blocks).unwrap();
            let p = pad_layers(&m).unwrap();
            let u = m.unit();
            prop_assert_eq!(p.dims(), [u + 1, u + 1, u * blocks.len()]);
            prop_assert_eq!(unmerge(&unpad(&p).unwrap()).unwrap(), blocks);
        }

        #[test]
        fn stack_round_trip(blocks in arb_blocks()) {
            let m = stack_merge(&blocks).unwrap();
            prop_assert_eq!(unmerge(&m).unwrap(), blocks);
        }
    }
}
