//! Region-of-interest selection and multi-resolution datasets.
//!
//! A uniform volume is cut into `b`-cubes, the blocks with the widest value
//! range are kept at full resolution and the rest are stored downsampled
//! by two. Externally produced AMR hierarchies use the same container type.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::grid::{
    block_grid, block_value_range, downsample2x, upsample_by, validate_block_edge, BlockCoord,
    Volume,
};
use crate::layout::UnitBlock;

/// Ordering rule applied to blocks with equal value range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// The block with the lower linear index wins.
    #[default]
    LowerIndex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiConfig {
    pub block: usize,
    /// Share of blocks kept at full resolution, in `(0, 100]`.
    pub percent: f64,
    pub tie_break: TieBreak,
}

impl RoiConfig {
    pub fn new(block: usize, percent: f64) -> Result<Self> {
        let cfg = Self {
            block,
            percent,
            tie_break: TieBreak::LowerIndex,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_block_edge(self.block)?;
        if !(self.percent > 0.0 && self.percent <= 100.0) {
            bail!(Parameter, "ROI percent must be in (0, 100], got {}", self.percent);
        }
        Ok(())
    }

    /// Number of blocks selected out of `n`: `ceil(percent / 100 * n)`.
    pub fn quota(&self, n: usize) -> usize {
        let q = libm::ceil(self.percent * n as f64 / 100.0) as usize;
        q.clamp(usize::from(n > 0), n)
    }
}

/// One flag per block of the fine block grid, in linear block order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiMask {
    grid: [usize; 3],
    bits: Vec<bool>,
}

impl RoiMask {
    pub fn new(grid: [usize; 3], bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.iter().product::<usize>() {
            bail!(Shape, "mask of {} bits for block grid {grid:?}", bits.len());
        }
        Ok(Self { grid, bits })
    }

    pub fn filled(grid: [usize; 3], value: bool) -> Self {
        Self {
            grid,
            bits: vec![value; grid.iter().product()],
        }
    }

    pub fn grid(&self) -> [usize; 3] {
        self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, c: BlockCoord) -> bool {
        self.bits[c.linear(self.grid)]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Marks the `quota` blocks with the largest `max - min`.
pub fn select_roi(v: &Volume, cfg: &RoiConfig) -> Result<RoiMask> {
    cfg.validate()?;
    let grid = block_grid(v.dims(), cfg.block)?;
    let n = grid.iter().product();
    let mut ranked = Vec::with_capacity(n);
    for i in 0..n {
        let (lo, hi) = block_value_range(v, BlockCoord::from_linear(grid, i), cfg.block)?;
        ranked.push((hi - lo, i));
    }
    match cfg.tie_break {
        TieBreak::LowerIndex => {
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        }
    }
    let mut bits = vec![false; n];
    for &(_, i) in ranked.iter().take(cfg.quota(n)) {
        bits[i] = true;
    }
    Ok(RoiMask { grid, bits })
}

/// One resolution level: its domain dimensions, unit block edge and blocks
/// sorted by `(bz, by, bx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub dims: [usize; 3],
    pub unit: usize,
    pub blocks: Vec<UnitBlock>,
}

impl Level {
    pub fn new(dims: [usize; 3], unit: usize, mut blocks: Vec<UnitBlock>) -> Result<Self> {
        if unit == 0 || !unit.is_power_of_two() {
            bail!(Parameter, "unit block edge must be a power of two, got {unit}");
        }
        for b in &blocks {
            if b.u() != unit {
                bail!(Shape, "block of edge {} in a level of unit {unit}", b.u());
            }
            let [ox, oy, oz] = b.coord().origin(unit);
            if ox + unit > dims[0] || oy + unit > dims[1] || oz + unit > dims[2] {
                bail!(Bounds, "block {:?} exceeds level dims {dims:?}", b.coord());
            }
        }
        blocks.sort_by_key(|b| b.coord().zyx());
        Ok(Self { dims, unit, blocks })
    }

    pub fn cell_count(&self) -> usize {
        self.blocks.len() * self.unit.pow(3)
    }

    /// Assembles the level's blocks onto its own grid. Cells not covered by
    /// any block hold `fill`; the returned mask flags covered cells.
    pub fn to_volume(&self, fill: f64) -> Result<(Volume, Vec<bool>)> {
        let mut vol = Volume::filled(self.dims, fill)?;
        let mut covered = vec![false; vol.len()];
        for b in &self.blocks {
            vol.insert_block(b.coord(), self.unit, b.data())?;
            let [ox, oy, oz] = b.coord().origin(self.unit);
            for z in oz..oz + self.unit {
                for y in oy..oy + self.unit {
                    let start = vol.index(ox, y, z);
                    covered[start..start + self.unit].fill(true);
                }
            }
        }
        Ok((vol, covered))
    }

    /// Replaces block payloads with the matching cubes of `vol`.
    pub fn refill_from(&mut self, vol: &Volume) -> Result<()> {
        if vol.dims() != self.dims {
            bail!(Shape, "volume {:?} does not match level {:?}", vol.dims(), self.dims);
        }
        for b in &mut self.blocks {
            let data = vol.extract_block(b.coord(), self.unit)?;
            *b = UnitBlock::new(b.coord(), self.unit, data)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiInfo {
    pub config: RoiConfig,
    pub mask: RoiMask,
}

/// Ordered refinement levels, finest first, refinement ratio 2.
///
/// Level `l` has dimensions `domain / 2^l`. Every fine-grid cell is covered
/// by exactly one block of exactly one level.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiResDataset {
    levels: Vec<Level>,
    roi: Option<RoiInfo>,
}

impl MultiResDataset {
    pub fn new(levels: Vec<Level>, roi: Option<RoiInfo>) -> Result<Self> {
        let ds = Self { levels, roi };
        ds.check_coverage()?;
        Ok(ds)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [Level] {
        &mut self.levels
    }

    pub fn roi(&self) -> Option<&RoiInfo> {
        self.roi.as_ref()
    }

    pub fn domain(&self) -> [usize; 3] {
        self.levels[0].dims
    }

    /// Fraction of the fine domain covered by each level.
    pub fn densities(&self) -> Vec<f64> {
        let total = self.domain().iter().product::<usize>() as f64;
        self.levels
            .iter()
            .enumerate()
            .map(|(l, lvl)| (lvl.cell_count() << (3 * l)) as f64 / total)
            .collect()
    }

    /// Verifies level dimensions and that the block footprints tile the
    /// fine domain with no overlap and no gap.
    pub fn check_coverage(&self) -> Result<()> {
        if self.levels.is_empty() {
            bail!(Coverage, "dataset has no levels");
        }
        let domain = self.levels[0].dims;
        if domain.iter().any(|&d| d == 0) {
            bail!(Dimension, "empty domain {domain:?}");
        }
        let mut cell = usize::MAX;
        for (l, lvl) in self.levels.iter().enumerate() {
            let scale = 1usize << l;
            let expect = domain.map(|d| d / scale);
            if domain.iter().any(|d| d % scale != 0) || lvl.dims != expect {
                bail!(
                    Coverage,
                    "level {l} has dims {:?}, expected {expect:?} for ratio 2",
                    lvl.dims
                );
            }
            if !lvl.blocks.is_empty() {
                cell = cell.min(lvl.unit * scale);
            }
        }
        if cell == usize::MAX {
            bail!(Coverage, "dataset has no blocks");
        }
        if domain.iter().any(|d| d % cell != 0) {
            bail!(Coverage, "footprint {cell} does not tile domain {domain:?}");
        }
        let grid = domain.map(|d| d / cell);
        let mut hits = vec![0u8; grid.iter().product()];
        for (l, lvl) in self.levels.iter().enumerate() {
            let foot = lvl.unit << l;
            let span = foot / cell;
            for b in &lvl.blocks {
                let o = b.coord().origin(span);
                for z in o[2]..o[2] + span {
                    for y in o[1]..o[1] + span {
                        for x in o[0]..o[0] + span {
                            let h = &mut hits[crate::grid::linear_index(grid, x, y, z)];
                            if *h > 0 {
                                bail!(Coverage, "level {l} block {:?} overlaps another block", b.coord());
                            }
                            *h = 1;
                        }
                    }
                }
            }
        }
        if let Some(i) = hits.iter().position(|&h| h == 0) {
            let (x, y, z) = crate::grid::coords_of(grid, i);
            bail!(
                Coverage,
                "fine cells at {:?} are not covered by any level",
                [x * cell, y * cell, z * cell]
            );
        }
        Ok(())
    }
}

/// Fine level keeps masked blocks verbatim; coarse level keeps the 2x
/// downsample of every other block.
pub fn build_adaptive(v: &Volume, mask: &RoiMask, cfg: &RoiConfig) -> Result<MultiResDataset> {
    cfg.validate()?;
    let b = cfg.block;
    let grid = block_grid(v.dims(), b)?;
    if grid != mask.grid {
        bail!(Shape, "mask grid {:?} does not match volume block grid {grid:?}", mask.grid);
    }
    let mut fine = Vec::new();
    let mut coarse = Vec::new();
    for i in 0..grid.iter().product() {
        let c = BlockCoord::from_linear(grid, i);
        let data = v.extract_block(c, b)?;
        if mask.bits[i] {
            fine.push(UnitBlock::new(c, b, data)?);
        } else {
            let block = Volume::new([b, b, b], data)?;
            let small = downsample2x(&block)?;
            coarse.push(UnitBlock::new(c, b / 2, small.into_values())?);
        }
    }
    let dims = v.dims();
    let levels = vec![
        Level::new(dims, b, fine)?,
        Level::new(dims.map(|d| d / 2), b / 2, coarse)?,
    ];
    MultiResDataset::new(
        levels,
        Some(RoiInfo {
            config: *cfg,
            mask: mask.clone(),
        }),
    )
}

/// Builds a fine-grid volume: fine blocks copied, coarser blocks replicated
/// into their footprints.
pub fn reconstruct_uniform(ds: &MultiResDataset) -> Result<Volume> {
    ds.check_coverage()?;
    let mut out = Volume::filled(ds.domain(), 0.0)?;
    for (l, lvl) in ds.levels.iter().enumerate() {
        let factor = 1usize << l;
        let foot = lvl.unit * factor;
        for b in &lvl.blocks {
            let data = if factor == 1 {
                b.data().to_vec()
            } else {
                let small = Volume::new([lvl.unit; 3], b.data().to_vec())?;
                upsample_by(&small, factor).into_values()
            };
            out.insert_block(b.coord(), foot, &data)?;
        }
    }
    Ok(out)
}

/// Wraps an externally produced hierarchy, sorting block lists and
/// enforcing the coverage invariant.
pub fn ingest_amr(levels: Vec<Level>) -> Result<MultiResDataset> {
    let levels = levels
        .into_iter()
        .map(|l| Level::new(l.dims, l.unit, l.blocks))
        .collect::<Result<Vec<_>>>()?;
    MultiResDataset::new(levels, None)
}

/// Tiles a whole volume into one level of `b`-blocks.
pub fn uniform_dataset(v: &Volume, b: usize) -> Result<MultiResDataset> {
    if b == 0 || !b.is_power_of_two() {
        bail!(Parameter, "unit block edge must be a power of two, got {b}");
    }
    let grid = block_grid(v.dims(), b)?;
    let blocks = (0..grid.iter().product())
        .map(|i| {
            let c = BlockCoord::from_linear(grid, i);
            UnitBlock::new(c, b, v.extract_block(c, b)?)
        })
        .collect::<Result<Vec<_>>>()?;
    MultiResDataset::new(vec![Level::new(v.dims(), b, blocks)?], None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 4 blocks of edge 8 along x whose ranges are `ranges`.
    fn blocks_with_ranges(ranges: &[f64]) -> Volume {
        let n = ranges.len();
        Volume::from_fn([8 * n, 8, 8], |x, y, z| {
            if y == 0 && z == 0 && x % 8 == 0 {
                ranges[x / 8]
            } else {
                0.0
            }
        })
        .unwrap()
    }

    fn selected(mask: &RoiMask) -> Vec<usize> {
        mask.bits()
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    #[test]
    fn select_top_quarter() {
        let v = blocks_with_ranges(&[5.0, 1.0, 3.0, 2.0]);
        let mask = select_roi(&v, &RoiConfig::new(8, 25.0).unwrap()).unwrap();
        assert_eq!(selected(&mask), vec![0]);
    }

    #[test]
    fn select_all() {
        let v = blocks_with_ranges(&[5.0, 1.0, 3.0, 2.0]);
        let mask = select_roi(&v, &RoiConfig::new(8, 100.0).unwrap()).unwrap();
        assert_eq!(mask.count(), 4);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let v = blocks_with_ranges(&[1.0; 8]);
        let mask = select_roi(&v, &RoiConfig::new(8, 50.0).unwrap()).unwrap();
        assert_eq!(selected(&mask), vec![0, 1, 2, 3]);
    }

    #[test]
    fn quota_rounds_up() {
        let cfg = RoiConfig::new(8, 15.0).unwrap();
        assert_eq!(cfg.quota(64), 10);
        assert_eq!(cfg.quota(1), 1);
        assert_eq!(RoiConfig::new(8, 0.001).unwrap().quota(8), 1);
        assert!(RoiConfig::new(8, 0.0).is_err());
        assert!(RoiConfig::new(8, 100.5).is_err());
        assert!(RoiConfig::new(6, 10.0).is_err());
    }

    #[test]
    fn non_divisible_dims() {
        let v = Volume::filled([12, 8, 8], 0.0).unwrap();
        assert!(matches!(
            select_roi(&v, &RoiConfig::new(8, 50.0).unwrap()),
            Err(crate::Error::Dimension(_))
        ));
    }

    fn random_volume(dims: [usize; 3], seed: u64) -> Volume {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Volume::from_fn(dims, |_, _, _| rng.random_range(-10.0..10.0)).unwrap()
    }

    #[test]
    fn all_ones_mask_is_lossless() {
        let v = random_volume([16, 16, 8], 1);
        let cfg = RoiConfig::new(8, 100.0).unwrap();
        let mask = RoiMask::filled([2, 2, 1], true);
        let ds = build_adaptive(&v, &mask, &cfg).unwrap();
        assert_eq!(ds.levels()[0].blocks.len(), 4);
        assert!(ds.levels()[1].blocks.is_empty());
        assert_eq!(reconstruct_uniform(&ds).unwrap(), v);
        assert_eq!(ds.densities(), vec![1.0, 0.0]);
    }

    #[test]
    fn all_zeros_mask_is_tiled_downsample() {
        let v = random_volume([16, 16, 8], 2);
        let cfg = RoiConfig::new(8, 100.0).unwrap();
        let mask = RoiMask::filled([2, 2, 1], false);
        let ds = build_adaptive(&v, &mask, &cfg).unwrap();
        let coarse = &ds.levels()[1];
        assert_eq!(coarse.dims, [8, 8, 4]);
        let (assembled, covered) = coarse.to_volume(0.0).unwrap();
        assert!(covered.iter().all(|&c| c));
        assert_eq!(assembled, downsample2x(&v).unwrap());
    }

    #[test]
    fn constant_volume_survives_coarsening() {
        let v = Volume::filled([16, 8, 8], 2.5).unwrap();
        let cfg = RoiConfig::new(8, 50.0).unwrap();
        let ds = build_adaptive(&v, &RoiMask::filled([2, 1, 1], false), &cfg).unwrap();
        assert_eq!(reconstruct_uniform(&ds).unwrap(), v);
    }

    #[test]
    fn half_mask_per_block_oracle() {
        let v = random_volume([16, 16, 16], 3);
        let cfg = RoiConfig::new(8, 50.0).unwrap();
        let mask = select_roi(&v, &cfg).unwrap();
        let ds = build_adaptive(&v, &mask, &cfg).unwrap();
        let r = reconstruct_uniform(&ds).unwrap();
        for i in 0..8 {
            let c = BlockCoord::from_linear([2, 2, 2], i);
            let orig = v.extract_block(c, 8).unwrap();
            let got = r.extract_block(c, 8).unwrap();
            if mask.get(c) {
                assert_eq!(got, orig);
            } else {
                let b = Volume::new([8; 3], orig).unwrap();
                let expect = crate::grid::upsample2x(&downsample2x(&b).unwrap());
                assert_eq!(got, expect.into_values());
            }
        }
        let d = ds.densities();
        assert_eq!(d[0] + d[1], 1.0);
    }

    #[test]
    fn ingest_single_level() {
        let v = random_volume([16, 16, 16], 4);
        let ds = uniform_dataset(&v, 8).unwrap();
        let again = ingest_amr(ds.levels().to_vec()).unwrap();
        assert_eq!(again, ds);
        assert_eq!(reconstruct_uniform(&again).unwrap(), v);
    }

    /// Splits a 16^3 domain of 4^3 footprints between levels by a rule.
    fn synthetic_hierarchy(depths: impl Fn(usize, usize, usize) -> usize, n_levels: usize) -> Vec<Level> {
        // Footprint 8 cells; level l stores unit 8 >> l.
        let mut levels: Vec<Level> = (0..n_levels)
            .map(|l| Level {
                dims: [32 >> l; 3],
                unit: 8 >> l,
                blocks: Vec::new(),
            })
            .collect();
        for bz in 0..4 {
            for by in 0..4 {
                for bx in 0..4 {
                    let l = depths(bx, by, bz);
                    let u = 8 >> l;
                    let data = (0..u * u * u).map(|i| (i + l) as f64).collect();
                    levels[l]
                        .blocks
                        .push(UnitBlock::new(BlockCoord::new(bx, by, bz), u, data).unwrap());
                }
            }
        }
        levels
    }

    #[test]
    fn ingest_two_level_densities() {
        // 12 of 64 footprints fine: 18.75%.
        let levels = synthetic_hierarchy(|bx, by, bz| usize::from(!(bz == 0 && by < 3 && bx < 4)), 2);
        let ds = ingest_amr(levels).unwrap();
        let d = ds.densities();
        assert!((d[0] - 0.1875).abs() < 1e-12);
        assert!((d[0] + d[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ingest_three_level_densities() {
        // 10/20/34 of 64 footprints: 15.6% / 31.3% / 53.1%.
        let levels = synthetic_hierarchy(
            |bx, by, bz| {
                let i = bx + 4 * (by + 4 * bz);
                if i < 10 {
                    0
                } else if i < 30 {
                    1
                } else {
                    2
                }
            },
            3,
        );
        let ds = ingest_amr(levels).unwrap();
        let d = ds.densities();
        assert!((d[0] - 10.0 / 64.0).abs() < 1e-12);
        assert!((d[1] - 20.0 / 64.0).abs() < 1e-12);
        assert!((d[2] - 34.0 / 64.0).abs() < 1e-12);
        let r = reconstruct_uniform(&ds).unwrap();
        assert_eq!(r.dims(), [32; 3]);
    }

    #[test]
    fn ingest_detects_gap_and_overlap() {
        let mut levels = synthetic_hierarchy(|_, _, _| 0, 2);
        levels[0].blocks.pop();
        assert!(matches!(ingest_amr(levels), Err(crate::Error::Coverage(_))));

        let mut levels = synthetic_hierarchy(|_, _, _| 0, 2);
        levels[1]
            .blocks
            .push(UnitBlock::new(BlockCoord::new(0, 0, 0), 4, vec![0.0; 64]).unwrap());
        assert!(matches!(ingest_amr(levels), Err(crate::Error::Coverage(_))));
    }

    #[test]
    fn scaling_keeps_mask() {
        let v = random_volume([32, 16, 16], 5);
        let scaled = Volume::new(v.dims(), v.values().iter().map(|x| x * 3.5).collect()).unwrap();
        let cfg = RoiConfig::new(8, 30.0).unwrap();
        assert_eq!(select_roi(&v, &cfg).unwrap(), select_roi(&scaled, &cfg).unwrap());
    }
}
