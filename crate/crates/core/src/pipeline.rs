//! Per-level compression: merge, pad, compress, and the inverse, plus
//! boundary post-processing on a level's own grid.

use alloc::vec::Vec;

use crate::codec::{compress, decompress, CodecConfig, CodecId, CompressedBlob, Decoded, HuffmanTable, LORENZO_BLOCK};
use crate::error::{bail, Result};
use crate::layout::{linear_merge, pad_linear, stack_merge, unmerge, unpad, Arrangement, MergedArray};
use crate::postprocess::{
    apply_postprocess_masked, extract_samples, plan_sampling, select_intensity, IntensityConfig, IntensityFamily,
    MAX_SAMPLING_RATE,
};
use crate::roi::Level;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PadMode {
    /// Pad linear arrangements with `u > 4` before the interpolation codec.
    #[default]
    Auto,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelCodec {
    pub codec: CodecConfig,
    pub arrangement: Arrangement,
    pub pad: PadMode,
}

impl LevelCodec {
    pub fn new(codec: CodecConfig) -> Self {
        Self {
            codec,
            arrangement: Arrangement::Linear,
            pad: PadMode::Auto,
        }
    }
}

/// Merges a level's blocks; `None` for an empty level.
pub fn merge_level(level: &Level, opts: &LevelCodec) -> Result<Option<MergedArray>> {
    if level.blocks.is_empty() {
        return Ok(None);
    }
    let merged = match opts.arrangement {
        Arrangement::Linear => linear_merge(&level.blocks)?,
        Arrangement::Stacked => stack_merge(&level.blocks)?,
    };
    let pad = opts.pad == PadMode::Auto && opts.codec.codec == CodecId::Interp && opts.arrangement == Arrangement::Linear;
    Ok(Some(if pad { pad_linear(&merged)? } else { merged }))
}

/// Placeholder blob for a level without blocks.
pub fn empty_blob(cfg: &CodecConfig) -> CompressedBlob {
    CompressedBlob {
        header: crate::codec::BlobHeader {
            codec: CodecId::Raw,
            dims: [0; 3],
            policy: cfg.policy,
            layout: None,
            literal_count: 0,
        },
        table: HuffmanTable::default(),
        payload: alloc::vec![0],
    }
}

pub fn compress_level(level: &Level, opts: &LevelCodec) -> Result<CompressedBlob> {
    match merge_level(level, opts)? {
        Some(m) => compress(&m, &opts.codec),
        None => Ok(empty_blob(&opts.codec)),
    }
}

/// Rebuilds a level from its blob. `dims` and `unit` come from the
/// container; the block list comes from the blob.
pub fn decompress_level(blob: &CompressedBlob, dims: [usize; 3], unit: usize, block_count: usize) -> Result<Level> {
    if block_count == 0 {
        return Level::new(dims, unit, Vec::new());
    }
    let m = match decompress(blob)? {
        Decoded::Merged(m) => m,
        Decoded::Volume(_) => bail!(Format, "level blob carries no block layout"),
    };
    let m = if m.is_padded() { unpad(&m)? } else { m };
    if m.unit() != unit || m.order().len() != block_count {
        bail!(
            Format,
            "blob holds {} blocks of edge {}, expected {block_count} of edge {unit}",
            m.order().len(),
            m.unit()
        );
    }
    Level::new(dims, unit, unmerge(&m)?)
}

/// Block size whose boundaries carry the codec's discontinuities on the
/// level grid.
pub fn postprocess_blocksize(codec: CodecId, unit: usize) -> usize {
    match codec {
        CodecId::BlockLorenzo => LORENZO_BLOCK.min(unit),
        CodecId::Interp | CodecId::Raw => unit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostOptions {
    pub family: IntensityFamily,
    /// Preferred region edge in blocks.
    pub region_blocks: usize,
    pub rate: f64,
    pub seed: u64,
}

impl PostOptions {
    pub fn new(family: IntensityFamily, seed: u64) -> Self {
        Self {
            family,
            region_blocks: 2,
            rate: MAX_SAMPLING_RATE,
            seed,
        }
    }
}

/// Picks intensities for one level from original and decompressed blocks.
/// Returns `Ok(None)` when the level is too sparse to sample.
pub fn choose_level_intensity(
    orig: &Level,
    decomp: &Level,
    eb: f64,
    blocksize: usize,
    post: &PostOptions,
) -> Result<Option<IntensityConfig>> {
    if orig.blocks.is_empty() {
        return Ok(None);
    }
    let (ov, covered) = orig.to_volume(0.0)?;
    let (dv, _) = decomp.to_volume(0.0)?;
    let plan = match plan_sampling(ov.dims(), blocksize, post.region_blocks, post.rate, post.seed, Some(&covered)) {
        Ok(p) => p,
        Err(crate::Error::Sampling(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let samples = extract_samples(&plan, &ov, &dv, Some(&covered))?;
    select_intensity(&samples, eb, blocksize, post.family).map(Some)
}

/// Smooths block boundaries inside the level's covered region.
pub fn postprocess_level(decomp: &Level, eb: f64, blocksize: usize, chosen: [f64; 3]) -> Result<Level> {
    if decomp.blocks.is_empty() {
        return Ok(decomp.clone());
    }
    let (vol, covered) = decomp.to_volume(0.0)?;
    let out = apply_postprocess_masked(&vol, &covered, eb, blocksize, chosen)?;
    let mut level = decomp.clone();
    level.refill_from(&out)?;
    Ok(level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::ErrorBoundPolicy;
    use crate::grid::Volume;
    use crate::roi::{build_adaptive, select_roi, RoiConfig};

    fn field() -> Volume {
        Volume::from_fn([32, 32, 32], |x, y, z| {
            let (x, y, z) = (x as f64 / 8.0, y as f64 / 8.0, z as f64 / 8.0);
            libm::sin(x) * libm::cos(y) + 0.2 * z + if x > 2.0 && y < 1.5 { 3.0 } else { 0.0 }
        })
        .unwrap()
    }

    #[test]
    fn levels_round_trip_within_bound() {
        let v = field();
        let cfg = RoiConfig::new(8, 25.0).unwrap();
        let ds = build_adaptive(&v, &select_roi(&v, &cfg).unwrap(), &cfg).unwrap();
        for codec in [CodecId::Interp, CodecId::BlockLorenzo] {
            for arrangement in [Arrangement::Linear, Arrangement::Stacked] {
                let opts = LevelCodec {
                    arrangement,
                    ..LevelCodec::new(CodecConfig::new(codec, ErrorBoundPolicy::uniform(0.01)))
                };
                for lvl in ds.levels() {
                    let blob = compress_level(lvl, &opts).unwrap();
                    let back = decompress_level(&blob, lvl.dims, lvl.unit, lvl.blocks.len()).unwrap();
                    assert_eq!(back.blocks.len(), lvl.blocks.len());
                    for (a, b) in back.blocks.iter().zip(&lvl.blocks) {
                        assert_eq!(a.coord(), b.coord());
                        for (x, y) in a.data().iter().zip(b.data()) {
                            assert!((x - y).abs() <= 0.01 + 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn padding_is_recorded_for_interp_only() {
        let v = field();
        let ds = crate::roi::uniform_dataset(&v, 8).unwrap();
        let lvl = &ds.levels()[0];
        let interp = LevelCodec::new(CodecConfig::new(CodecId::Interp, ErrorBoundPolicy::uniform(0.1)));
        assert!(merge_level(lvl, &interp).unwrap().unwrap().is_padded());
        let off = LevelCodec {
            pad: PadMode::Off,
            ..interp
        };
        assert!(!merge_level(lvl, &off).unwrap().unwrap().is_padded());
        let block = LevelCodec::new(CodecConfig::new(CodecId::BlockLorenzo, ErrorBoundPolicy::uniform(0.1)));
        assert!(!merge_level(lvl, &block).unwrap().unwrap().is_padded());
    }

    #[test]
    fn empty_level() {
        let lvl = Level::new([16, 16, 16], 8, Vec::new()).unwrap();
        let opts = LevelCodec::new(CodecConfig::new(CodecId::Interp, ErrorBoundPolicy::uniform(0.1)));
        let blob = compress_level(&lvl, &opts).unwrap();
        let bytes = blob.to_bytes();
        let (back, _) = CompressedBlob::from_bytes(&bytes).unwrap();
        assert_eq!(decompress_level(&back, [16, 16, 16], 8, 0).unwrap(), lvl);
    }

    #[test]
    fn level_postprocess_stays_in_band() {
        let v = field();
        let ds = crate::roi::uniform_dataset(&v, 16).unwrap();
        let lvl = &ds.levels()[0];
        let opts = LevelCodec::new(CodecConfig::new(CodecId::BlockLorenzo, ErrorBoundPolicy::uniform(0.05)));
        let blob = compress_level(lvl, &opts).unwrap();
        let dec = decompress_level(&blob, lvl.dims, lvl.unit, lvl.blocks.len()).unwrap();
        let post = PostOptions::new(IntensityFamily::SzLike, 1);
        let cfg = choose_level_intensity(lvl, &dec, 0.05, 4, &post).unwrap().unwrap();
        let out = postprocess_level(&dec, 0.05, 4, cfg.chosen).unwrap();
        for (a, b) in out.blocks.iter().zip(&lvl.blocks) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1.5 * 0.05 + 1e-12);
            }
        }
    }
}
