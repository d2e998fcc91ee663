//! `MRC1` container: a multi-resolution dataset with one blob per level.
//!
//! ```text
//! "MRC1" | version u16 | scalar width u8 | level count u8
//! | ROI block u32 | ROI percent f64
//! | mask bit count u64 | mask bytes (LSB first, block-index order)
//! | per level:
//! |   dims 3 x u64 | unit u32 | block count u64 | coords 3 x u64 each
//! |   blob | post family u8 | a 3 x f64 | sample offset u64
//! | samples length u64 | samples
//! ```
//!
//! The samples section holds, for each level that has any, a `u32` region
//! count followed by `origin`, `core` and `size` (3 x u64 each) and the
//! original values as a length-prefixed DEFLATE stream of f64. A level's
//! sample offset is relative to the start of the section, or `u64::MAX`.

use mrc_core::codec::{
    compress, ByteReader, CodecConfig, CodecId, CompressedBlob, ErrorBoundPolicy, LosslessPass,
};
use mrc_core::grid::block_grid;
use mrc_core::pipeline::{decompress_level, postprocess_blocksize, postprocess_level};
use mrc_core::postprocess::{IntensityFamily, Region};
use mrc_core::roi::{Level, MultiResDataset, RoiConfig, RoiInfo, RoiMask};
use mrc_core::layout::linear_merge;
use mrc_core::BlockCoord;
use rayon::prelude::*;

use crate::error::Result;

pub const MAGIC: &[u8; 4] = b"MRC1";
pub const VERSION: u16 = 1;
pub const NO_SAMPLES: u64 = u64::MAX;

fn format_err(msg: impl Into<String>) -> mrc_core::Error {
    mrc_core::Error::Format(msg.into())
}

/// Intensities chosen at compression time; `family == None` disables
/// post-processing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostHeader {
    pub family: Option<IntensityFamily>,
    pub a: [f64; 3],
}

impl PostHeader {
    pub const OFF: Self = Self { family: None, a: [0.0; 3] };
}

/// Original values over one sampled region of a level grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRegion {
    pub region: Region,
    pub orig: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub dims: [usize; 3],
    pub unit: usize,
    pub coords: Vec<BlockCoord>,
    pub blob: CompressedBlob,
    pub post: PostHeader,
    pub samples: Vec<SampleRegion>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub scalar_width: u8,
    pub roi: RoiInfo,
    pub levels: Vec<LevelRecord>,
}

/// ROI record for a dataset that was tiled rather than ROI-selected: every
/// block is fine.
pub fn full_roi(domain: [usize; 3], block: usize) -> Result<RoiInfo> {
    let config = RoiConfig::new(block, 100.0)?;
    Ok(RoiInfo {
        config,
        mask: RoiMask::filled(block_grid(domain, block)?, true),
    })
}

impl Container {
    /// Stores every level verbatim (raw codec, linear arrangement).
    pub fn uncompressed(ds: &MultiResDataset, scalar_width: u8, roi: RoiInfo) -> Result<Self> {
        let cfg = CodecConfig::new(CodecId::Raw, ErrorBoundPolicy::uniform(1.0));
        let levels = ds
            .levels()
            .iter()
            .map(|l| {
                let blob = if l.blocks.is_empty() {
                    mrc_core::pipeline::empty_blob(&cfg)
                } else {
                    compress(&linear_merge(&l.blocks)?, &cfg)?
                };
                Ok(LevelRecord {
                    dims: l.dims,
                    unit: l.unit,
                    coords: l.blocks.iter().map(|b| b.coord()).collect(),
                    blob,
                    post: PostHeader::OFF,
                    samples: Vec::new(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            scalar_width,
            roi,
            levels,
        })
    }

    pub fn domain(&self) -> [usize; 3] {
        self.levels.first().map_or([0; 3], |l| l.dims)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut samples = Vec::new();
        let offsets: Vec<u64> = self
            .levels
            .iter()
            .map(|l| {
                if l.samples.is_empty() {
                    return NO_SAMPLES;
                }
                let off = samples.len() as u64;
                encode_samples(&l.samples, &mut samples);
                off
            })
            .collect();

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.scalar_width);
        out.push(self.levels.len() as u8);
        out.extend_from_slice(&(self.roi.config.block as u32).to_le_bytes());
        out.extend_from_slice(&self.roi.config.percent.to_le_bytes());
        let bits = self.roi.mask.bits();
        put_u64(&mut out, bits.len() as u64);
        let mut bytes = vec![0u8; bits.len().div_ceil(8)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&bytes);
        for (l, off) in self.levels.iter().zip(offsets) {
            for d in l.dims {
                put_u64(&mut out, d as u64);
            }
            out.extend_from_slice(&(l.unit as u32).to_le_bytes());
            put_u64(&mut out, l.coords.len() as u64);
            for c in &l.coords {
                put_u64(&mut out, c.bx as u64);
                put_u64(&mut out, c.by as u64);
                put_u64(&mut out, c.bz as u64);
            }
            l.blob.write_to(&mut out);
            out.push(l.post.family.map_or(0, IntensityFamily::id));
            for a in l.post.a {
                out.extend_from_slice(&a.to_le_bytes());
            }
            put_u64(&mut out, off);
        }
        put_u64(&mut out, samples.len() as u64);
        out.extend_from_slice(&samples);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(format_err("not an MRC1 container").into());
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(format_err(format!("unsupported container version {version}")).into());
        }
        let scalar_width = r.u8()?;
        crate::raw::Dtype::from_width(scalar_width)?;
        let n_levels = r.u8()? as usize;
        let block = r.u32()? as usize;
        let percent = r.f64()?;
        let config = RoiConfig::new(block, percent).map_err(|e| format_err(format!("ROI header: {e}")))?;
        let n_bits = r.usize()?;
        let mask_bytes = r.take(n_bits.div_ceil(8))?;
        let bits: Vec<bool> = (0..n_bits).map(|i| mask_bytes[i / 8] >> (i % 8) & 1 == 1).collect();

        let mut levels = Vec::with_capacity(n_levels);
        let mut offsets = Vec::with_capacity(n_levels);
        for _ in 0..n_levels {
            let dims = [r.usize()?, r.usize()?, r.usize()?];
            let unit = r.u32()? as usize;
            let count = r.usize()?;
            if count > r.remaining() / 24 {
                return Err(format_err(format!("block count {count} exceeds file size")).into());
            }
            let coords = (0..count)
                .map(|_| Ok(BlockCoord::new(r.usize()?, r.usize()?, r.usize()?)))
                .collect::<mrc_core::Result<Vec<_>>>()?;
            let rest = r.take(r.remaining())?;
            let (blob, used) = CompressedBlob::from_bytes(rest)?;
            r = ByteReader::new(&rest[used..]);
            if count > 0 {
                let order = blob.header.layout.as_ref().map(|l| &l.order);
                if order != Some(&coords) {
                    return Err(format_err("coordinate table disagrees with blob layout").into());
                }
            }
            let family = IntensityFamily::from_id(r.u8()?)?;
            let a = [r.f64()?, r.f64()?, r.f64()?];
            offsets.push(r.u64()?);
            levels.push(LevelRecord {
                dims,
                unit,
                coords,
                blob,
                post: PostHeader { family, a },
                samples: Vec::new(),
            });
        }
        let len = r.usize()?;
        let section = r.take(len)?;
        if r.remaining() != 0 {
            return Err(format_err(format!("{} trailing bytes", r.remaining())).into());
        }
        for (l, off) in levels.iter_mut().zip(offsets) {
            if off == NO_SAMPLES {
                continue;
            }
            let off = usize::try_from(off).ok().filter(|&o| o < section.len());
            let Some(off) = off else {
                return Err(format_err("sample offset outside the samples section").into());
            };
            l.samples = decode_samples(&mut ByteReader::new(&section[off..]))?;
        }

        let domain = levels.first().map_or([0; 3], |l| l.dims);
        let grid = block_grid(domain, block).map_err(|e| format_err(format!("ROI grid: {e}")))?;
        let mask = RoiMask::new(grid, bits).map_err(|e| format_err(format!("ROI mask: {e}")))?;
        Ok(Self {
            scalar_width,
            roi: RoiInfo { config, mask },
            levels,
        })
    }

    /// Decodes every level, in parallel on the current rayon pool, applying
    /// recorded post-processing when `post` is set.
    pub fn to_dataset(&self, post: bool) -> Result<MultiResDataset> {
        let levels = self
            .levels
            .par_iter()
            .map(|l| decode_level(l, post))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiResDataset::new(levels, Some(self.roi.clone()))?)
    }
}

pub fn decode_level(l: &LevelRecord, post: bool) -> Result<Level> {
    let level = decompress_level(&l.blob, l.dims, l.unit, l.coords.len())?;
    match l.post.family {
        Some(_) if post && !level.blocks.is_empty() => {
            let bs = postprocess_blocksize(l.blob.header.codec, l.unit);
            Ok(postprocess_level(&level, l.blob.header.policy.eb, bs, l.post.a)?)
        }
        _ => Ok(level),
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn encode_samples(samples: &[SampleRegion], out: &mut Vec<u8>) {
    out.extend_from_slice(&(samples.len() as u32).to_le_bytes());
    for s in samples {
        for v in [s.region.origin, s.region.core, s.region.size] {
            for d in v {
                put_u64(out, d as u64);
            }
        }
        let raw: Vec<u8> = s.orig.iter().flat_map(|v| v.to_le_bytes()).collect();
        let pass = LosslessPass::Deflate(6);
        let body = pass.encode(&raw);
        put_u64(out, body.len() as u64 + 1);
        out.push(pass.id());
        out.extend_from_slice(&body);
    }
}

fn decode_samples(r: &mut ByteReader) -> Result<Vec<SampleRegion>> {
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(r.remaining() / 80));
    for _ in 0..count {
        let mut triple = || -> mrc_core::Result<[usize; 3]> { Ok([r.usize()?, r.usize()?, r.usize()?]) };
        let (origin, core, size) = (triple()?, triple()?, triple()?);
        let len = r.usize()?;
        let Some((&pass, body)) = r.take(len)?.split_first() else {
            return Err(format_err("empty sample payload").into());
        };
        let raw = LosslessPass::decode(pass, body)?;
        let n = size.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        if n.and_then(|n| n.checked_mul(8)) != Some(raw.len()) {
            return Err(format_err("sample payload does not match its region size").into());
        }
        let orig = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push(SampleRegion {
            region: Region { origin, core, size },
            orig,
        });
    }
    Ok(out)
}
