//! Quality and rate metrics.
//!
//! All reductions use a fixed-order pairwise summation so results do not
//! depend on how a caller splits the work.

use alloc::vec::Vec;

use crate::codec::{compress, decompress, CodecConfig, CodecId, ErrorBoundPolicy, LosslessPass};
use crate::error::{bail, Result};
use crate::grid::{min_max, Volume};
use crate::pipeline::{
    choose_level_intensity, compress_level, decompress_level, postprocess_blocksize, postprocess_level, LevelCodec,
    PostOptions,
};
use crate::postprocess::{apply_postprocess, extract_samples, plan_sampling, select_intensity};
use crate::roi::{reconstruct_uniform, MultiResDataset};

/// Pairwise sum with an 8-element sequential base case.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn pairwise_map(n: usize, f: &impl Fn(usize) -> f64, lo: usize) -> f64 {
    if n <= 8 {
        return (lo..lo + n).map(f).sum();
    }
    let h = n / 2;
    pairwise_map(h, f, lo) + pairwise_map(n - h, f, lo + h)
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        bail!(Shape, "{} values against {}", a.len(), b.len());
    }
    if a.is_empty() {
        bail!(Shape, "cannot compare empty arrays");
    }
    Ok(())
}

pub fn mse(orig: &[f64], recon: &[f64]) -> Result<f64> {
    check_pair(orig, recon)?;
    let sq = pairwise_map(orig.len(), &|i| (orig[i] - recon[i]) * (orig[i] - recon[i]), 0);
    Ok(sq / orig.len() as f64)
}

pub fn max_abs_error(orig: &[f64], recon: &[f64]) -> Result<f64> {
    check_pair(orig, recon)?;
    Ok(orig.iter().zip(recon).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// `20 log10(range(orig) / rmse)`; `+inf` when the arrays are identical.
/// A constant original uses a range of 1.
pub fn psnr(orig: &[f64], recon: &[f64]) -> Result<f64> {
    let m = mse(orig, recon)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    let (lo, hi) = min_max(orig);
    let range = if hi > lo { hi - lo } else { 1.0 };
    Ok(20.0 * libm::log10(range / libm::sqrt(m)))
}

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_STRIDE: usize = 4;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Mean SSIM over `8^3` windows with stride 4.
pub fn ssim(orig: &Volume, recon: &Volume) -> Result<f64> {
    let dims = orig.dims();
    if dims != recon.dims() {
        bail!(Shape, "volumes {:?} and {:?} differ", dims, recon.dims());
    }
    if dims.iter().any(|&d| d < SSIM_WINDOW) {
        bail!(Dimension, "SSIM needs every axis >= {SSIM_WINDOW}, got {dims:?}");
    }
    let (lo, hi) = min_max(orig.values());
    let l = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (K1 * l) * (K1 * l);
    let c2 = (K2 * l) * (K2 * l);
    let starts = dims.map(|d| (d - SSIM_WINDOW) / SSIM_STRIDE + 1);
    let w = SSIM_WINDOW;
    let n = (w * w * w) as f64;
    let (a, b) = (orig.values(), recon.values());
    let mut scores = Vec::with_capacity(starts.iter().product());
    let mut xs = Vec::with_capacity(w * w * w);
    let mut ys = Vec::with_capacity(w * w * w);
    for sz in 0..starts[2] {
        for sy in 0..starts[1] {
            for sx in 0..starts[0] {
                xs.clear();
                ys.clear();
                let o = [sx, sy, sz].map(|s| s * SSIM_STRIDE);
                for z in o[2]..o[2] + w {
                    for y in o[1]..o[1] + w {
                        let s = orig.index(o[0], y, z);
                        xs.extend_from_slice(&a[s..s + w]);
                        ys.extend_from_slice(&b[s..s + w]);
                    }
                }
                let mx = pairwise_sum(&xs) / n;
                let my = pairwise_sum(&ys) / n;
                let vx = pairwise_map(xs.len(), &|i| (xs[i] - mx) * (xs[i] - mx), 0) / n;
                let vy = pairwise_map(ys.len(), &|i| (ys[i] - my) * (ys[i] - my), 0) / n;
                let cov = pairwise_map(xs.len(), &|i| (xs[i] - mx) * (ys[i] - my), 0) / n;
                scores.push(((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)));
            }
        }
    }
    Ok(pairwise_sum(&scores) / scores.len() as f64)
}

/// `original / compressed`.
pub fn compression_ratio(original_bytes: usize, compressed_bytes: usize) -> Result<f64> {
    if compressed_bytes == 0 {
        bail!(Parameter, "compressed size is zero");
    }
    Ok(original_bytes as f64 / compressed_bytes as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateDistortionPoint {
    pub eb: f64,
    pub original_bytes: usize,
    pub compressed_bytes: usize,
    pub cr: f64,
    /// Bits per value.
    pub bit_rate: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub max_error: f64,
}

/// What to compress with at each error bound of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub codec: CodecId,
    pub adaptive: bool,
    pub lossless: LosslessPass,
    pub level: Option<LevelCodec>,
    pub post: Option<PostOptions>,
    /// Boundary spacing for post-processing a plain volume.
    pub post_blocksize: usize,
    /// Bytes per value of the uncompressed input.
    pub scalar_bytes: usize,
}

impl SweepOptions {
    pub fn new(codec: CodecId) -> Self {
        Self {
            codec,
            adaptive: false,
            lossless: LosslessPass::Identity,
            level: None,
            post: None,
            post_blocksize: 4,
            scalar_bytes: 8,
        }
    }

    fn codec_config(&self, eb: f64) -> CodecConfig {
        let policy = if self.adaptive {
            ErrorBoundPolicy::adaptive(eb)
        } else {
            ErrorBoundPolicy::uniform(eb)
        };
        CodecConfig::new(self.codec, policy).with_lossless(self.lossless)
    }
}

fn point(orig: &Volume, recon: &Volume, eb: f64, compressed: usize, scalar_bytes: usize) -> Result<RateDistortionPoint> {
    let original_bytes = orig.len() * scalar_bytes;
    Ok(RateDistortionPoint {
        eb,
        original_bytes,
        compressed_bytes: compressed,
        cr: compression_ratio(original_bytes, compressed)?,
        bit_rate: compressed as f64 * 8.0 / orig.len() as f64,
        psnr: psnr(orig.values(), recon.values())?,
        ssim: if orig.dims().iter().all(|&d| d >= SSIM_WINDOW) {
            ssim(orig, recon)?
        } else {
            f64::NAN
        },
        max_error: max_abs_error(orig.values(), recon.values())?,
    })
}

/// Compresses a plain volume at every error bound.
pub fn rd_sweep(v: &Volume, opts: &SweepOptions, ebs: &[f64]) -> Result<Vec<RateDistortionPoint>> {
    ebs.iter()
        .map(|&eb| {
            let blob = compress(v, &opts.codec_config(eb))?;
            let size = blob.encoded_len();
            let Ok(crate::codec::Decoded::Volume(mut recon)) = decompress(&blob) else {
                bail!(State, "plain volume did not decode to a volume");
            };
            if let Some(post) = &opts.post {
                let bs = opts.post_blocksize;
                if let Ok(plan) = plan_sampling(v.dims(), bs, post.region_blocks, post.rate, post.seed, None) {
                    let samples = extract_samples(&plan, v, &recon, None)?;
                    let cfg = select_intensity(&samples, eb, bs, post.family)?;
                    recon = apply_postprocess(&recon, eb, bs, &cfg)?;
                }
            }
            point(v, &recon, eb, size, opts.scalar_bytes)
        })
        .collect()
}

/// Compresses every level of `ds` at each error bound and scores the
/// uniform reconstruction against `reference` (the full-resolution field).
pub fn rd_sweep_dataset(
    ds: &MultiResDataset,
    reference: &Volume,
    opts: &SweepOptions,
    ebs: &[f64],
) -> Result<Vec<RateDistortionPoint>> {
    if reference.dims() != ds.domain() {
        bail!(Shape, "reference {:?} does not match domain {:?}", reference.dims(), ds.domain());
    }
    ebs.iter()
        .map(|&eb| {
            let codec = opts.codec_config(eb);
            let lc = LevelCodec {
                codec,
                ..opts.level.unwrap_or(LevelCodec::new(codec))
            };
            let mut size = 0;
            let mut levels = Vec::with_capacity(ds.levels().len());
            for lvl in ds.levels() {
                let blob = compress_level(lvl, &lc)?;
                size += blob.encoded_len();
                let mut back = decompress_level(&blob, lvl.dims, lvl.unit, lvl.blocks.len())?;
                if let Some(post) = &opts.post {
                    let bs = postprocess_blocksize(opts.codec, lvl.unit);
                    if let Some(cfg) = choose_level_intensity(lvl, &back, eb, bs, post)? {
                        back = postprocess_level(&back, eb, bs, cfg.chosen)?;
                    }
                }
                levels.push(back);
            }
            let recon = reconstruct_uniform(&MultiResDataset::new(levels, ds.roi().cloned())?)?;
            point(reference, &recon, eb, size, opts.scalar_bytes)
        })
        .collect()
}
