//! Error-bounded lossy codecs.
//!
//! Two predictors share one quantizer and entropy stage:
//!
//! - [`interp_compress`]: global level-by-level linear interpolation over
//!   the whole array, with optional per-level error bounds
//!   `eb_l = eb / min(alpha^(maxlevel - l), beta)`.
//! - [`block_compress`]: independent 4x4x4 blocks, each predicted by a 3D
//!   Lorenzo predictor.
//!
//! Both guarantee `|orig - decomp| <= eb` at every point.

mod blob;
pub mod entropy;
mod lorenzo;
pub mod quantize;
pub mod schedule;

use alloc::vec::Vec;

pub use blob::{BlobHeader, CodecId, CompressedBlob, FieldLayout, Reader as ByteReader, BLOB_MAGIC};
pub use entropy::{entropy_decode, entropy_encode, EntropyCoded, HuffmanTable, LosslessPass};
pub use lorenzo::LORENZO_BLOCK;
pub use quantize::{quantize, Quantized, QuantizedStream, DEFAULT_CODE_CAP, LITERAL};
pub use schedule::{build_schedule, InterpolationSchedule, Predictor, Traversal};

use crate::error::{bail, Result};
use crate::grid::Volume;
use crate::layout::MergedArray;

pub const DEFAULT_ALPHA: f64 = 2.25;
pub const DEFAULT_BETA: f64 = 8.0;

/// Absolute error bound and the per-level adaptation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorBoundPolicy {
    pub eb: f64,
    pub adaptive: bool,
    pub alpha: f64,
    pub beta: f64,
}

impl ErrorBoundPolicy {
    pub fn uniform(eb: f64) -> Self {
        Self {
            eb,
            adaptive: false,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
        }
    }

    pub fn adaptive(eb: f64) -> Self {
        Self {
            adaptive: true,
            ..Self::uniform(eb)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eb > 0.0 && self.eb.is_finite()) {
            bail!(Parameter, "error bound must be positive and finite, got {}", self.eb);
        }
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            bail!(Parameter, "alpha must exceed 1, got {}", self.alpha);
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            bail!(Parameter, "beta must be at least 1, got {}", self.beta);
        }
        Ok(())
    }
}

/// Bound used for interpolation level `l` of `maxlevel`.
pub fn level_error_bound(policy: &ErrorBoundPolicy, l: usize, maxlevel: usize) -> f64 {
    if !policy.adaptive {
        return policy.eb;
    }
    let depth = maxlevel.saturating_sub(l) as f64;
    let divisor = libm::pow(policy.alpha, depth).min(policy.beta);
    policy.eb / divisor
}

/// Array handed to a codec: a plain volume or a merged level.
#[derive(Debug, Clone, Copy)]
pub enum CodecInput<'a> {
    Volume(&'a Volume),
    Merged(&'a MergedArray),
}

impl<'a> From<&'a Volume> for CodecInput<'a> {
    fn from(v: &'a Volume) -> Self {
        CodecInput::Volume(v)
    }
}

impl<'a> From<&'a MergedArray> for CodecInput<'a> {
    fn from(m: &'a MergedArray) -> Self {
        CodecInput::Merged(m)
    }
}

impl CodecInput<'_> {
    fn dims(&self) -> [usize; 3] {
        match self {
            CodecInput::Volume(v) => v.dims(),
            CodecInput::Merged(m) => m.dims(),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            CodecInput::Volume(v) => v.values(),
            CodecInput::Merged(m) => m.values(),
        }
    }

    fn layout(&self) -> Option<FieldLayout> {
        match self {
            CodecInput::Volume(_) => None,
            CodecInput::Merged(m) => Some(FieldLayout {
                arrangement: m.arrangement(),
                padded: m.is_padded(),
                unit: m.unit(),
                order: m.order().to_vec(),
            }),
        }
    }
}

/// Output of a decoder, matching the kind of input that was compressed.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Volume(Volume),
    Merged(MergedArray),
}

impl Decoded {
    pub fn dims(&self) -> [usize; 3] {
        match self {
            Decoded::Volume(v) => v.dims(),
            Decoded::Merged(m) => m.dims(),
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            Decoded::Volume(v) => v.values(),
            Decoded::Merged(m) => m.values(),
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        match self {
            Decoded::Volume(v) => v.into_values(),
            Decoded::Merged(m) => m.into_values(),
        }
    }
}

/// Codec choice plus everything needed to reproduce a blob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecConfig {
    pub codec: CodecId,
    pub policy: ErrorBoundPolicy,
    pub lossless: LosslessPass,
}

impl CodecConfig {
    pub fn new(codec: CodecId, policy: ErrorBoundPolicy) -> Self {
        Self {
            codec,
            policy,
            lossless: LosslessPass::Identity,
        }
    }

    pub fn with_lossless(mut self, pass: LosslessPass) -> Self {
        self.lossless = pass;
        self
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        bail!(Data, "non-finite value {} at index {i}", values[i]);
    }
    Ok(())
}

/// Compresses with the codec named in `cfg`.
pub fn compress<'a>(input: impl Into<CodecInput<'a>>, cfg: &CodecConfig) -> Result<CompressedBlob> {
    let input = input.into();
    cfg.policy.validate()?;
    let dims = input.dims();
    let values = input.values();
    if dims.iter().any(|&d| d == 0) {
        bail!(Dimension, "cannot compress an empty array {dims:?}");
    }
    check_finite(values)?;
    let header = |literal_count| BlobHeader {
        codec: cfg.codec,
        dims,
        policy: cfg.policy,
        layout: input.layout(),
        literal_count,
    };
    let stream = match cfg.codec {
        CodecId::Raw => {
            let mut bytes = Vec::with_capacity(1 + values.len() * 8);
            bytes.push(LosslessPass::Identity.id());
            for v in values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            return Ok(CompressedBlob {
                header: header(0),
                table: HuffmanTable::default(),
                payload: bytes,
            });
        }
        CodecId::Interp => interp_stream(values, dims, &cfg.policy)?,
        CodecId::BlockLorenzo => lorenzo::encode(values, dims, cfg.policy.eb)?,
    };
    let coded = entropy_encode(&stream, cfg.lossless);
    Ok(CompressedBlob {
        header: header(stream.literals.len() as u64),
        table: coded.table,
        payload: coded.payload,
    })
}

/// Decompresses any blob, returning the same kind of array that went in.
pub fn decompress(blob: &CompressedBlob) -> Result<Decoded> {
    let h = &blob.header;
    let dims = h.dims;
    let n = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| crate::Error::Format("blob dimensions overflow".into()))?;
    let values = match h.codec {
        CodecId::Raw => {
            let Some((&pass, body)) = blob.payload.split_first() else {
                bail!(Format, "empty raw payload");
            };
            let raw = LosslessPass::decode(pass, body)?;
            if raw.len() != n * 8 {
                bail!(Format, "raw payload has {} bytes, expected {}", raw.len(), n * 8);
            }
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        CodecId::Interp | CodecId::BlockLorenzo => {
            h.policy.validate().map_err(|e| crate::Error::Format(alloc::format!("{e}")))?;
            let stream = entropy_decode(
                &blob.table,
                &blob.payload,
                n,
                h.literal_count as usize,
                DEFAULT_CODE_CAP,
            )?;
            if h.codec == CodecId::Interp {
                interp_reconstruct(&stream, dims, &h.policy)?
            } else {
                lorenzo::decode(&stream, dims, h.policy.eb)?
            }
        }
    };
    match &h.layout {
        None => Ok(Decoded::Volume(Volume::new(dims, values)?)),
        Some(l) => {
            let m = MergedArray::from_parts(values, l.order.clone(), l.unit, l.arrangement, l.padded)?;
            if m.dims() != dims {
                bail!(Format, "layout implies dims {:?}, header says {dims:?}", m.dims());
            }
            Ok(Decoded::Merged(m))
        }
    }
}

/// Interpolation codec with the identity lossless pass.
pub fn interp_compress<'a>(input: impl Into<CodecInput<'a>>, policy: &ErrorBoundPolicy) -> Result<CompressedBlob> {
    compress(input, &CodecConfig::new(CodecId::Interp, *policy))
}

pub fn interp_decompress(blob: &CompressedBlob) -> Result<Decoded> {
    if blob.header.codec != CodecId::Interp {
        bail!(Format, "blob was written by codec {:?}", blob.header.codec);
    }
    decompress(blob)
}

/// Block-wise Lorenzo codec with the identity lossless pass. Only
/// `policy.eb` is used; there is no per-level adaptation.
pub fn block_compress<'a>(input: impl Into<CodecInput<'a>>, policy: &ErrorBoundPolicy) -> Result<CompressedBlob> {
    compress(input, &CodecConfig::new(CodecId::BlockLorenzo, *policy))
}

pub fn block_decompress(blob: &CompressedBlob) -> Result<Decoded> {
    if blob.header.codec != CodecId::BlockLorenzo {
        bail!(Format, "blob was written by codec {:?}", blob.header.codec);
    }
    decompress(blob)
}

fn interp_stream(values: &[f64], dims: [usize; 3], policy: &ErrorBoundPolicy) -> Result<QuantizedStream> {
    let traversal = Traversal::new(dims);
    let maxlevel = traversal.maxlevel();
    let bounds: Vec<f64> = (0..=maxlevel)
        .map(|l| level_error_bound(policy, l, maxlevel))
        .collect();
    let mut recon = alloc::vec![0.0; values.len()];
    let mut stream = QuantizedStream::with_capacity(DEFAULT_CODE_CAP, values.len());
    let mut err = None;
    traversal.for_each(|level, idx, p| {
        if err.is_some() {
            return;
        }
        let pred = p.eval(&recon);
        match stream.push(pred, values[idx], bounds[level]) {
            Ok(r) => recon[idx] = r,
            Err(e) => err = Some(e),
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(stream),
    }
}

fn interp_reconstruct(stream: &QuantizedStream, dims: [usize; 3], policy: &ErrorBoundPolicy) -> Result<Vec<f64>> {
    let traversal = Traversal::new(dims);
    let maxlevel = traversal.maxlevel();
    let bounds: Vec<f64> = (0..=maxlevel)
        .map(|l| level_error_bound(policy, l, maxlevel))
        .collect();
    let n: usize = dims.iter().product();
    let mut recon = alloc::vec![0.0; n];
    let mut reader = stream.reader();
    let mut err = None;
    traversal.for_each(|level, idx, p| {
        if err.is_some() {
            return;
        }
        let pred = p.eval(&recon);
        match reader.next(pred, bounds[level]) {
            Ok(v) => recon[idx] = v,
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    reader.finish()?;
    check_finite(&recon).map_err(|_| crate::Error::Format("decoded non-finite value".into()))?;
    Ok(recon)
}
