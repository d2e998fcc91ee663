//! Multi-resolution reduction of scientific volumes.
//!
//! The crate is `no_std` (with `alloc`) and purely algorithmic: every
//! function takes owned or borrowed in-memory data and returns new data.
//! File formats, the command line and threading live in the `mrc` crate.
//!
//! Pipeline, bottom-up:
//!
//! - [`grid`]: dense volumes, block coordinates, 2x resampling.
//! - [`roi`]: range-threshold region-of-interest selection and the
//!   two-level adaptive dataset built from it.
//! - [`layout`]: unit blocks merged into one compressible array, with
//!   single-layer padding.
//! - [`codec`]: the interpolation codec with per-level error bounds, the
//!   block-wise Lorenzo codec, quantization and the Huffman stage.
//! - [`postprocess`]: error-bounded Bezier smoothing of block boundaries
//!   and the sampled intensity search.
//! - [`uncertainty`]: normal error model and isosurface crossing
//!   probabilities.
//! - [`pipeline`]: per-level merge, compress and post-process.
//! - [`metrics`]: PSNR, SSIM, compression ratio, rate-distortion sweeps.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod codec;
mod error;
pub mod grid;
pub mod layout;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod roi;
pub mod uncertainty;

pub use error::{Error, Result};
pub use grid::{BlockCoord, Volume};
