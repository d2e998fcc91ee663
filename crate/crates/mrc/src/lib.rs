//! File formats and the `mrc` command line around [`mrc_core`].

pub mod commands;
pub mod container;
pub mod error;
pub mod raw;

pub use error::{Error, Result};
