//! File formats, run configuration, experiments and the command line on top
//! of `gsn-core`.
//!
//! * [`idx`]: MNIST-style IDX input (plain or gzip).
//! * [`pgm`]: binary PGM sample strips.
//! * [`matfile`] and [`checkpoint`]: stamped binary matrices and models.
//! * [`config`]: the flat JSON [`config::RunConfig`].
//! * [`experiment`]: training, sampling, inpainting and Parzen evaluation.
//! * [`commands`]: what `gsn train|sample|inpaint|eval|verify|synth` do.

pub mod artifacts;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
mod error;
pub mod experiment;
pub mod idx;
pub mod matfile;
pub mod pgm;

pub use error::{Error, Result};
