//! Generative stochastic networks (GSNs) and denoising auto-encoders.
//!
//! This crate is `no_std` and only needs `alloc`. It contains the whole
//! numerical side of the project:
//!
//! * [`numkit`]: dense tensors, seeded counter-based random streams and the
//!   hand-differentiated primitives networks are built from.
//! * [`corruption`]: the fixed corruption processes `C(X̃|X)`.
//! * [`recon`]: factorized reconstruction distributions with per-step
//!   scaling factors.
//! * [`network`]: the tied-weight deep GSN graph with odd/even layer sweeps.
//! * [`trainer`]: walkback rollouts, unrolled training and SGD with momentum.
//! * [`chain`]: unconditional, clamped and dependency-network samplers.
//! * [`oracle`]: exact finite-state checks of the stationary-distribution
//!   results the training procedures rely on.
//! * [`parzen`]: Parzen-window log-likelihood evaluation of generated samples.
//! * [`synth`]: synthetic discrete and continuous datasets.
//!
//! File formats, configuration and the command line live in the `gsn`
//! companion crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod chain;
pub mod corruption;
mod error;
pub mod network;
pub mod numkit;
pub mod oracle;
pub mod parzen;
pub mod recon;
pub mod synth;
pub mod tabular;
pub mod trainer;
pub mod verify;

pub use error::{GsnError, Result};
