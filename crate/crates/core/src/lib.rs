//! Self-supervised pretraining and few-shot transfer for multi-band scene imagery.
//!
//! The crate is organised along the two-phase workflow:
//!
//! * [`datasets`] ingests manifests and rasters, builds deterministic splits and
//!   few-shot subsets, mixes sources and generates synthetic multi-band scenes.
//! * [`augment`] builds contrastive views, inpainting corruptions and jigsaw puzzles.
//! * [`losses`] holds the reference loss functions (NT-Xent, masked L2, jigsaw
//!   position cross-entropy) with analytic gradients and a finite-difference checker.
//! * [`models`] is a small residual CNN with attachable heads and an on-disk checkpoint format.
//! * [`pretrain`] and [`transfer`] are the phase-1 and phase-2 training loops.
//! * [`eval`] computes overall accuracy and runs factor-study sweeps.

pub mod augment;
pub mod datasets;
pub mod eval;
pub mod losses;
pub mod models;
pub mod pretrain;
pub mod rng;
pub mod transfer;

mod error;

pub use error::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;
