//! Numerical core of the distributed-robustness workbench.
//!
//! Everything here is pure computation over in-memory values and builds
//! without `std` (only `alloc`). File formats, the CLI and experiment
//! orchestration live in the `distrobust-bench` crate.
//!
//! The modules map onto the stages of an experiment:
//!
//! - [`nn`]: tensors, the fixed layer set, forward pass, cross-entropy and
//!   hand-written backward passes for parameter and input gradients.
//! - [`zoo`]: the six desk-scale architectures.
//! - [`optim`]: nine optimizers and five learning-rate schedulers.
//! - [`data`]: datasets, IDX parsing, synthetic blobs, partitioning and
//!   augmentation.
//! - [`trainer`]: parameter diversification, two-round random-search tuning,
//!   final training and scenario construction.
//! - [`attacks`]: momentum-iterative transfer attacks (baseline, SAM, CSE,
//!   CW) and the linearised loss-change predictor.
//! - [`ensemble`]: average, hard and weighted voting.
//! - [`metrics`]: CA/ASR/RA records, gradient cosine similarity, heatmaps and
//!   Pareto frontiers.
//! - [`stats`]: ordinary least squares with Student-t inference.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attacks;
pub mod data;
pub mod ensemble;
mod error;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod stats;
pub mod trainer;
pub mod zoo;

pub use error::{Error, Result};
pub use nn::{Network, Scalar, Shape, Tensor};
