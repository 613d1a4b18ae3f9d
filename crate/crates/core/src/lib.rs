//! Numerics for the bits-samples storage scaling law
//! `Err(n, L) = Err* + A·n^(-α) + B·L^(-β)`.
//!
//! The crate is `no_std` (it needs `alloc`). It covers:
//!
//! * [`model`]: the multiscale linear model with block-isotropic power-law
//!   spectrum and the truncation compressor that keeps the coarsest levels.
//! * [`ridge`]: ridge regression on truncated features, the exact population
//!   test error, and the replicate/sweep Monte Carlo driver.
//! * [`theory`]: deterministic-equivalent risk (effective regularization,
//!   degrees of freedom, bias, variance and truncation tail).
//! * [`fit`]: fitting the five-parameter scaling law to an observation grid.
//! * [`allocation`]: storage-constrained optimal `(n, L)` splits and baselines.
//! * [`grid`] and [`plan`]: observation grids, stratified subsets and
//!   randomized compression-level plans under a byte budget.
//!
//! File formats, parallel sweeps and the command-line tool live in the
//! `storage-scaling-lab` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod allocation;
mod error;
pub mod fit;
pub mod grid;
mod math;
pub mod model;
pub mod plan;
pub mod ridge;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use grid::{Observation, ObservationGrid};
pub use model::{BlockVector, SpectrumConfig};
pub use rng::StreamKey;
