//! Differentially private publication of aggregated mobility histograms.
//!
//! The crate covers the whole pipeline on in-memory data:
//!
//! * [`data`]: grids, trajectory records, count histograms and their L1 geometry.
//! * [`dp`]: seeded randomness, Laplace noise, exponential-mechanism selection and
//!   budget accounting.
//! * [`schemes`]: direct, threshold (sparse-vector), static-hybrid and
//!   dynamic-hybrid perturbation.
//! * [`postprocess`]: projection of noisy releases back to non-negative integer
//!   histograms with preserved totals.
//! * [`attack`]: a trajectory-recovery adversary built on linear sum assignment.
//! * [`synth`]: a day/night synthetic mobility generator.
//! * [`metrics`]: MAE / MRE utility scores.
//!
//! Timestamp indices are zero-based throughout; windows are inclusive on both ends.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is disabled.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attack;
pub mod data;
pub mod dp;
mod error;
pub mod metrics;
pub mod postprocess;
pub mod schemes;
pub mod synth;

pub use error::{Error, Result};
