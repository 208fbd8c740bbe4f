//! File formats, scheme dispatch, the experiment runner and the `mobdp` CLI.

pub use mobdp_core as core;

pub mod cli;
mod error;
pub mod experiment;
pub mod io;
pub mod publish;

pub use error::{Error, Result};
