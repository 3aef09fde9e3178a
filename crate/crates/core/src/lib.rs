//! Learning representational disparities between an observed and a desired
//! decision process.
//!
//! The crate is organized bottom-up:
//!
//! * [`diffcore`]: scalar reverse-mode differentiation.
//! * [`model`]: the network and its parameter layout.
//! * [`objectives`]: the four losses and their weighted total.
//! * [`training`]: Adam, the two-phase protocol and restarts.
//! * [`theory`]: closed-form and numerical optima for single-node settings.
//! * [`data`]: generators, outcome injection, preprocessing and CSV IO.
//! * [`metrics`]: evaluation metrics.
//! * [`experiment`]: configuration and the end-to-end harness behind the CLI.

pub mod data;
pub mod diffcore;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod seed;
pub mod theory;
pub mod training;

pub use error::{Error, Result};
