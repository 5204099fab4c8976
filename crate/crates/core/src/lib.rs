//! Chiller-plant power modeling and control optimization.
//!
//! The crate is organized around the two-step model-based optimization loop
//! used to run a chiller plant efficiently:
//!
//! 1. **System identification** — fit power models for each plant component:
//!    cubic frequency/power laws for fans and pumps ([`devicefit`]) and
//!    monotonicity-constrained neural networks for the chiller ([`netcore`],
//!    [`mnn`], [`losses`]).
//! 2. **Optimization** — minimize predicted total power over the control box,
//!    either offline against the assembled surrogate ([`mbo`]) or online
//!    against the live plant with local gradient estimates ([`aoi`]).
//!
//! A synthetic plant with known monotone ground truth ([`simulator`]) backs
//! all verification; [`io`] holds the CSV/config file formats shared with the
//! command-line tools.

pub mod aoi;
pub mod devicefit;
mod error;
pub mod io;
pub mod losses;
pub mod mbo;
pub mod mnn;
pub mod model;
pub mod netcore;
pub mod plant;
pub mod simulator;

pub use error::{Error, Result};
