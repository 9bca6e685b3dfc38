//! Perfect sampling of quantum Gibbs states with voter coupling from the past.
//!
//! The crate simulates the whole pipeline exactly at desk scale: a Hamiltonian
//! is resolved into energy levels, a lumpable (eigenbasis preserving) channel
//! induces a classical chain on those levels, a simulated phase-estimation
//! oracle reports noisy transitions of that chain, and the voter-CFTP engine
//! turns the transitions into certified samples of the Gibbs distribution.
//! The [`analysis`] module evaluates the stability and run-time bounds next to
//! the quantities they predict.

pub mod analysis;
pub mod cftp;
pub mod channels;
mod error;
pub mod linalg;
pub mod manifest;
pub mod phase_estimation;
pub mod spectral;

pub use error::{Error, Result};
