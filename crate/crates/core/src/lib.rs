//! Multi-fidelity parametric reduced-order models for problems with many
//! inputs and field-valued outputs.
//!
//! The main pipeline ([`rom::train_mf_pcas`]) reduces HF and LF snapshots
//! with POD, aligns the LF latent coordinates onto the HF frame by
//! Procrustes analysis, finds a per-mode active subspace from gradients of
//! a multi-fidelity surrogate, and fits hierarchical Kriging on the reduced
//! inputs.

pub mod alignment;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod kriging;
pub mod linalg;
pub mod metrics;
pub mod par;
pub mod pod;
pub mod rom;
pub mod subspace;

pub use error::{Error, Result};
