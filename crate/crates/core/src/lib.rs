//! Interaction-locality measurement for recursive reasoning models.
//!
//! The crate builds task geometries, runs a small two-level recursive toy
//! model, and measures how far perturbations, Jacobian sensitivities and
//! sparse-autoencoder feature effects spread across positions.

pub mod bundle;
pub mod error;
pub mod geometry;
pub mod patching;
pub mod rng;
pub mod sae;
pub mod stats;
pub mod structural;
pub mod svg;
pub mod toymodel;
pub mod trace;

pub use error::{LocalityError, Result};
pub mod cli;
