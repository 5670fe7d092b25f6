//! Fitting smooth manifolds to sampled sets through jet bundles.

pub mod error;
pub mod geometry;
pub mod bundles;
pub mod jets;
pub mod refinement;
pub mod topology;
pub mod pasting;
pub mod harness;
mod linalg;

pub use error::{Error, Result};
