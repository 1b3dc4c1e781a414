//! Image quality prediction by recurrent pooling of patch features.
//!
//! An image is tiled into overlapping square patches at full and half
//! resolution. Each patch becomes a feature vector, vectors are ordered by
//! the spatial activity of their patch, and the resulting sequence is
//! regressed to a single score by a stack of GRU layers. An average-pooling
//! head is provided for comparison.

pub mod activity;
pub mod downscale;
pub mod error;
pub mod features;
pub mod manifest;
pub mod metrics;
pub mod multires;
pub mod nn;
pub mod par;
pub mod patch;
pub mod pipeline;
pub mod train;
pub mod types;

#[doc(hidden)]
pub mod testing;

pub use error::{Error, ItemError, Result};
pub use types::{FeatureSequence, FeatureVector, ImageBuffer, Patch, ScaleGroup};
