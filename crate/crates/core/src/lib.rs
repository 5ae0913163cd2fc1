//! Hybrid rating prediction by blending a roster of recommenders.
//!
//! The crate is organised around the three stages of the system:
//!
//! * [`recommenders`] trains the individual rating predictors (neighborhood
//!   collaborative filtering, latent factors, an item autoencoder, per-user
//!   content forests and two averaging baselines).
//! * [`pipeline::build_blendset`] runs them under cross-validation and collects
//!   their out-of-fold predictions together with [`metafeatures`] into a
//!   [`pipeline::Blendset`].
//! * [`blenders`] fits second-level regressors on the blendset, and
//!   [`pipeline::nested_cv`] selects and scores them with nested
//!   cross-validation.

pub mod blenders;
pub mod config;
pub mod data;
pub mod error;
pub mod metafeatures;
pub mod pipeline;
pub mod recommenders;
pub mod seed;
pub mod tree;

pub use error::{Error, Result};

/// Lowest rating on the scale.
pub const MIN_RATING: f64 = 1.0;
/// Highest rating on the scale.
pub const MAX_RATING: f64 = 5.0;

/// Clamps a score to the rating scale.
#[inline]
pub fn clamp_rating(x: f64) -> f64 {
    x.clamp(MIN_RATING, MAX_RATING)
}
