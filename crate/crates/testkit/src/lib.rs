//! Test support for blendrec: random toy datasets, deliberately naive
//! reference implementations of every predictor, finite-difference gradient
//! checks, and the property checks shared by the integration tests and the
//! acceptance suite.
//!
//! Nothing here reuses the library's numerical code paths; the reference
//! implementations work on dense `Option<f64>` tables with plain loops.

pub mod checks;
pub mod gradcheck;
pub mod naive;
pub mod toy;
