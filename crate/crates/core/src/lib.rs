//! Subordinators constrained to stay above a moving boundary: models,
//! path simulation, crossing probabilities, conditioning and bounds.

// Negated comparisons reject NaN parameters along with out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod conditioning;
pub mod crossing;
pub mod envelope;
pub mod error;
pub mod levy;
pub mod path;
pub mod quad;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{CslError, Result};
