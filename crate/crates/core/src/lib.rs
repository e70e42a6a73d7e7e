//! Good-feature selection and active good-feature matching for
//! least-squares camera pose tracking.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod matching;
pub mod metrics;
pub mod optimizer;
pub mod selection;
pub mod simworld;
pub mod uncertainty;

pub use error::{Error, Result};
