#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod effects;
pub mod error;
pub mod logdet;
pub mod mcem;
pub mod model;
pub mod sampler;
pub mod simkit;
pub mod sparse;

pub use error::{Error, Result};
