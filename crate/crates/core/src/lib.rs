#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod expr;
pub mod forward;
pub mod fractional;
pub mod inverse;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
