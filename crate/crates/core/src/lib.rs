// NaN-rejecting `!(a <= b)` guards are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod imputation;
pub mod linalg;
pub mod logit;
pub mod selection;
pub mod simulation;
pub mod variance;

pub use error::{Error, Result};
