#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod market;
pub mod pricing;
pub mod process;
pub mod quad;
pub mod sampling;
pub mod special;
