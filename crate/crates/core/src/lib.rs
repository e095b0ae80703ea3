#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod harness;
pub mod matchhead;
pub mod minidet;
pub mod numerics;
pub mod params;
pub mod synthdata;
pub mod weightgen;

pub use error::{Error, Result};
