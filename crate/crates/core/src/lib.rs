#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod geometry;
pub mod harness;
pub mod mmd;
pub mod perception;
pub mod planner_cem;
pub mod planner_scp;
pub mod qp;
pub mod trajectory;
pub mod uncertainty;
pub mod voxel;

pub use error::{Error, Result};
