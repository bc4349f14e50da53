//! Ergonomic motion planning over configuration-space distance fields.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod execution;
pub mod field;
pub mod grid;
pub mod kinematics;
pub mod penalty;
pub mod planner;
pub mod sampling;
pub mod target;
pub mod trajectory;
pub mod tsef;
