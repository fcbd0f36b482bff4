//! Time-optimal point-mass planning, velocity-graph replanning and a closed-loop quadrotor
//! simulator with a contouring tracker.

// Validation is written as `!(x > 0.0)` on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod episode;
pub mod path;
pub mod scenario;
pub mod pmm_axis;
pub mod sim;
pub mod tracker;
pub mod velocity_graph;
