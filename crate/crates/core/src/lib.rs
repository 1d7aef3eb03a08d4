//! Dynamic ambiguity sets for distributionally robust decisions over
//! uncertain dynamical systems.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ambiguity;
pub mod concentration;
pub mod distribution;
pub mod dynamics;
pub mod observability;
pub mod uav_scenario;
