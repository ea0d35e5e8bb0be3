//! Configuration, sweep orchestration, optimal-threshold search and
//! result emission for the D2D-underlay coverage engines.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod optimize;
pub mod output;
pub mod sweep;
pub mod validate;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const INFEASIBLE: i32 = 4;
}
