//! Coverage probability and area spectral efficiency of a D2D-underlay
//! uplink cellular network with LoS/NLoS path loss, lognormal shadowing and
//! threshold-based mode selection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod equivmap;
pub mod error;
pub mod mcsim;
pub mod netmodel;
pub mod numerics;

pub use error::{Error, Result};
