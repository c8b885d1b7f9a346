// `!(x > 0.0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Quantum associative memory: gate-level storage and retrieval on a dense
//! state-vector simulator, closed-form recall distributions, and the
//! effective thermodynamics used to tune recall accuracy.

pub mod error;
pub mod memory;
pub mod qsim;
pub mod recall;
pub mod thermo;
pub mod verify;

pub use error::{QamError, Result};
