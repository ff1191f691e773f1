//! Simulation of photon absorption in a fiber as single-excitation
//! photon/phonon dynamics, its suppression by frequent QND photon-number
//! measurements, and the derived planning tools for QND-instrumented links
//! and fiber-loop memories.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod model;
pub mod planner;
pub mod qnd;
pub mod regime;
pub mod zeno;

pub use error::{Error, Result};
