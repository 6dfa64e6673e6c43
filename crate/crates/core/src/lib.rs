//! Finite-element simulation of dynamic Maxwell viscoelasticity on a domain
//! with a prescribed growing crack.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod energy;
pub mod error;
pub mod expr;
pub mod fe;
pub mod linalg;
pub mod materials;
pub mod memory;
pub mod mesh;
pub mod problem;
pub mod scenario;
pub mod stepper;

pub use error::{Error, Result};
