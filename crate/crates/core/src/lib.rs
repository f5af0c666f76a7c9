//! Designed quadrature: rules with few positive-weight nodes that integrate
//! a prescribed polynomial space exactly, built by a penalized Gauss-Newton
//! solve of the moment equations with node elimination.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod basis;
pub mod design;
pub mod domain;
pub mod error;
pub mod index_set;
pub mod io;
pub mod moment;
pub mod solver;
pub mod sparse_grid;
pub mod verify;

pub use error::{Error, Result};
