//! High-index saddle dynamics for degenerate saddle points on critical
//! manifolds, with diagnostics that check the local convergence and
//! gradient-alignment behaviour numerically.

// `!(x <= tol)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod eigen;
pub mod energy;
pub mod error;
pub mod linalg;
pub mod manifold;
pub mod verify;

pub use error::{Error, Result};
