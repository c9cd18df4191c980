//! Desk-scale numerics for gluing Dirac-type operators along long necks.
//!
//! The cross-section is a finite-dimensional Hermitian system, so every
//! operator reduces to a first-order linear ODE `u' = (D + A(t) - lambda J) u`
//! on an interval with lagrangian boundary conditions.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod analysis;
pub mod boundary;
pub mod check;
pub mod cli;
pub mod config;
pub mod eigen;
pub mod ends;
pub mod error;
pub mod glue;
pub mod linalg;
pub mod models;
pub mod necks;
pub mod par;
pub mod subspaces;

pub use error::{Error, Result};
