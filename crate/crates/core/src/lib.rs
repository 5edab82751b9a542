//! Variational solver for the singular critical equation
//!
//! ```text
//! -Δu + V u = B |u|^{2*-2} u + A / (|u|^{2*} u),   2* = 2N / (N - 2)
//! ```
//!
//! on radial `R^N` and the flat torus, through an ε-regularized
//! mountain-pass scheme with continuation `ε -> 0+`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admissibility;
pub mod coefficients;
pub mod continuation;
pub mod domain;
pub mod error;
pub mod functional;
pub mod io;
pub mod linalg;
pub mod mountain_pass;
pub mod verify;

pub use domain::{Domain, DomainKind, DomainSpec, Field};
pub use error::{Error, Result};
