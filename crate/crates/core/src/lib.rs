//! Structure-preserving solver for the one-dimensional granular kinetic
//! equation
//!
//! ```text
//! ∂_t f + v ∂_x f = (λ/2) ∂_v (f ∂_v W * f),    W(v) = |v|^γ / γ
//! ```
//!
//! The inhomogeneous problem is split into a semi-Lagrangian transport in
//! `x` and a Fisher-regularised JKO collision step in `v`, both on
//! adaptively refined non-uniform grids.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common `f64` instantiation.

pub mod analytic;
pub mod diagnostics;
pub mod driver;
pub mod error;
pub mod initial;
pub mod grid;
pub mod jko;
pub mod kernels;
pub mod linalg;
pub mod meshmap;
pub mod pchip;
pub mod scalar;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Grid = grid::Grid1D<f64>;
pub type Field = grid::PhaseField<f64>;
pub type Kernel = kernels::KernelSpec<f64>;
