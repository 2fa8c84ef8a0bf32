//! Ḣ¹ geometry of densities on the circle and the flat 2-torus.
//!
//! Densities of fixed mass are mapped by the pointwise square root onto a
//! round sphere in L², where distances, geodesics and the generalized
//! Hunter-Saxton flow have closed forms. The crate provides:
//!
//! - [`grid`]: periodic grids, quadrature and spectral calculus
//! - [`density`]: densities and their square roots on the sphere
//! - [`spheregeo`]: distances, great-circle geodesics, inner products, gradients
//! - [`hsflow`]: closed-form Hunter-Saxton geodesics, blowup and particle flows
//! - [`moser`]: diffeomorphisms realizing a prescribed Jacobian
//! - [`onedee`]: α-connections and 1D Euler-Arnold integrators
//! - [`integrability`]: angular momenta and commuting conserved chains
//! - [`simplex`]: the three-outcome probability simplex toy model
//! - [`expr`]: expression strings sampled on the grid
//! - [`cli`]: the `densgeo` command-line front end

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod density;
pub mod error;
pub mod expr;
pub mod grid;
pub mod hsflow;
pub mod integrability;
pub mod interp;
pub mod moser;
pub mod onedee;
pub mod simplex;
pub mod spectral;
pub mod spheregeo;

pub use error::{Error, Result};
pub use grid::{PeriodicGrid, ScalarField, VectorField};
