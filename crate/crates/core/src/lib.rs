//! Spectral Monge–Ampère solver and intersection calculus on flat complex tori.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod error;
pub mod forms;
pub mod geometry;
pub mod inequalities;
pub mod ma_solver;
pub mod matrix;
pub mod positivity;
pub mod sampling;

pub use error::{Error, Result};
pub use forms::{
    intersection_numbers, mixed_discriminant, positivity_margin, trace_with_respect_to, wedge_integral,
    HermitianFormField, IntersectionTable,
};
pub use geometry::{ddbar, make_torus, poisson_solve, quadrature, Normalization, ScalarField, Torus, TrigPoly};
pub use matrix::HermitianMatrix;
