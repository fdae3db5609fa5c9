//! Numerical toolkit for quadratic energies with random convolution-type
//! coefficients.
//!
//! The library estimates the effective (homogenized) tensor of energies of
//! the form
//!
//! ```text
//!   E(u) = ∬ b(x, y) (u(y) - u(x))^2 dy dx ,    b(x, y) = B(x) B(y) a(x - y)
//! ```
//!
//! by solving constrained minimum problems on large boxes with affine
//! boundary data ("cell problems"), extrapolating in the box size R and the
//! interaction truncation K, and polarizing the resulting quadratic form.
//! Alongside the estimator it ships direct numerical checks of the
//! functional inequalities that drive the convergence analysis (local
//! averaging bounds, multi-step estimates, Poincaré inequalities, long-range
//! tail bounds) and a reproducible experiment harness with a small CLI.

pub mod cell;
pub mod env;
pub mod error;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod inequalities;
pub mod kernel;
pub mod lattice;
pub mod solver;

pub use error::Error;
