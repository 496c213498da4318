//! Numerical laboratory for energy-momentum tensors of radial Lagrangians.
//!
//! For `L(ξ, η) = F(|ξ|, η)` the crate solves the Euler–Lagrange equation
//! with homogeneous Dirichlet data on embedded-boundary Cartesian grids,
//! assembles `T = ∇u ⊗ L_ξ - L·Id`, and checks its spectral structure, the
//! P-function `λ₁ = |∇u| F_p - F`, Rellich–Pohozaev type integral
//! identities and the resulting gradient bounds.

// `!(x > 0.0)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod export;
pub mod expr;
pub mod geometry;
pub mod identities;
pub mod jet;
pub mod lagrangian;
pub mod pfunction;
pub mod pipeline;
pub mod solver;
pub mod tensor;

pub use geometry::{DiscreteDomain, Shape, ShapeKind};
pub use lagrangian::{Jet2, LagrangianModel, Potential};
pub use solver::{SolveResult, SolverConfig};
