//! Finite element laboratory for the sharp Sobolev quotient on polyhedral
//! approximations of the unit ball.
//!
//! The crate builds simplicial meshes of inscribed polytopes `B_h` of the unit
//! ball, assembles P1 (piecewise linear) functions vanishing on the polytope
//! boundary, and minimizes the Rayleigh quotient `|Du|_p / |u|_{p*}` over that
//! space.  Around the discrete minimizers it provides the radial extremal
//! family of the continuous problem, distance functionals to that family, and
//! a verification suite for the inequalities that drive the convergence-rate
//! analysis.

pub mod checks;
pub mod error;
pub mod experiments;
pub mod extremals;
pub mod fespace;
pub mod functionals;
pub mod gauss;
pub mod geom;
pub mod manifold;
pub mod mesh;
pub mod quad1d;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
