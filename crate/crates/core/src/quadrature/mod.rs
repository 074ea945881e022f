//! Numerical integration infrastructure: special functions, Gauss–Legendre
//! panel rules, adaptive scalar quadrature, and the composite mass-coordinate
//! grid used by the operator machinery.

pub mod gauss;
pub mod grid;
pub mod integrate;
pub mod special;

pub use grid::{build_grid, GridFunction, Panel, QuadGrid};
pub use integrate::{integrate, integrate_tail, QuadResult};
