//! Simulation and exact verification toolkit for the two-dimensional Villain
//! model, the lattice Coulomb gas, the discrete Gaussian free field and the
//! integer-valued Gaussian free field on square grids embedded in the sphere.

pub mod calculus;
pub mod enumerate;
pub mod error;
pub mod estimators;
pub mod ig;
pub mod lattice;
pub mod linalg;
pub mod oracle;
pub mod samplers;
pub mod transforms;

pub use error::{Error, Result};
pub use lattice::{build_lattice, dual_geometry, BoundaryCondition, LatticeGeometry};
