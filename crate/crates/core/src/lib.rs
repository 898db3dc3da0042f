//! Reduced-order surrogate constitutive laws for parameterized hyperelastic
//! microstructures.
//!
//! The offline stage solves periodic cell problems on meshes morphed from a
//! single parent mesh, compresses the pulled-back stress fields by POD and
//! regresses the POD coefficients with Gaussian processes. The online stage
//! evaluates effective stress and stiffness inside a macroscopic solver.

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod macrofem;
pub mod material;
pub mod mesh;
pub mod microfem;
pub mod morph;
pub mod pipeline;
pub mod regress;
pub mod rom;
pub mod sparse;
pub mod surrogate;
pub mod tensor;

pub use error::{Error, Result};
