//! Finite element toolkit for nonlinear PDEs on triangular meshes, built
//! around precomputed multi-linear forms: nonlinear terms are interpolated
//! onto a nodal approximation space so that iteration loops reduce to
//! sparse tensor contractions and pointwise updates, with no quadrature.

pub mod assembly;
pub mod bench;
pub mod elements;
pub mod error;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
