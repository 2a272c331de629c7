//! Gaussian random fields from fractional-order SPDEs, discretized with P1
//! finite elements and a rational approximation of the fractional power.

pub mod convergence;
pub mod covariance;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod inference;
pub mod mesh;
pub mod model;
pub mod quadrature;
pub mod rational;
pub mod sparse;
pub mod special;

pub use error::{Error, Result};
pub use fem::{
    assemble, matern_operators, normalize_spectrum, Boundary, FemOperators, ReactionMass, ScalarField, TensorField,
};
pub use mesh::{build_rect_mesh, MeshSpec, Rect, TriMesh};
pub use model::{QuadratureModel, SpdeModel};
pub use rational::RationalApprox;
pub use sparse::{CholFactor, LuFactor, Ordering, SparseMat};
