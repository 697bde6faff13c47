//! Arbitrary-order discontinuous skeletal discretisations on 2D polytopal
//! meshes: local gradient and potential reconstructions, lifting-based
//! stabilizations, gradient schemes for linear diffusion and the p-Laplace
//! equation, and measurable surrogates for the gradient-discretisation
//! quality functionals.
//!
//! All integrals use fixed quadrature rules chosen from the face degree k
//! (elements exact to 2k+6, faces to 2k+5). Non-polynomial integrands such
//! as manufactured sources or p-Laplace fluxes with non-even p are
//! integrated with the same rules; this consistent variational crime is the
//! standard practice and is assumed throughout.

pub mod basis;
pub mod discretization;
pub mod error;
pub mod gd_metrics;
pub mod geometry;
pub mod mesh;
pub mod operators;
pub mod projector;
pub mod quadrature;
pub mod scheme;
pub mod space;
pub mod sparse;
pub mod stabilization;
pub mod study;

pub use discretization::Discretization;
pub use error::{Error, Result};
pub use mesh::{MeshFamily, MeshFamilySpec, PolytopalMesh};
pub use operators::{ElementOps, FaceData, OperatorConfig};
pub use space::{DofLayout, GlobalDofVector, SpaceSpec};
pub use stabilization::StabKind;
