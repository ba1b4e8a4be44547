//! Finite element solver for the steady dimensionless reaction-convection-diffusion
//! equation with micromorphic artificial diffusion.

pub mod analysis;
pub mod assembly;
pub mod benchmarks;
pub mod config;
pub mod error;
pub mod fem;
pub mod io;
pub mod linsolve;
pub mod mesh;
pub mod stabilization;
pub mod verify;

pub use assembly::{assemble, solve_case, SolutionField, SparseSystem};
pub use config::{Method, ProblemConfig, Source, Velocity};
pub use error::{Error, Result};
pub use mesh::StructuredMesh;
