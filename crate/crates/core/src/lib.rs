//! Steady 3D heat conduction on structured hexahedral grids and estimation of
//! the boundary heat flux on the hot face from interior temperature sensors.
//!
//! Two inverse methods are provided: an adjoint-based conjugate gradient
//! iteration ([`alifanov`]) and a Gaussian radial-basis parameterization with
//! an offline/online split ([`rbf_param`]).

pub mod alifanov;
pub mod config;
pub mod benchmarks;
pub mod error;
pub mod fvm;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod measurements;
pub mod rbf_param;
pub mod solvers;

pub use error::{Error, Result};
pub use grid::{PatchId, Point, StructuredGrid};
