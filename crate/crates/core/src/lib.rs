//! Incompressible channel flow on a staggered grid with obstacles modelled
//! as regions of very high viscosity.
//!
//! The solver marches the stationary Navier-Stokes (or Stokes) system to
//! steady state with an incremental pressure-correction scheme. The
//! [`harness`] module drives viscosity sweeps against a rigid-obstacle
//! reference and writes CSV and VTK output.

mod accel;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod harness;
mod implicit;
pub mod linalg;
pub mod operators;
pub mod poisson;
pub mod solver;

pub use error::{Error, Result};
pub use geometry::{ObstacleShape, ViscositySpec};
pub use grid::{make_grid, ScalarField, StaggeredGrid, VelocityField};
