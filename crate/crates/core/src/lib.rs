//! Shape optimization of stationary incompressible Navier–Stokes flow in 2D.
//!
//! The crate covers the full loop: annulus meshing and deformation, Taylor–Hood
//! (P2/P1) discretization, Newton solves of the state equation, adjoint solves
//! for a tracking and a vorticity functional, boundary shape-gradient
//! densities, H1-smoothed descent directions, and the gradient algorithm with
//! its step-size heuristic.
//!
//! Everything numerical is generic over [`Scalar`]; the `f64` aliases at the
//! crate root are what the command-line tool and the tests use.

pub mod adjoint;
pub mod error;
pub mod fem;
pub mod flow;
pub mod mesh;
pub mod optim;
pub mod scalar;
pub mod shape;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mesh = mesh::Mesh2D<f64>;
pub type Curve = mesh::BoundaryCurve<f64>;
pub type Displacement = mesh::DisplacementField<f64>;
pub type Space = fem::FeSpace<f64>;
pub type Params = fem::FluidParams<f64>;
pub type Field = flow::FlowField<f64>;
pub type Target = flow::TargetField<f64>;
pub type Density = shape::BoundaryDensity<f64>;
pub type Outcome = optim::OptOutcome<f64>;
