//! Taylor–Hood P2/P1 finite elements on triangles.

pub mod assembly;
pub mod dofmap;
pub mod element;
pub mod params;
pub mod quadrature;
pub mod solver;
pub mod space;
pub mod sparse;

pub use assembly::{
    apply_dirichlet, assemble_convection, assemble_load, assemble_stokes, convection_vector, divergence_residual,
    ConvectionBlocks,
};
pub use dofmap::DofMap;
pub use params::{benchmark_force, FluidParams, VectorField};
pub use solver::{solve_linear, LinearSolver};
pub use space::FeSpace;
pub use sparse::{SparseOperator, TripletBuilder};
