//! Optimization-driven volumetric growth in 2D linearized elasticity.
//!
//! At every time step the per-element growth tensor is the minimizer of an
//! objective (external work or deformed perimeter) plus a minimizing-movements
//! penalty, subject to FEM equilibrium, a mass balance and accretion
//! (positive semidefinite increments). Steps are available in closed form
//! and through an exact numerical solver.

pub mod config;
pub mod constraints;
pub mod error;
pub mod evolution;
pub mod fem;
pub mod mesh;
pub mod objectives;
pub mod output;
pub mod postprocess;
pub mod selftest;
pub mod solver;

pub use constraints::{BalanceMode, BalanceRelation, GrowthField, MassBalance};
pub use error::{Error, Result};
pub use evolution::{run, BcKind, History, Scenario, Simulation};
pub use fem::{AssembledSystem, ElasticLaw, ShearWeight};
pub use mesh::TriMesh;
pub use objectives::Objective;
pub use solver::{SolverConfig, SolverPath, StepResult};
