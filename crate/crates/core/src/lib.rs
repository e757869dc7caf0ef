//! Flexible path discretization and path compression for UAV trajectory
//! design, with a max-min rate data-harvesting solver.

pub mod basis;
pub mod conic;
mod dd;
pub mod discretize;
pub mod error;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
pub use model::{PiecewiseTrajectory, Position3, Scenario, Schedule};
