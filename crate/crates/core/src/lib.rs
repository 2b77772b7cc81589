//! Steering a team of point robots so that the spectral moments of their
//! position-dependent weighted adjacency matrix converge to prescribed values.
//!
//! The modules build on each other:
//!
//! - [`network`]: adjacency `a_ij = exp(-c ||x_i - x_j||)`, moments, spectra,
//!   and a walk-enumeration oracle for matrix powers.
//! - [`gradient`]: moment-matching cost, barrier potential, and the analytic
//!   control law, plus central finite differences for checking them.
//! - [`dynamics`]: accept/reject integration of the barrier-augmented flow.
//! - [`scenarios`]: presets, seeded random starts, formations and validation.
//! - [`schema`] and [`report`]: scenario files and run outputs.
//! - [`verify`]: randomized oracle suite.

pub use nalgebra;

pub mod dynamics;
pub mod error;
pub mod gradient;
pub mod network;
pub mod report;
pub mod scenarios;
pub mod schema;
pub mod verify;

pub use dynamics::{simulate, SimulationSettings, Termination, TrajectoryRecord};
pub use error::{Error, Result};
pub use gradient::{control_law, cost, ControllerParams};
pub use network::{
    build_adjacency, configuration_moments, eigenvalues, spectral_moments, Metric, MomentVector, RobotConfiguration,
    WeightedAdjacency,
};
pub use scenarios::{preset, validate_scenario, Scenario, TargetSpectrum};
