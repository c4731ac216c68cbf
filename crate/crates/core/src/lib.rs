//! Simulation of particle systems uniformly coupled to a macroscopic
//! component through a full-rank constraint.
//!
//! Every particle keeps a shared constraint function `g(X_i, y)` at its
//! initial value, which slaves particle velocities to the macroscopic
//! velocity and folds the coupling into an effective mass and force for the
//! macroscopic Newton law. The crate provides:
//!
//! - the constraint catalogue with the velocity-transfer map `Phi` and
//!   curvature term `Omega` ([`constraint`]),
//! - the N-particle ODE model and the mean-field characteristic flow over
//!   weighted point clouds, driven by one shared kernel ([`particle`],
//!   [`meanfield`], [`dynamics`]),
//! - Lagrange-multiplier recovery and constrained-Newton residuals
//!   ([`dae`]),
//! - exact `W_1` optimal-transport distances with cross-checking routes
//!   ([`transport`]),
//! - reproducible experiment drivers for consistency, stability, and
//!   mean-field convergence ([`experiments`]), and
//! - the config/dispatch layer behind the command-line interface
//!   ([`config`], [`harness`]).

pub mod cloud;
pub mod config;
pub mod constraint;
pub mod dae;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod force;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod meanfield;
pub mod particle;
pub mod rng;
pub mod transport;

pub use cloud::{Distribution, WeightedPointCloud};
pub use constraint::{ConstraintModel, Coupling, PhiOmega};
pub use dynamics::{CoupledState, ExecMode, IntegrateOptions, Scheme, Trajectory};
pub use error::{CoreError, Result};
pub use force::{ForceField, PotentialKind};
pub use meanfield::FlowState;
pub use particle::SystemState;
