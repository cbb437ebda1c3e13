//! Multisensor fusion filtering for continuous-time linear systems observed
//! by discrete-time sensors.
//!
//! The crate provides:
//!
//! - per-sensor continuous-discrete Kalman filters ([`local_filter`]),
//! - exact propagation of the pairwise cross-covariances between local
//!   estimation errors ([`cross_covariance`]),
//! - optimal matrix-weighted fusion of the local estimates and the
//!   low-complexity covariance-intersection alternative ([`fusion`]),
//! - closed-form steady-state values for the scalar two-sensor system, used
//!   as an independent check on the dynamic code path ([`steady_state`]),
//! - ground-truth simulation and Monte Carlo error statistics ([`simulator`]).
//!
//! Scenario configuration and validation live in [`model`]; the fixed-step
//! Runge-Kutta machinery shared by the filters is in [`integrator`].

pub mod cross_covariance;
pub mod error;
pub mod fusion;
pub mod integrator;
pub mod local_filter;
pub mod model;
pub mod numeric;
pub mod simulator;
pub mod steady_state;

pub use error::{Error, Result};
pub use model::{
    load_scenario, parse_scenario, scenario_to_toml, validate_scenario, Drift, GaussianBelief,
    InitialBelief, Scenario, SensorModel, StateModel, Violation, ViolationKind,
};
