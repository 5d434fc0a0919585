//! # composite-cbf
//!
//! Collision-avoidance safety filter for multirotors built from a single
//! composite control barrier function.
//!
//! Thousands of point obstacles are turned into third-order barrier chains on a
//! rate/thrust-rate controlled vehicle model, blended with a saturated soft-min
//! into one barrier, and enforced together with a minimum-thrust barrier by a
//! tiny quadratic program sitting on top of a geometric tracking controller.
//!
//! ## Modules
//!
//! - [`vehicle`]: third-order multirotor dynamics, SO(3) helpers, RK4 stepping
//! - [`obstacles`]: point-obstacle maps, CSV ingestion, scene generators, K-nearest
//! - [`barrier`]: per-obstacle barrier chains and the thrust barrier
//! - [`composite`]: soft-min composition, Lie derivatives, virtual obstacle
//! - [`controller`]: nominal geometric controller and mission references
//! - [`filter`]: the safety QP, slack fallback and singularity monitor
//! - [`simulator`]: closed-loop harness, scenarios and trace files
//! - [`bench`]: composition timing study
//! - [`cli`]: the `ccbf` command-line driver

pub mod barrier;
pub mod bench;
pub mod check;
pub mod cli;
pub mod composite;
pub mod controller;
pub mod filter;
pub mod obstacles;
pub mod simulator;
pub mod vehicle;

pub use barrier::{
    chain_eval, thrust_barrier, ChainParams, ChainValues, ThrustBarrier, ThrustBarrierParams,
};
pub use composite::{compose, compose_numeric, CompositeEvaluation, CompositeParams};
pub use controller::{ControllerGains, GeometricController, Mission, ReferenceSetpoint, Setpoint};
pub use filter::{filter_step, BarrierEvaluation, FilterParams, FilterProblem, FilterResult};
pub use obstacles::{ObstacleMap, SceneKind, SceneSpec};
pub use simulator::{Scenario, TraceRecord};
pub use vehicle::{RateThrustInput, RotationMatrix, Vec3, VehicleParams, VehicleState};

use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("composite barrier needs at least one obstacle")]
    EmptyComposite,
    #[error("commanded force vanishes (|f_cmd| = {0:e})")]
    FreeFallCommand(f64),
    #[error("desired heading is parallel to the thrust axis")]
    DegenerateHeading,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("trace too short: {0}")]
    TraceTooShort(String),
    #[error("simulation aborted at t = {t:.3} s: {reason}")]
    Aborted { t: f64, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
