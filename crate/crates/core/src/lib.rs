//! Fixed-gait tiltrotor toolkit: rigid-body model, feedback-linearizing
//! attitude/altitude control, decoupling-matrix invertibility analysis and
//! batch gait exploration.

pub mod acceptance;
pub mod config;
pub mod contour;
pub mod control;
pub mod explore;
pub mod invertibility;
pub mod linalg;
pub mod linearization;
pub mod model;
pub mod sim;
mod state;

pub use config::{ConfigError, Settings};
pub use contour::GridSpec;
pub use control::{ControlGains, Reference};
pub use explore::{AdmissibleRegionReport, CriticalGaitResult, ExplorationDirection};
pub use invertibility::{GaitRestriction, RestrictionKind, TriangleRegion, ZeroCurveSet};
pub use linearization::{DecouplingMatrix, NewInput, OutputVector, SingularDecoupling};
pub use model::{Attitude, Gait, RotorSpeeds, SignedSquares, VehicleParams};
pub use sim::{GaitClassification, SimConfig, Telemetry, Thresholds, Verdict};
pub use state::VehicleState;
