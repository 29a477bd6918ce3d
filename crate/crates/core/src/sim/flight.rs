use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::classify::{Classifier, GaitClassification, Thresholds};
use super::telemetry::{Telemetry, TelemetryRow};
use super::{integrate, Controller, FeedbackController, Plant, VehicleState};
use crate::control::{ControlGains, Reference};
use crate::linearization::{output_rates, OutputVector};
use crate::model::{Attitude, Gait, RotorSpeeds, VehicleParams};

/// Initial condition of a flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: Attitude,
    pub body_rates: Vector3<f64>,
    /// Magnitude of every rotor speed, signs follow the (-, +, -, +) pattern.
    pub rotor_speed: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            attitude: Attitude::default(),
            body_rates: Vector3::zeros(),
            rotor_speed: 300.0,
        }
    }
}

impl InitialConditions {
    pub fn state(&self) -> VehicleState {
        VehicleState {
            position: self.position,
            velocity: self.velocity,
            rotation: crate::model::rotation_matrix(&self.attitude),
            body_rates: self.body_rates,
            rotors: RotorSpeeds::symmetric(self.rotor_speed),
            time: 0.0,
        }
    }
}

/// Everything one closed-loop flight depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: VehicleParams,
    pub gains: ControlGains,
    pub gait: Gait,
    pub initial: InitialConditions,
    /// Constant output reference `(roll, pitch, yaw, z)`.
    pub reference: Vector4<f64>,
    pub dt: f64,
    pub duration: f64,
    pub thresholds: Thresholds,
    /// Optional clamp on every |rotor speed| (rad/s), applied after each step.
    pub rotor_speed_cap: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            params: VehicleParams::default(),
            gains: ControlGains::default(),
            gait: Gait::ZERO,
            initial: InitialConditions::default(),
            reference: Vector4::zeros(),
            dt: 1e-3,
            duration: 10.0,
            thresholds: Thresholds::default(),
            rotor_speed_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimConfigError {
    #[error("dt must be positive and finite, got {0}")]
    Step(f64),
    #[error("duration {duration} must be at least dt {dt}")]
    Duration { duration: f64, dt: f64 },
    #[error("vehicle parameter {0} must be positive")]
    Param(&'static str),
    #[error("{0}")]
    Gait(String),
    #[error("rotor speed cap must be positive, got {0}")]
    Cap(f64),
}

impl SimConfig {
    pub fn with_gait(mut self, gait: Gait) -> Self {
        self.gait = gait;
        self
    }

    pub fn validate(&self) -> Result<(), SimConfigError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimConfigError::Step(self.dt));
        }
        if !(self.duration >= self.dt) {
            return Err(SimConfigError::Duration {
                duration: self.duration,
                dt: self.dt,
            });
        }
        self.params.validate().map_err(SimConfigError::Param)?;
        self.gait.validate().map_err(SimConfigError::Gait)?;
        if let Some(cap) = self.rotor_speed_cap {
            if !(cap > 0.0) {
                return Err(SimConfigError::Cap(cap));
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> Plant {
        Plant {
            params: self.params,
            gait: self.gait,
        }
    }

    pub fn controller(&self) -> FeedbackController {
        FeedbackController {
            plant: self.plant(),
            gains: self.gains,
            reference: Reference::constant(self.reference),
            singularity_threshold: self.thresholds.det_threshold,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

fn sample(state: &VehicleState, det: f64, ma4: f64) -> TelemetryRow {
    let y = OutputVector::of(state).0;
    let rate = output_rates(state);
    TelemetryRow {
        t: state.time,
        y: y.into(),
        y_rate: rate.into(),
        rotors: state.rotors.0.into(),
        det,
        ma4,
        xy: [state.position.x, state.position.y],
    }
}

/// Flies `config` with `controller`, handing each sample to `sink` and
/// stopping at the first sample that trips an abort or divergence rule.
pub(crate) fn fly(
    config: &SimConfig,
    controller: &dyn Controller,
    classifier: &mut Classifier,
    mut sink: impl FnMut(TelemetryRow),
) {
    let plant = config.plant();
    let n = config.steps();
    let mut state = config.initial.state();
    for k in 0..=n {
        // step count, not accumulated dt, sets the clock
        state.time = k as f64 * config.dt;
        let command = if state.is_finite() {
            controller.command(&state)
        } else {
            Err(crate::linearization::SingularDecoupling {
                det: f64::NAN,
                threshold: config.thresholds.det_threshold,
            })
        };
        let (det, ma4) = match &command {
            Ok(c) => c
                .decoupling
                .map_or((f64::NAN, f64::NAN), |d| (d.det, d.drift[3])),
            Err(e) => (e.det, f64::NAN),
        };
        let row = sample(&state, det, ma4);
        sink(row);
        if classifier.push(&row).is_some() || k == n {
            break;
        }
        let Ok(command) = command else { break };
        state = integrate(&state, &command.input, &plant, config.dt);
        if let Some(cap) = config.rotor_speed_cap {
            state.rotors = RotorSpeeds(state.rotors.0.map(|v| v.clamp(-cap, cap)));
        }
    }
}

/// Closed-loop flight with the feedback-linearizing controller.
pub fn run(config: &SimConfig) -> (Telemetry, GaitClassification) {
    let mut classifier = Classifier::new(
        config.thresholds,
        config.reference,
        config.duration,
        config.dt,
    );
    let mut rows = Vec::with_capacity(config.steps() + 1);
    fly(config, &config.controller(), &mut classifier, |r| rows.push(r));
    let telemetry = Telemetry {
        rows,
        duration: config.duration,
        dt: config.dt,
        reference: config.reference,
    };
    (telemetry, classifier.finish())
}

/// Same verdict as [`run`] without keeping the record.
pub fn run_classification(config: &SimConfig) -> GaitClassification {
    let mut classifier = Classifier::new(
        config.thresholds,
        config.reference,
        config.duration,
        config.dt,
    );
    fly(config, &config.controller(), &mut classifier, |_| {});
    classifier.finish()
}

/// Flies `config` open loop under an arbitrary controller, e.g. for
/// free-fall or constant-input checks.
pub fn run_with(config: &SimConfig, controller: &dyn Controller) -> (Telemetry, GaitClassification) {
    let mut classifier = Classifier::new(
        config.thresholds,
        config.reference,
        config.duration,
        config.dt,
    );
    let mut rows = Vec::new();
    fly(config, controller, &mut classifier, |r| rows.push(r));
    let telemetry = Telemetry {
        rows,
        duration: config.duration,
        dt: config.dt,
        reference: config.reference,
    };
    (telemetry, classifier.finish())
}
