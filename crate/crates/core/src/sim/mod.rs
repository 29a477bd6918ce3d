//! Truth-model integration and closed-loop flights.
//!
//! The truth model propagates the rotation matrix directly (`R' = R hat(w)`),
//! while the controller works on Euler angles extracted from it and treats
//! body rates as Euler rates.

mod classify;
mod flight;
mod telemetry;

pub use classify::{classify, Classifier, GaitClassification, Reason, Thresholds, Verdict};
pub use flight::{run, run_classification, run_with, InitialConditions, SimConfig, SimConfigError};
pub use telemetry::{write_telemetry_csv, Telemetry, TelemetryRow, TELEMETRY_COLUMNS};

use nalgebra::{Matrix3, Vector3, Vector4};

use crate::control::{output_command, ControlGains, Reference};
use crate::linearization::{
    build_decoupling, invert_allocate, output_rates, output_second_derivative, DecouplingMatrix,
    NewInput, OutputVector, SingularDecoupling,
};
use crate::model::{angular_accel, hat, translational_accel, Gait, RotorSpeeds, VehicleParams};
pub use crate::state::VehicleState;

/// The airframe and its frozen gait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plant {
    pub params: VehicleParams,
    pub gait: Gait,
}

/// Time derivative of every [`VehicleState`] field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub body_rates: Vector3<f64>,
    pub rotors: Vector4<f64>,
}

pub fn derivative(state: &VehicleState, input: &NewInput, plant: &Plant) -> StateDerivative {
    StateDerivative {
        position: state.velocity,
        velocity: translational_accel(&state.rotation, &state.rotors, &plant.gait, &plant.params),
        rotation: state.rotation * hat(&state.body_rates),
        body_rates: angular_accel(&state.rotors, &plant.gait, &plant.params),
        rotors: input.0,
    }
}

fn advance(state: &VehicleState, d: &StateDerivative, h: f64) -> VehicleState {
    VehicleState {
        position: state.position + d.position * h,
        velocity: state.velocity + d.velocity * h,
        rotation: state.rotation + d.rotation * h,
        body_rates: state.body_rates + d.body_rates * h,
        rotors: RotorSpeeds(state.rotors.0 + d.rotors * h),
        time: state.time + h,
    }
}

/// Gram-Schmidt on the columns; the third column is rebuilt as a cross
/// product so the result is a proper rotation.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let x = r.column(0).normalize();
    let y_raw = r.column(1) - x * x.dot(&r.column(1));
    let y = y_raw.normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

/// One classical RK4 step with `input` held over the step, followed by
/// re-orthonormalization of the attitude.
pub fn integrate(state: &VehicleState, input: &NewInput, plant: &Plant, dt: f64) -> VehicleState {
    let k1 = derivative(state, input, plant);
    let k2 = derivative(&advance(state, &k1, 0.5 * dt), input, plant);
    let k3 = derivative(&advance(state, &k2, 0.5 * dt), input, plant);
    let k4 = derivative(&advance(state, &k3, dt), input, plant);
    let sixth = dt / 6.0;
    let mut next = VehicleState {
        position: state.position
            + (k1.position + 2.0 * k2.position + 2.0 * k3.position + k4.position) * sixth,
        velocity: state.velocity
            + (k1.velocity + 2.0 * k2.velocity + 2.0 * k3.velocity + k4.velocity) * sixth,
        rotation: state.rotation
            + (k1.rotation + 2.0 * k2.rotation + 2.0 * k3.rotation + k4.rotation) * sixth,
        body_rates: state.body_rates
            + (k1.body_rates + 2.0 * k2.body_rates + 2.0 * k3.body_rates + k4.body_rates) * sixth,
        rotors: RotorSpeeds(
            state.rotors.0 + (k1.rotors + 2.0 * k2.rotors + 2.0 * k3.rotors + k4.rotors) * sixth,
        ),
        time: state.time + dt,
    };
    next.rotation = orthonormalize(&next.rotation);
    next
}

/// What a controller hands to the integrator for one step.
#[derive(Debug, Clone, Copy)]
pub struct Command {
    pub input: NewInput,
    /// Present for controllers that go through the decoupling matrix.
    pub decoupling: Option<DecouplingMatrix>,
}

pub trait Controller {
    fn command(&self, state: &VehicleState) -> Result<Command, SingularDecoupling>;
}

/// Rotor speeds never change; used for open-loop and free-fall runs.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroInput;

impl Controller for ZeroInput {
    fn command(&self, _state: &VehicleState) -> Result<Command, SingularDecoupling> {
        Ok(Command {
            input: NewInput(Vector4::zeros()),
            decoupling: None,
        })
    }
}

/// A fixed rotor acceleration for the whole flight.
#[derive(Debug, Clone, Copy)]
pub struct ConstantInput(pub Vector4<f64>);

impl Controller for ConstantInput {
    fn command(&self, _state: &VehicleState) -> Result<Command, SingularDecoupling> {
        Ok(Command {
            input: NewInput(self.0),
            decoupling: None,
        })
    }
}

/// Third-order PD outer loop on top of dynamic inversion.
#[derive(Debug, Clone, Copy)]
pub struct FeedbackController {
    pub plant: Plant,
    pub gains: ControlGains,
    pub reference: Reference,
    pub singularity_threshold: f64,
}

impl FeedbackController {
    /// The desired output jerk at `state`.
    pub fn desired_jerk(&self, state: &VehicleState) -> Vector4<f64> {
        let y = OutputVector::of(state).0;
        let y_rate = output_rates(state);
        let y_accel = output_second_derivative(state, &self.plant.gait, &self.plant.params);
        output_command(&self.reference, &y, &y_rate, &y_accel, &self.gains)
    }
}

impl Controller for FeedbackController {
    fn command(&self, state: &VehicleState) -> Result<Command, SingularDecoupling> {
        let dm = build_decoupling(state, &self.plant.gait, &self.plant.params);
        let input = invert_allocate(&dm, &self.desired_jerk(state), self.singularity_threshold)?;
        Ok(Command {
            input,
            decoupling: Some(dm),
        })
    }
}

/// Result of [`step`]: the propagated state and the command that drove it.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub state: VehicleState,
    pub command: Command,
}

/// Asks the controller for `U` once at the start of the step, then integrates.
pub fn step(
    state: &VehicleState,
    plant: &Plant,
    controller: &dyn Controller,
    dt: f64,
) -> Result<StepOutcome, SingularDecoupling> {
    let command = controller.command(state)?;
    Ok(StepOutcome {
        state: integrate(state, &command.input, plant, dt),
        command,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linearization::DEFAULT_SINGULARITY_THRESHOLD;
    use crate::model::Attitude;

    fn plant(gait: Gait) -> Plant {
        Plant {
            params: VehicleParams::default(),
            gait,
        }
    }

    fn controller(gait: Gait) -> FeedbackController {
        FeedbackController {
            plant: plant(gait),
            gains: ControlGains::default(),
            reference: Reference::default(),
            singularity_threshold: DEFAULT_SINGULARITY_THRESHOLD,
        }
    }

    #[test]
    fn resting_unpowered_derivative_is_gravity() {
        let s = VehicleState::at_rest(0.0);
        let d = derivative(&s, &NewInput(Vector4::zeros()), &plant(Gait::ZERO));
        assert_eq!(d.position, Vector3::zeros());
        assert_eq!(d.velocity, Vector3::new(0.0, 0.0, -9.8));
        assert_eq!(d.rotation, Matrix3::zeros());
        assert_eq!(d.body_rates, Vector3::zeros());
        assert_eq!(d.rotors, Vector4::zeros());
    }

    #[test]
    fn yaw_rate_rotation_derivative() {
        let mut s = VehicleState::at_rest(0.0);
        s.body_rates = Vector3::new(0.0, 0.0, 1.0);
        let d = derivative(&s, &NewInput(Vector4::zeros()), &plant(Gait::ZERO));
        assert_eq!(d.rotation, hat(&Vector3::new(0.0, 0.0, 1.0)));
    }

    #[test]
    fn hover_is_a_fixed_point_of_the_derivative() {
        let p = plant(Gait::ZERO);
        let s = VehicleState::at_rest(p.params.hover_rotor_speed());
        let d = derivative(&s, &NewInput(Vector4::zeros()), &p);
        assert!(d.velocity.amax() < 1e-9);
        assert_eq!(d.position, Vector3::zeros());
        assert_eq!(d.body_rates, Vector3::zeros());
    }

    #[test]
    fn free_fall_is_exact_under_rk4() {
        let p = plant(Gait::new(0.3, -0.1, 0.2, 0.5));
        let start = VehicleState::at_rest(0.0).with_attitude(Attitude::new(0.1, 0.2, 0.3));
        let mut s = start;
        for _ in 0..1000 {
            s = step(&s, &p, &ZeroInput, 1e-3).unwrap().state;
        }
        assert!((s.time - 1.0).abs() < 1e-12);
        assert!((s.position.z + 4.9).abs() < 1e-6 * 4.9);
        assert!((s.velocity.z + 9.8).abs() < 1e-9);
        assert!((s.rotation - start.rotation).amax() < 1e-12);
    }

    #[test]
    fn controlled_hover_stays_put() {
        let c = controller(Gait::ZERO);
        let mut s = VehicleState::at_rest(c.plant.params.hover_rotor_speed());
        for _ in 0..100 {
            let next = step(&s, &c.plant, &c, 1e-3).unwrap().state;
            assert!((next.position - s.position).amax() < 1e-9);
            assert!((next.velocity - s.velocity).amax() < 1e-9);
            assert!((next.rotors.0 - s.rotors.0).amax() < 1e-9);
            assert!((next.rotation - s.rotation).amax() < 1e-9);
            s = next;
        }
    }

    #[test]
    fn rotation_stays_orthonormal() {
        let c = controller(Gait::new(-0.1, 0.1, -0.2, 0.1));
        let mut s = VehicleState::at_rest(300.0);
        s.body_rates = Vector3::new(0.4, -0.3, 1.2);
        for _ in 0..2000 {
            s = step(&s, &c.plant, &c, 1e-3).unwrap().state;
            assert!(s.orthonormality_error() < 1e-9);
        }
        assert!((s.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_state_propagates_error() {
        let c = controller(Gait::ZERO);
        let s = VehicleState::at_rest(0.0);
        assert!(step(&s, &c.plant, &c, 1e-3).is_err());
    }

    #[test]
    fn orthonormalize_fixes_drifted_matrix() {
        let r = crate::model::rotation_matrix(&Attitude::new(0.3, -0.5, 2.0));
        let drifted = r + Matrix3::from_fn(|i, j| 1e-6 * ((i * 3 + j) as f64).sin());
        let fixed = orthonormalize(&drifted);
        assert!((fixed.transpose() * fixed - Matrix3::identity()).amax() < 1e-15);
        assert!((fixed - r).amax() < 1e-5);
    }
}
