use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::model::{rotation_matrix, Attitude, RotorSpeeds};

/// Full truth-model state of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Inertial position (m), z up.
    pub position: Vector3<f64>,
    /// Inertial velocity (m/s).
    pub velocity: Vector3<f64>,
    /// Body-to-inertial rotation.
    pub rotation: Matrix3<f64>,
    /// Body angular velocity `(p, q, r)` (rad/s).
    pub body_rates: Vector3<f64>,
    pub rotors: RotorSpeeds,
    /// Simulation time (s).
    pub time: f64,
}

impl VehicleState {
    /// At rest at the origin, level, with all rotors at `rotor_speed` in the
    /// nominal spin pattern.
    pub fn at_rest(rotor_speed: f64) -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            rotation: Matrix3::identity(),
            body_rates: Vector3::zeros(),
            rotors: RotorSpeeds::symmetric(rotor_speed),
            time: 0.0,
        }
    }

    pub fn with_attitude(mut self, att: Attitude) -> Self {
        self.rotation = rotation_matrix(&att);
        self
    }

    pub fn with_rotors(mut self, speeds: Vector4<f64>) -> Self {
        self.rotors = RotorSpeeds(speeds);
        self
    }

    pub fn attitude(&self) -> Attitude {
        Attitude::from_rotation(&self.rotation)
    }

    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.body_rates.iter().all(|v| v.is_finite())
            && self.rotors.0.iter().all(|v| v.is_finite())
    }
}
