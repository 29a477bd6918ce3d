//! Third-order PD laws that turn output errors into desired output jerks.

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

/// Gains of the attitude and altitude loops.
///
/// `kp1` multiplies the second-derivative error, `kp2` the rate error and
/// `kp3` the position error; the attitude gains are per-axis diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub kp1: Vector3<f64>,
    pub kp2: Vector3<f64>,
    pub kp3: Vector3<f64>,
    pub kpz1: f64,
    pub kpz2: f64,
    pub kpz3: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self {
            kp1: Vector3::repeat(1.0),
            kp2: Vector3::repeat(1.0),
            kp3: Vector3::repeat(1.0),
            kpz1: 10.0,
            kpz2: 5.0,
            kpz3: 10.0,
        }
    }
}

impl ControlGains {
    /// Coefficients `[1, k1, k2, k3]` of `s^3 + k1 s^2 + k2 s + k3` for output
    /// channel `channel` (0..3 attitude, 3 altitude) of the loop `y''' = y'''_d`.
    pub fn characteristic_polynomial(&self, channel: usize) -> [f64; 4] {
        match channel {
            0..=2 => [1.0, self.kp1[channel], self.kp2[channel], self.kp3[channel]],
            3 => [1.0, self.kpz1, self.kpz2, self.kpz3],
            _ => panic!("output channel {channel} out of range"),
        }
    }

    /// Routh-Hurwitz test for a monic cubic: all coefficients positive and
    /// `k1 k2 > k3`. Equality is the marginal case with a pole pair on the
    /// imaginary axis.
    pub fn channel_stability(&self, channel: usize) -> LoopStability {
        let [_, k1, k2, k3] = self.characteristic_polynomial(channel);
        if k1 <= 0.0 || k2 <= 0.0 || k3 <= 0.0 || k1 * k2 < k3 {
            LoopStability::Unstable
        } else if k1 * k2 == k3 {
            LoopStability::Marginal
        } else {
            LoopStability::Hurwitz
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopStability {
    Hurwitz,
    Marginal,
    Unstable,
}

/// Output reference and its first three time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub value: Vector4<f64>,
    pub rate: Vector4<f64>,
    pub accel: Vector4<f64>,
    pub jerk: Vector4<f64>,
}

impl Reference {
    pub fn constant(value: Vector4<f64>) -> Self {
        Self {
            value,
            rate: Vector4::zeros(),
            accel: Vector4::zeros(),
            jerk: Vector4::zeros(),
        }
    }
}

impl Default for Reference {
    fn default() -> Self {
        Self::constant(Vector4::zeros())
    }
}

/// Desired roll/pitch/yaw jerk.
pub fn attitude_command(
    reference: &Reference,
    y: &Vector3<f64>,
    y_rate: &Vector3<f64>,
    y_accel: &Vector3<f64>,
    gains: &ControlGains,
) -> Vector3<f64> {
    let r = |v: &Vector4<f64>| v.fixed_rows::<3>(0).into_owned();
    r(&reference.jerk)
        + gains.kp1.component_mul(&(r(&reference.accel) - y_accel))
        + gains.kp2.component_mul(&(r(&reference.rate) - y_rate))
        + gains.kp3.component_mul(&(r(&reference.value) - y))
}

/// Desired altitude jerk.
pub fn altitude_command(
    reference: &Reference,
    z: f64,
    z_rate: f64,
    z_accel: f64,
    gains: &ControlGains,
) -> f64 {
    reference.jerk[3]
        + gains.kpz1 * (reference.accel[3] - z_accel)
        + gains.kpz2 * (reference.rate[3] - z_rate)
        + gains.kpz3 * (reference.value[3] - z)
}

/// Both laws stacked in output order `(roll, pitch, yaw, z)`.
pub fn output_command(
    reference: &Reference,
    y: &Vector4<f64>,
    y_rate: &Vector4<f64>,
    y_accel: &Vector4<f64>,
    gains: &ControlGains,
) -> Vector4<f64> {
    let head = |v: &Vector4<f64>| v.fixed_rows::<3>(0).into_owned();
    let att = attitude_command(reference, &head(y), &head(y_rate), &head(y_accel), gains);
    let alt = altitude_command(reference, y[3], y_rate[3], y_accel[3], gains);
    Vector4::new(att.x, att.y, att.z, alt)
}
