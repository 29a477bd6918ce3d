//! Dynamic inversion of the attitude/altitude outputs.
//!
//! The outputs `y = (roll, pitch, yaw, z)` have relative degree three with
//! respect to the rotor accelerations `U = d(varpi)/dt`:
//!
//! ```text
//! y''' = Delta(state) * U + Ma(state)
//! ```
//!
//! Attitude rates are approximated by the body rates when differentiating,
//! so the attitude rows carry no drift term and only the altitude row does.

use nalgebra::{Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Lu4;
use crate::model::{angular_accel, hat, thrust_map, torque_map, Gait, VehicleParams};
use crate::state::VehicleState;

/// `|det Delta|` at or below this is treated as rank loss.
pub const DEFAULT_SINGULARITY_THRESHOLD: f64 = 1e-18;

/// `(roll, pitch, yaw, z)`, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputVector(pub Vector4<f64>);

impl OutputVector {
    pub fn of(state: &VehicleState) -> Self {
        let att = state.attitude();
        OutputVector(Vector4::new(att.roll, att.pitch, att.yaw, state.position.z))
    }
}

/// First output derivative as the controller sees it: body rates stand in
/// for the Euler-angle rates.
pub fn output_rates(state: &VehicleState) -> Vector4<f64> {
    let w = state.body_rates;
    Vector4::new(w.x, w.y, w.z, state.velocity.z)
}

/// Model-based second output derivative.
pub fn output_second_derivative(
    state: &VehicleState,
    gait: &Gait,
    params: &VehicleParams,
) -> Vector4<f64> {
    let ang = angular_accel(&state.rotors, gait, params);
    let w = state.rotors.signed_squares().0;
    let vertical = (state.rotation * thrust_map(gait, params) * w).z / params.mass;
    Vector4::new(ang.x, ang.y, ang.z, vertical - params.gravity)
}

/// The matrix multiplying the signed squares in `y''`: `I^-1 tau(alpha)`
/// stacked over `e3^T R F(alpha) / m`.
pub fn decoupling_core(
    rotation: &nalgebra::Matrix3<f64>,
    gait: &Gait,
    params: &VehicleParams,
) -> Matrix4<f64> {
    let inv_i = params.inertia_inverse();
    let tau = torque_map(gait, params);
    let lift = rotation.row(2) * thrust_map(gait, params) / params.mass;
    Matrix4::from_fn(|i, j| {
        if i < 3 {
            tau[(i, j)] * inv_i[i]
        } else {
            lift[j]
        }
    })
}

/// Decoupling matrix, drift and conditioning at one state.
#[derive(Debug, Clone, Copy)]
pub struct DecouplingMatrix {
    pub delta: Matrix4<f64>,
    /// Input-independent part of `y'''`; only the altitude entry is non-zero.
    pub drift: Vector4<f64>,
    pub det: f64,
    /// 1-norm condition number (`inf` when singular).
    pub cond: f64,
    lu: Lu4,
}

pub fn build_decoupling(
    state: &VehicleState,
    gait: &Gait,
    params: &VehicleParams,
) -> DecouplingMatrix {
    let core = decoupling_core(&state.rotation, gait, params);
    // d(varpi |varpi|)/dt = 2 |varpi| d(varpi)/dt for either spin direction
    let scale = state.rotors.0.map(|v| 2.0 * v.abs());
    let delta = Matrix4::from_fn(|i, j| core[(i, j)] * scale[j]);

    let w = state.rotors.signed_squares().0;
    let spin: Vector3<f64> = hat(&state.body_rates) * (thrust_map(gait, params) * w);
    let ma4 = (state.rotation * spin).z / params.mass;

    let lu = Lu4::new(&delta);
    DecouplingMatrix {
        delta,
        drift: Vector4::new(0.0, 0.0, 0.0, ma4),
        det: lu.determinant(),
        cond: lu.condition_1(&delta),
        lu,
    }
}

/// Rotor accelerations commanded by the inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewInput(pub Vector4<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("decoupling matrix is singular: |det| = {det:e} <= {threshold:e}")]
pub struct SingularDecoupling {
    pub det: f64,
    pub threshold: f64,
}

/// Solves `Delta U = y'''_d - Ma`.
pub fn invert_allocate(
    dm: &DecouplingMatrix,
    jerk_desired: &Vector4<f64>,
    threshold: f64,
) -> Result<NewInput, SingularDecoupling> {
    let singular = SingularDecoupling {
        det: dm.det,
        threshold,
    };
    if !(dm.det.abs() > threshold) {
        return Err(singular);
    }
    dm.lu
        .solve(&(jerk_desired - dm.drift))
        .map(NewInput)
        .ok_or(singular)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Attitude, RotorSpeeds};
    use crate::linalg::determinant;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn random_state(
        att: [f64; 3],
        rates: [f64; 3],
        speeds: [f64; 4],
    ) -> VehicleState {
        VehicleState::at_rest(300.0)
            .with_attitude(Attitude::new(att[0], att[1], att[2]))
            .with_rotors(Vector4::from(speeds))
            .tap_rates(rates)
    }

    trait TapRates {
        fn tap_rates(self, rates: [f64; 3]) -> Self;
    }
    impl TapRates for VehicleState {
        fn tap_rates(mut self, rates: [f64; 3]) -> Self {
            self.body_rates = Vector3::from(rates);
            self
        }
    }

    #[test]
    fn no_thrust_output_accel_is_gravity() {
        let p = VehicleParams::default();
        let s = VehicleState::at_rest(0.0).with_attitude(Attitude::new(0.3, -0.2, 1.0));
        let ydd = output_second_derivative(&s, &Gait::new(0.1, 0.2, 0.3, 0.4), &p);
        assert_eq!(ydd, Vector4::new(0.0, 0.0, 0.0, -9.8));
    }

    #[test]
    fn hover_outputs_are_still() {
        let p = VehicleParams::default();
        let s = VehicleState::at_rest(p.hover_rotor_speed());
        let ydd = output_second_derivative(&s, &Gait::ZERO, &p);
        assert!(ydd.amax() < 1e-9);
    }

    #[test]
    fn stopped_rotor_zeroes_determinant() {
        let p = VehicleParams::default();
        for i in 0..4 {
            let mut speeds = Vector4::new(-310.0, 290.0, -305.0, 300.0);
            speeds[i] = 0.0;
            let s = VehicleState::at_rest(0.0).with_rotors(speeds);
            let dm = build_decoupling(&s, &Gait::new(0.1, -0.2, 0.05, 0.3), &p);
            assert_eq!(dm.det, 0.0);
            assert!(dm.delta.column(i).iter().all(|v| *v == 0.0));
            let err = invert_allocate(&dm, &Vector4::zeros(), DEFAULT_SINGULARITY_THRESHOLD)
                .unwrap_err();
            assert_eq!(err.det, 0.0);
        }
    }

    #[test]
    fn level_start_has_no_drift_and_full_rank() {
        let p = VehicleParams::default();
        let dm = build_decoupling(&VehicleState::at_rest(300.0), &Gait::ZERO, &p);
        assert_eq!(dm.drift, Vector4::zeros());
        // zero-gait core is a signed checkerboard; its determinant is
        // 8 (L K_f)^2 K_m K_f / (m Ix Iy Iz)
        let lk = p.arm_length * p.k_f;
        let core_det = 8.0 * lk * lk * p.k_m * p.k_f
            / (p.mass * p.inertia.x * p.inertia.y * p.inertia.z);
        let expected = core_det * 16.0 * 300f64.powi(4);
        assert!((dm.det - expected).abs() < 1e-9 * expected.abs());
        assert!(dm.det.abs() > DEFAULT_SINGULARITY_THRESHOLD);
    }

    #[test]
    fn no_body_rate_means_no_drift() {
        let p = VehicleParams::default();
        let s = random_state([0.2, -0.3, 0.9], [0.0; 3], [-350.0, 280.0, -410.0, 330.0]);
        let dm = build_decoupling(&s, &Gait::new(0.4, -0.1, 0.2, 0.7), &p);
        assert_eq!(dm.drift, Vector4::zeros());
    }

    #[test]
    fn inversion_of_drift_is_zero_input() {
        let p = VehicleParams::default();
        let s = random_state([0.1, 0.05, -0.2], [0.3, -0.2, 0.5], [-320.0, 300.0, -290.0, 310.0]);
        let dm = build_decoupling(&s, &Gait::new(-0.1, 0.1, -0.2, 0.1), &p);
        let u = invert_allocate(&dm, &dm.drift, DEFAULT_SINGULARITY_THRESHOLD).unwrap();
        assert!(u.0.amax() < 1e-12);
        for j in 0..4 {
            let target = dm.drift + dm.delta.column(j);
            let u = invert_allocate(&dm, &target, DEFAULT_SINGULARITY_THRESHOLD).unwrap();
            assert!((u.0 - Vector4::ith(j, 1.0)).amax() < 1e-9, "column {j}");
        }
    }

    #[test]
    fn threshold_is_a_knob() {
        let p = VehicleParams::default();
        let dm = build_decoupling(&VehicleState::at_rest(300.0), &Gait::ZERO, &p);
        assert!(invert_allocate(&dm, &Vector4::zeros(), dm.det.abs() * 2.0).is_err());
        assert!(invert_allocate(&dm, &Vector4::zeros(), dm.det.abs() * 0.5).is_ok());
    }

    fn angle() -> impl Strategy<Value = f64> {
        -PI..PI
    }

    fn speeds() -> impl Strategy<Value = [f64; 4]> {
        (50.0..800.0f64, 50.0..800.0f64, 50.0..800.0f64, 50.0..800.0f64)
            .prop_map(|(a, b, c, d)| [-a, b, -c, d])
    }

    proptest! {
        #[test]
        fn attitude_rows_match_angular_accel(
            att in proptest::array::uniform3(-1.0..1.0f64),
            gait in proptest::array::uniform4(angle()),
            sp in speeds(),
        ) {
            let p = VehicleParams::default();
            let s = random_state(att, [0.0; 3], sp);
            let ydd = output_second_derivative(&s, &Gait(gait), &p);
            let ang = angular_accel(&RotorSpeeds(Vector4::from(sp)), &Gait(gait), &p);
            prop_assert_eq!(ydd.fixed_rows::<3>(0).into_owned(), ang);
        }

        #[test]
        fn determinant_factorizes(
            att in proptest::array::uniform3(-1.0..1.0f64),
            gait in proptest::array::uniform4(angle()),
            sp in speeds(),
        ) {
            let p = VehicleParams::default();
            let s = random_state(att, [0.1, 0.2, 0.3], sp);
            let dm = build_decoupling(&s, &Gait(gait), &p);
            let core = decoupling_core(&s.rotation, &Gait(gait), &p);
            let scale: f64 = sp.iter().map(|v| 2.0 * v.abs()).product();
            let expected = determinant(&core) * scale;
            let norm = dm.delta.column_iter().map(|c| c.norm()).product::<f64>();
            prop_assert!((dm.det - expected).abs() <= 1e-9 * expected.abs() + 1e-12 * norm);
        }

        #[test]
        fn drift_is_linear_in_signed_squares(
            att in proptest::array::uniform3(-1.0..1.0f64),
            rates in proptest::array::uniform3(-2.0..2.0f64),
            gait in proptest::array::uniform4(angle()),
            sp in speeds(),
            k in 0.1..4.0f64,
        ) {
            let p = VehicleParams::default();
            let base = random_state(att, rates, sp);
            // scaling w by k scales the speeds by sqrt(k)
            let scaled = base.with_rotors(Vector4::from(sp) * k.sqrt());
            let m1 = build_decoupling(&base, &Gait(gait), &p).drift[3];
            let m2 = build_decoupling(&scaled, &Gait(gait), &p).drift[3];
            prop_assert!((m2 - k * m1).abs() <= 1e-9 * (k * m1).abs() + 1e-12);
        }

        #[test]
        fn signed_square_derivative_for_both_spins(v in -900.0..900.0f64, vdot in -50.0..50.0f64) {
            prop_assume!(v.abs() > 1.0);
            let h = 1e-6;
            let f = |x: f64| x * x.abs();
            let fd = (f(v + h * vdot) - f(v - h * vdot)) / (2.0 * h);
            let analytic = 2.0 * v.abs() * vdot;
            prop_assert!((fd - analytic).abs() <= 1e-5 * (1.0 + analytic.abs()));
        }

        #[test]
        fn allocation_residual_is_tiny(
            att in proptest::array::uniform3(-0.5..0.5f64),
            rates in proptest::array::uniform3(-1.0..1.0f64),
            gait in proptest::array::uniform4(-0.3..0.3f64),
            sp in speeds(),
            jerk in proptest::array::uniform4(-100.0..100.0f64),
        ) {
            let p = VehicleParams::default();
            let s = random_state(att, rates, sp);
            let dm = build_decoupling(&s, &Gait(gait), &p);
            let jerk = Vector4::from(jerk);
            let u = invert_allocate(&dm, &jerk, DEFAULT_SINGULARITY_THRESHOLD).unwrap();
            let residual = (dm.delta * u.0 + dm.drift - jerk).norm();
            prop_assert!(residual < 1e-9 * jerk.norm() + 1e-12, "residual {residual}, cond {}", dm.cond);
        }
    }
}
