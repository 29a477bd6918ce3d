//! Rigid-body model of the four-rotor tiltrotor with frozen tilt angles.
//!
//! Conventions: `R` maps body vectors into the inertial frame (ZYX Euler
//! angles), rotors 1 and 3 spin with negative speed and rotors 2 and 4 with
//! positive speed, and every rotor enters the dynamics through its signed
//! square `varpi * |varpi|`.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

/// Physical constants of the airframe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Total mass (kg).
    pub mass: f64,
    /// Arm length (m).
    pub arm_length: f64,
    /// Gravitational acceleration (N/kg).
    pub gravity: f64,
    /// Diagonal of the body inertia matrix (kg m^2).
    pub inertia: Vector3<f64>,
    /// Thrust coefficient (N s^2).
    pub k_f: f64,
    /// Rotor drag-torque coefficient (N m s^2).
    pub k_m: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 0.429,
            arm_length: 0.1785,
            gravity: 9.8,
            inertia: Vector3::new(2.24e-3, 2.99e-3, 4.80e-3),
            k_f: 8.048e-6,
            k_m: 2.423e-7,
        }
    }
}

impl VehicleParams {
    /// Returns the name of the first parameter that is not strictly positive.
    pub fn validate(&self) -> Result<(), &'static str> {
        let checks = [
            ("m", self.mass),
            ("arm_length", self.arm_length),
            ("g", self.gravity),
            ("ixx", self.inertia.x),
            ("iyy", self.inertia.y),
            ("izz", self.inertia.z),
            ("k_f", self.k_f),
            ("k_m", self.k_m),
        ];
        for (name, value) in checks {
            if !(value.is_finite() && value > 0.0) {
                return Err(name);
            }
        }
        Ok(())
    }

    pub fn inertia_inverse(&self) -> Vector3<f64> {
        self.inertia.map(|i| 1.0 / i)
    }

    /// Rotor speed magnitude at which the zero gait hovers level:
    /// `4 K_f w^2 = m g`.
    pub fn hover_rotor_speed(&self) -> f64 {
        (self.mass * self.gravity / (4.0 * self.k_f)).sqrt()
    }
}

/// The four tilt angles (rad), held constant for a whole flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gait(pub [f64; 4]);

impl Gait {
    pub const ZERO: Gait = Gait([0.0; 4]);

    pub fn new(a1: f64, a2: f64, a3: f64, a4: f64) -> Self {
        Gait([a1, a2, a3, a4])
    }

    /// Checks finiteness and the `|alpha_i| <= pi` storage bound.
    pub fn validate(&self) -> Result<(), String> {
        for (i, a) in self.0.iter().enumerate() {
            if !a.is_finite() || a.abs() > std::f64::consts::PI {
                return Err(format!("tilt angle {} = {a} outside [-pi, pi]", i + 1));
            }
        }
        Ok(())
    }

    pub fn sin(&self) -> [f64; 4] {
        self.0.map(f64::sin)
    }

    pub fn cos(&self) -> [f64; 4] {
        self.0.map(f64::cos)
    }
}

/// ZYX Euler angles (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    /// Extracts Euler angles from a rotation matrix. The pitch argument is
    /// clamped so that round-off slightly beyond +/-1 does not produce NaN.
    pub fn from_rotation(r: &Matrix3<f64>) -> Self {
        Self {
            roll: r[(2, 1)].atan2(r[(2, 2)]),
            pitch: -r[(2, 0)].clamp(-1.0, 1.0).asin(),
            yaw: r[(1, 0)].atan2(r[(0, 0)]),
        }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.roll, self.pitch, self.yaw)
    }
}

/// Signed rotor speeds (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorSpeeds(pub Vector4<f64>);

impl RotorSpeeds {
    /// Speeds of equal magnitude with the (-, +, -, +) spin pattern.
    pub fn symmetric(magnitude: f64) -> Self {
        let m = magnitude.abs();
        RotorSpeeds(Vector4::new(-m, m, -m, m))
    }

    pub fn signed_squares(&self) -> SignedSquares {
        SignedSquares(self.0.map(|v| v * v.abs()))
    }

    pub fn min_abs(&self) -> f64 {
        self.0.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
    }

    /// True when rotors 1, 3 are negative and rotors 2, 4 positive.
    pub fn has_nominal_signs(&self) -> bool {
        self.0[0] < 0.0 && self.0[1] > 0.0 && self.0[2] < 0.0 && self.0[3] > 0.0
    }
}

/// `w_i = varpi_i * |varpi_i|`, the quantity thrust and torque are linear in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedSquares(pub Vector4<f64>);

/// ZYX rotation matrix taking body-frame vectors to the inertial frame.
pub fn rotation_matrix(att: &Attitude) -> Matrix3<f64> {
    let (sf, cf) = att.roll.sin_cos();
    let (st, ct) = att.pitch.sin_cos();
    let (sp, cp) = att.yaw.sin_cos();
    Matrix3::new(
        ct * cp,
        sf * st * cp - cf * sp,
        cf * st * cp + sf * sp,
        ct * sp,
        sf * st * sp + cf * cp,
        cf * st * sp - sf * cp,
        -st,
        sf * ct,
        cf * ct,
    )
}

/// Body-frame force per unit signed square for each rotor.
pub fn thrust_map(gait: &Gait, params: &VehicleParams) -> Matrix3x4<f64> {
    let [s1, s2, s3, s4] = gait.sin();
    let [c1, c2, c3, c4] = gait.cos();
    let kf = params.k_f;
    Matrix3x4::new(
        0.0,
        kf * s2,
        0.0,
        -kf * s4,
        kf * s1,
        0.0,
        -kf * s3,
        0.0,
        -kf * c1,
        kf * c2,
        -kf * c3,
        kf * c4,
    )
}

/// Body-frame torque per unit signed square for each rotor: arm moment of
/// the tilted thrust plus the tilted rotor drag torque.
pub fn torque_map(gait: &Gait, params: &VehicleParams) -> Matrix3x4<f64> {
    let [s1, s2, s3, s4] = gait.sin();
    let [c1, c2, c3, c4] = gait.cos();
    let lk = params.arm_length * params.k_f;
    let km = params.k_m;
    Matrix3x4::new(
        0.0,
        lk * c2 - km * s2,
        0.0,
        -lk * c4 + km * s4,
        lk * c1 + km * s1,
        0.0,
        -lk * c3 - km * s3,
        0.0,
        lk * s1 - km * c1,
        -lk * s2 - km * c2,
        lk * s3 - km * c3,
        -lk * s4 - km * c4,
    )
}

/// Inertial-frame acceleration of the centre of mass.
pub fn translational_accel(
    rotation: &Matrix3<f64>,
    rotors: &RotorSpeeds,
    gait: &Gait,
    params: &VehicleParams,
) -> Vector3<f64> {
    let w = rotors.signed_squares().0;
    let thrust = rotation * (thrust_map(gait, params) * w) / params.mass;
    Vector3::new(0.0, 0.0, -params.gravity) + thrust
}

/// Body angular acceleration. Gyroscopic coupling is not part of the model.
pub fn angular_accel(rotors: &RotorSpeeds, gait: &Gait, params: &VehicleParams) -> Vector3<f64> {
    let w = rotors.signed_squares().0;
    (torque_map(gait, params) * w).component_mul(&params.inertia_inverse())
}

/// Skew-symmetric matrix with `hat(v) * u == v x u`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn max_abs(m: &Matrix3<f64>) -> f64 {
        m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn level_attitude_is_identity() {
        let r = rotation_matrix(&Attitude::default());
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn pure_yaw_is_z_rotation() {
        let psi = 0.7_f64;
        let r = rotation_matrix(&Attitude::new(0.0, 0.0, psi));
        let expected = Matrix3::new(
            psi.cos(),
            -psi.sin(),
            0.0,
            psi.sin(),
            psi.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        assert!(max_abs(&(r - expected)) < 1e-15);
    }

    #[test]
    fn euler_round_trip() {
        let att = Attitude::new(0.3, -0.4, 2.5);
        let back = Attitude::from_rotation(&rotation_matrix(&att));
        assert!((back.as_vector() - att.as_vector()).amax() < 1e-12);
    }

    #[test]
    fn zero_gait_thrust_map() {
        let p = VehicleParams::default();
        let f = thrust_map(&Gait::ZERO, &p);
        for j in 0..4 {
            assert_eq!(f[(0, j)], 0.0);
            assert_eq!(f[(1, j)], 0.0);
        }
        let kf = p.k_f;
        assert_eq!(
            [f[(2, 0)], f[(2, 1)], f[(2, 2)], f[(2, 3)]],
            [-kf, kf, -kf, kf]
        );
    }

    #[test]
    fn tilted_first_rotor_pushes_along_body_y() {
        let p = VehicleParams::default();
        let f = thrust_map(&Gait::new(FRAC_PI_2, 0.0, 0.0, 0.0), &p);
        assert_eq!(f[(0, 0)], 0.0);
        assert_eq!(f[(1, 0)], p.k_f);
        assert!(f[(2, 0)].abs() < 1e-20);
    }

    #[test]
    fn hover_thrust_is_vertical() {
        let p = VehicleParams::default();
        let varpi = 350.0;
        let w = RotorSpeeds::symmetric(varpi).signed_squares().0;
        let force = thrust_map(&Gait::ZERO, &p) * w;
        assert_eq!(force.x, 0.0);
        assert_eq!(force.y, 0.0);
        assert!((force.z - 4.0 * p.k_f * varpi * varpi).abs() < 1e-15);
    }

    #[test]
    fn zero_gait_torque_map() {
        let p = VehicleParams::default();
        let t = torque_map(&Gait::ZERO, &p);
        let lk = p.arm_length * p.k_f;
        let km = p.k_m;
        let rows = [
            [0.0, lk, 0.0, -lk],
            [lk, 0.0, -lk, 0.0],
            [-km, -km, -km, -km],
        ];
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(t[(i, j)], *v, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn symmetric_hover_has_no_torque() {
        let p = VehicleParams::default();
        let w = RotorSpeeds::symmetric(300.0).signed_squares().0;
        let tau = torque_map(&Gait::ZERO, &p) * w;
        assert_eq!(tau, Vector3::zeros());
    }

    #[test]
    fn torque_map_derivative_matches_central_difference() {
        let p = VehicleParams::default();
        let alpha: [f64; 4] = [0.3, -0.7, 1.1, -0.2];
        let lk = p.arm_length * p.k_f;
        let km = p.k_m;
        // d/d alpha_i of column i, written out by hand.
        let analytic = |i: usize| -> Vector3<f64> {
            let (s, c) = alpha[i].sin_cos();
            match i {
                0 => Vector3::new(0.0, -lk * s + km * c, lk * c + km * s),
                1 => Vector3::new(-lk * s - km * c, 0.0, -lk * c + km * s),
                2 => Vector3::new(0.0, lk * s - km * c, lk * c + km * s),
                _ => Vector3::new(lk * s + km * c, 0.0, -lk * c + km * s),
            }
        };
        let h = 1e-6;
        for i in 0..4 {
            let mut plus = alpha;
            let mut minus = alpha;
            plus[i] += h;
            minus[i] -= h;
            let fd = (torque_map(&Gait(plus), &p) - torque_map(&Gait(minus), &p)) / (2.0 * h);
            let col = fd.column(i).into_owned();
            // relative to the lk scale of the entries
            assert!((col - analytic(i)).amax() / lk < 1e-6, "column {i}");
            for j in (0..4).filter(|&j| j != i) {
                assert!(fd.column(j).amax() < 1e-18);
            }
        }
    }

    #[test]
    fn free_fall_acceleration() {
        let p = VehicleParams::default();
        let a = translational_accel(
            &rotation_matrix(&Attitude::new(0.2, 0.1, -1.0)),
            &RotorSpeeds(Vector4::zeros()),
            &Gait::new(0.1, 0.2, 0.3, 0.4),
            &p,
        );
        assert_eq!(a, Vector3::new(0.0, 0.0, -9.8));
    }

    #[test]
    fn hover_balance() {
        let p = VehicleParams::default();
        let wh = p.hover_rotor_speed();
        // closed-form oracle with the airframe constants
        let oracle = (0.429_f64 * 9.8 / (4.0 * 8.048e-6)).sqrt();
        assert!((wh - oracle).abs() < 1e-12);
        assert!((wh - 361.4).abs() < 0.05);
        let a = translational_accel(
            &Matrix3::identity(),
            &RotorSpeeds::symmetric(wh),
            &Gait::ZERO,
            &p,
        );
        assert!(a.amax() < 1e-9);
    }

    #[test]
    fn under_powered_start_sinks() {
        let p = VehicleParams::default();
        let a = translational_accel(
            &Matrix3::identity(),
            &RotorSpeeds::symmetric(300.0),
            &Gait::ZERO,
            &p,
        );
        let oracle = 4.0 * 8.048e-6 * 300.0 * 300.0 / 0.429 - 9.8;
        assert!((a.z - oracle).abs() < 1e-12);
        assert!((a.z - (-3.047)).abs() < 1e-3);
    }

    #[test]
    fn angular_accel_zero_without_thrust() {
        let p = VehicleParams::default();
        let a = angular_accel(
            &RotorSpeeds(Vector4::zeros()),
            &Gait::new(0.5, 0.1, -0.3, 0.2),
            &p,
        );
        assert_eq!(a, Vector3::zeros());
        let hover = angular_accel(&RotorSpeeds::symmetric(320.0), &Gait::ZERO, &p);
        assert_eq!(hover.x, 0.0);
        assert_eq!(hover.y, 0.0);
    }

    #[test]
    fn hat_of_unit_x() {
        let h = hat(&Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(h, Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0));
        assert_eq!(hat(&Vector3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn param_validation() {
        assert!(VehicleParams::default().validate().is_ok());
        let mut p = VehicleParams::default();
        p.inertia.y = 0.0;
        assert_eq!(p.validate(), Err("iyy"));
        assert!(Gait::new(4.0, 0.0, 0.0, 0.0).validate().is_err());
    }

    fn angle() -> impl Strategy<Value = f64> {
        -PI..PI
    }

    proptest! {
        #[test]
        fn rotation_is_orthonormal(roll in angle(), pitch in angle(), yaw in angle()) {
            let r = rotation_matrix(&Attitude::new(roll, pitch, yaw));
            let err = r.transpose() * r - Matrix3::identity();
            prop_assert!(max_abs(&err) < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn maps_are_two_pi_periodic(a in proptest::array::uniform4(angle()), i in 0usize..4) {
            let p = VehicleParams::default();
            let mut shifted = a;
            shifted[i] += 2.0 * PI;
            let df = thrust_map(&Gait(a), &p) - thrust_map(&Gait(shifted), &p);
            let dt = torque_map(&Gait(a), &p) - torque_map(&Gait(shifted), &p);
            prop_assert!(df.amax() < 1e-18);
            prop_assert!(dt.amax() < 1e-18);
        }

        #[test]
        fn no_rotor_speed_means_free_fall(
            roll in angle(), pitch in angle(), yaw in angle(),
            a in proptest::array::uniform4(angle()),
        ) {
            let p = VehicleParams::default();
            let r = rotation_matrix(&Attitude::new(roll, pitch, yaw));
            let acc = translational_accel(&r, &RotorSpeeds(Vector4::zeros()), &Gait(a), &p);
            prop_assert_eq!(acc, Vector3::new(0.0, 0.0, -p.gravity));
        }

        #[test]
        fn equal_hover_speeds_give_no_roll_pitch_torque(speed in 1.0..2000.0f64) {
            let p = VehicleParams::default();
            let tau = torque_map(&Gait::ZERO, &p) * RotorSpeeds::symmetric(speed).signed_squares().0;
            prop_assert_eq!(tau.x, 0.0);
            prop_assert_eq!(tau.y, 0.0);
        }

        #[test]
        fn angular_accel_matches_naive_product(
            a in proptest::array::uniform4(angle()),
            speeds in proptest::array::uniform4(-800.0..800.0f64),
        ) {
            let p = VehicleParams::default();
            let rotors = RotorSpeeds(Vector4::from(speeds));
            let got = angular_accel(&rotors, &Gait(a), &p);
            let t = torque_map(&Gait(a), &p);
            let inertia = [p.inertia.x, p.inertia.y, p.inertia.z];
            for i in 0..3 {
                let mut acc = 0.0;
                for j in 0..4 {
                    acc += t[(i, j)] * speeds[j] * speeds[j].abs();
                }
                let naive = acc / inertia[i];
                prop_assert!((got[i] - naive).abs() <= 1e-12 * naive.abs().max(1.0));
            }
        }

        #[test]
        fn hat_is_cross_product(v in proptest::array::uniform3(-1.0..1.0f64), u in proptest::array::uniform3(-1.0..1.0f64)) {
            let v = Vector3::from(v);
            let u = Vector3::from(u);
            let h = hat(&v);
            prop_assert_eq!(h.transpose(), -h);
            prop_assert!((h * u - v.cross(&u)).amax() <= 1e-15);
        }
    }
}
