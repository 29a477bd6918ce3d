use std::f64::consts::PI;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use super::telemetry::{Telemetry, TelemetryRow};
use crate::linearization::DEFAULT_SINGULARITY_THRESHOLD;

/// Numeric rules that turn a flight record into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Trailing fraction of the planned duration used for the settling test.
    pub settle_fraction: f64,
    /// Max |attitude error| (rad) allowed in the settling window.
    pub attitude_tol: f64,
    /// Max |altitude error| (m) allowed in the settling window.
    pub altitude_tol: f64,
    /// Any position, velocity or body-rate component beyond this diverged.
    pub blowup_bound: f64,
    /// |pitch| at or beyond this trips the gimbal guard (rad).
    pub gimbal_limit: f64,
    /// A rotor slower than this (rad/s) counts as a zero crossing.
    pub rotor_eps: f64,
    /// |det| at or below this is a singular decoupling matrix.
    pub det_threshold: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            settle_fraction: 0.2,
            attitude_tol: 0.02,
            altitude_tol: 0.05,
            blowup_bound: 1e3,
            gimbal_limit: 1.4,
            rotor_eps: 1.0,
            det_threshold: DEFAULT_SINGULARITY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    SingularAbort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Settled,
    Diverged,
    GimbalGuard,
    SettlingFailed,
    Incomplete,
    RotorZeroCrossing,
    SingularDecoupling,
}

impl Reason {
    pub fn verdict(self) -> Verdict {
        match self {
            Reason::Settled => Verdict::Stable,
            Reason::Diverged | Reason::GimbalGuard | Reason::SettlingFailed | Reason::Incomplete => {
                Verdict::Unstable
            }
            Reason::RotorZeroCrossing | Reason::SingularDecoupling => Verdict::SingularAbort,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitClassification {
    pub verdict: Verdict,
    pub reason: Reason,
    /// Time of the last sample looked at (the abort time for early stops).
    pub t_end: f64,
    pub min_abs_rotor_speed: f64,
    /// Over the settling window; NaN if the flight never reached it.
    pub max_attitude_error: f64,
    pub max_altitude_error: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// The first abort or divergence rule a single sample trips, in the order
/// divergence, gimbal guard, rotor zero crossing, singular matrix.
pub(crate) fn sample_violation(row: &TelemetryRow, th: &Thresholds) -> Option<Reason> {
    let finite = row.y.iter().chain(&row.y_rate).chain(&row.rotors).chain(&row.xy).all(|v| v.is_finite());
    let too_big = row.y[3].abs() > th.blowup_bound
        || row.xy.iter().any(|v| v.abs() > th.blowup_bound)
        || row.y_rate.iter().any(|v| v.abs() > th.blowup_bound);
    if !finite || too_big {
        return Some(Reason::Diverged);
    }
    if row.y[1].abs() >= th.gimbal_limit {
        return Some(Reason::GimbalGuard);
    }
    if row.min_abs_rotor() < th.rotor_eps {
        return Some(Reason::RotorZeroCrossing);
    }
    // NaN det means no decoupling matrix was formed (open-loop runs)
    if !row.det.is_nan() && !(row.det.abs() > th.det_threshold) {
        return Some(Reason::SingularDecoupling);
    }
    None
}

/// Incremental form of [`classify`], fed one sample at a time.
#[derive(Debug, Clone)]
pub struct Classifier {
    thresholds: Thresholds,
    reference: Vector4<f64>,
    settle_from: f64,
    duration: f64,
    dt: f64,
    violation: Option<Reason>,
    t_end: f64,
    min_rotor: f64,
    max_att: f64,
    max_alt: f64,
    samples: usize,
}

impl Classifier {
    pub fn new(thresholds: Thresholds, reference: Vector4<f64>, duration: f64, dt: f64) -> Self {
        Self {
            thresholds,
            reference,
            settle_from: (1.0 - thresholds.settle_fraction) * duration,
            duration,
            dt,
            violation: None,
            t_end: f64::NAN,
            min_rotor: f64::INFINITY,
            max_att: f64::NAN,
            max_alt: f64::NAN,
            samples: 0,
        }
    }

    /// Feeds one sample; returns the rule it tripped, if any. Samples after
    /// the first violation are ignored.
    pub fn push(&mut self, row: &TelemetryRow) -> Option<Reason> {
        if self.violation.is_some() {
            return self.violation;
        }
        self.samples += 1;
        self.t_end = row.t;
        self.min_rotor = self.min_rotor.min(row.min_abs_rotor());
        // half a step of slack so the window start does not depend on round-off
        if row.t >= self.settle_from - 0.5 * self.dt {
            let att = (0..3)
                .map(|i| wrap_angle(row.y[i] - self.reference[i]).abs())
                .fold(0.0, f64::max);
            let alt = (row.y[3] - self.reference[3]).abs();
            self.max_att = if self.max_att.is_nan() { att } else { self.max_att.max(att) };
            self.max_alt = if self.max_alt.is_nan() { alt } else { self.max_alt.max(alt) };
        }
        self.violation = sample_violation(row, &self.thresholds);
        self.violation
    }

    pub fn finish(&self) -> GaitClassification {
        let complete = self.samples > 0 && self.t_end >= self.duration - 0.5 * self.dt;
        let reason = match self.violation {
            Some(r) => r,
            None if !complete => Reason::Incomplete,
            None if self.max_att <= self.thresholds.attitude_tol
                && self.max_alt <= self.thresholds.altitude_tol =>
            {
                Reason::Settled
            }
            None => Reason::SettlingFailed,
        };
        GaitClassification {
            verdict: reason.verdict(),
            reason,
            t_end: self.t_end,
            min_abs_rotor_speed: self.min_rotor,
            max_attitude_error: self.max_att,
            max_altitude_error: self.max_alt,
        }
    }
}

/// Deterministic verdict for a recorded flight; the first rule tripped in
/// time order wins.
pub fn classify(telemetry: &Telemetry, thresholds: &Thresholds) -> GaitClassification {
    let mut c = Classifier::new(*thresholds, telemetry.reference, telemetry.duration, telemetry.dt);
    for row in &telemetry.rows {
        if c.push(row).is_some() {
            break;
        }
    }
    c.finish()
}
