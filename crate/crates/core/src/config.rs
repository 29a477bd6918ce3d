//! Plain `key = value` run configuration.
//!
//! One flat namespace covers the airframe, gains, flight, thresholds, grid
//! and batch settings, so a config file and command-line overrides share the
//! same keys. Lists are comma separated. `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Vector3, Vector4};
use thiserror::Error;

use crate::contour::GridSpec;
use crate::explore::ExplorationDirection;
use crate::invertibility::{GaitRestriction, RestrictionKind, TriangleRegion};
use crate::model::{Attitude, Gait};
use crate::sim::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value '{value}' for '{key}': {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected 'key = value', got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("{key}: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Everything a run can be configured with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub sim: SimConfig,
    pub restriction: GaitRestriction,
    pub direction: ExplorationDirection,
    pub grid: GridSpec,
    pub explore_step: f64,
    pub survey_pitch: f64,
    /// Triangle the explorer and survey draw gaits from.
    pub region: TriangleRegion,
    /// Worker threads for batch runs; 0 lets the pool decide.
    pub workers: usize,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            restriction: GaitRestriction::new(RestrictionKind::Equal, 0.0),
            direction: ExplorationDirection::Diagonal,
            grid: GridSpec::default(),
            explore_step: 0.05,
            survey_pitch: 0.1,
            region: TriangleRegion::interested(),
            workers: 0,
            seed: 1,
        }
    }
}

/// Every accepted key, in the order [`Settings::dump`] writes them.
pub const KEYS: &[&str] = &[
    "mass",
    "arm_length",
    "gravity",
    "inertia",
    "k_f",
    "k_m",
    "kp1",
    "kp2",
    "kp3",
    "kpz",
    "gait",
    "initial_position",
    "initial_velocity",
    "initial_attitude",
    "initial_body_rates",
    "initial_rotor_speed",
    "reference",
    "dt",
    "duration",
    "settle_fraction",
    "attitude_tol",
    "altitude_tol",
    "blowup_bound",
    "gimbal_limit",
    "rotor_eps",
    "det_threshold",
    "rotor_speed_cap",
    "restriction",
    "alpha1",
    "direction",
    "grid_n",
    "grid_min",
    "grid_max",
    "explore_step",
    "survey_pitch",
    "triangle",
    "workers",
    "seed",
];

fn bad(key: &str, value: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn number(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = value.trim().parse().map_err(|e| bad(key, value, e))?;
    if !v.is_finite() {
        return Err(bad(key, value, "not finite"));
    }
    Ok(v)
}

fn list<const N: usize>(key: &str, value: &str) -> Result<[f64; N], ConfigError> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != N {
        return Err(bad(key, value, format!("expected {N} comma-separated numbers")));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = number(key, p)?;
    }
    Ok(out)
}

fn positive(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v = number(key, value)?;
    if v <= 0.0 {
        return Err(bad(key, value, "must be positive"));
    }
    Ok(v)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Settings {
    /// Applies one `key = value` pair. Keys may use `-` for `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        let value = value.trim();
        let s = &mut self.sim;
        match k {
            "mass" => s.params.mass = positive(k, value)?,
            "arm_length" => s.params.arm_length = positive(k, value)?,
            "gravity" => s.params.gravity = number(k, value)?,
            "inertia" => s.params.inertia = Vector3::from(list::<3>(k, value)?),
            "k_f" => s.params.k_f = positive(k, value)?,
            "k_m" => s.params.k_m = number(k, value)?,
            "kp1" => s.gains.kp1 = Vector3::from(list::<3>(k, value)?),
            "kp2" => s.gains.kp2 = Vector3::from(list::<3>(k, value)?),
            "kp3" => s.gains.kp3 = Vector3::from(list::<3>(k, value)?),
            "kpz" => {
                let [a, b, c] = list::<3>(k, value)?;
                s.gains.kpz1 = a;
                s.gains.kpz2 = b;
                s.gains.kpz3 = c;
            }
            "gait" => s.gait = Gait(list::<4>(k, value)?),
            "initial_position" => s.initial.position = Vector3::from(list::<3>(k, value)?),
            "initial_velocity" => s.initial.velocity = Vector3::from(list::<3>(k, value)?),
            "initial_attitude" => {
                let [r, p, y] = list::<3>(k, value)?;
                s.initial.attitude = Attitude::new(r, p, y);
            }
            "initial_body_rates" => s.initial.body_rates = Vector3::from(list::<3>(k, value)?),
            "initial_rotor_speed" => s.initial.rotor_speed = number(k, value)?,
            "reference" => s.reference = Vector4::from(list::<4>(k, value)?),
            "dt" => s.dt = positive(k, value)?,
            "duration" => s.duration = positive(k, value)?,
            "settle_fraction" => {
                let v = number(k, value)?;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(bad(k, value, "must be in (0, 1]"));
                }
                s.thresholds.settle_fraction = v;
            }
            "attitude_tol" => s.thresholds.attitude_tol = positive(k, value)?,
            "altitude_tol" => s.thresholds.altitude_tol = positive(k, value)?,
            "blowup_bound" => s.thresholds.blowup_bound = positive(k, value)?,
            "gimbal_limit" => s.thresholds.gimbal_limit = positive(k, value)?,
            "rotor_eps" => s.thresholds.rotor_eps = number(k, value)?,
            "det_threshold" => s.thresholds.det_threshold = number(k, value)?,
            "rotor_speed_cap" => {
                s.rotor_speed_cap = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(positive(k, value)?)
                }
            }
            "restriction" => {
                self.restriction.kind = value.parse().map_err(|e: String| bad(k, value, e))?
            }
            "alpha1" => self.restriction.alpha1 = number(k, value)?,
            "direction" => self.direction = value.parse().map_err(|e: String| bad(k, value, e))?,
            "grid_n" => {
                let n: usize = value.parse().map_err(|e| bad(k, value, e))?;
                if n < 2 {
                    return Err(bad(k, value, "need at least 2 nodes per axis"));
                }
                self.grid.n = n;
            }
            "grid_min" => self.grid.min = number(k, value)?,
            "grid_max" => self.grid.max = number(k, value)?,
            "explore_step" => self.explore_step = positive(k, value)?,
            "survey_pitch" => self.survey_pitch = positive(k, value)?,
            "triangle" => {
                let [a, b, c, d, e, f] = list::<6>(k, value)?;
                self.region =
                    TriangleRegion::new([a, b], [c, d], [e, f]).map_err(|err| bad(k, value, err))?;
            }
            "workers" => self.workers = value.parse().map_err(|e| bad(k, value, e))?,
            "seed" => self.seed = value.parse().map_err(|e| bad(k, value, e))?,
            _ => return Err(ConfigError::UnknownKey(key.clone())),
        }
        Ok(())
    }

    /// Parses a config file body on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            };
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut s = Settings::default();
        s.apply_text(&text)?;
        Ok(s)
    }

    /// Cross-field checks that single-key parsing cannot make.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate().map_err(|e| ConfigError::Invalid {
            key: "sim",
            reason: e.to_string(),
        })?;
        if !(self.grid.max > self.grid.min) {
            return Err(ConfigError::Invalid {
                key: "grid_max",
                reason: format!("must exceed grid_min {}", self.grid.min),
            });
        }
        Ok(())
    }

    /// The current values as a config file that [`Settings::apply_text`]
    /// reads back unchanged.
    pub fn dump(&self) -> String {
        let s = &self.sim;
        let mut out = String::new();
        for &key in KEYS {
            let value = match key {
                "mass" => s.params.mass.to_string(),
                "arm_length" => s.params.arm_length.to_string(),
                "gravity" => s.params.gravity.to_string(),
                "inertia" => join(s.params.inertia.as_slice()),
                "k_f" => s.params.k_f.to_string(),
                "k_m" => s.params.k_m.to_string(),
                "kp1" => join(s.gains.kp1.as_slice()),
                "kp2" => join(s.gains.kp2.as_slice()),
                "kp3" => join(s.gains.kp3.as_slice()),
                "kpz" => join(&[s.gains.kpz1, s.gains.kpz2, s.gains.kpz3]),
                "gait" => join(&s.gait.0),
                "initial_position" => join(s.initial.position.as_slice()),
                "initial_velocity" => join(s.initial.velocity.as_slice()),
                "initial_attitude" => join(s.initial.attitude.as_vector().as_slice()),
                "initial_body_rates" => join(s.initial.body_rates.as_slice()),
                "initial_rotor_speed" => s.initial.rotor_speed.to_string(),
                "reference" => join(s.reference.as_slice()),
                "dt" => s.dt.to_string(),
                "duration" => s.duration.to_string(),
                "settle_fraction" => s.thresholds.settle_fraction.to_string(),
                "attitude_tol" => s.thresholds.attitude_tol.to_string(),
                "altitude_tol" => s.thresholds.altitude_tol.to_string(),
                "blowup_bound" => s.thresholds.blowup_bound.to_string(),
                "gimbal_limit" => s.thresholds.gimbal_limit.to_string(),
                "rotor_eps" => s.thresholds.rotor_eps.to_string(),
                "det_threshold" => s.thresholds.det_threshold.to_string(),
                "rotor_speed_cap" => s
                    .rotor_speed_cap
                    .map_or_else(|| "none".to_string(), |c| c.to_string()),
                "restriction" => self.restriction.kind.name().to_string(),
                "alpha1" => self.restriction.alpha1.to_string(),
                "direction" => self.direction.name().to_string(),
                "grid_n" => self.grid.n.to_string(),
                "grid_min" => self.grid.min.to_string(),
                "grid_max" => self.grid.max.to_string(),
                "explore_step" => self.explore_step.to_string(),
                "survey_pitch" => self.survey_pitch.to_string(),
                "triangle" => join(&self.region.vertices().concat()),
                "workers" => self.workers.to_string(),
                "seed" => self.seed.to_string(),
                _ => unreachable!("key table and dump out of sync"),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let d = Settings::default();
        let mut back = Settings::default();
        back.apply_text(&d.dump()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn every_key_is_accepted() {
        let text = Settings::default().dump();
        assert_eq!(text.lines().count(), KEYS.len());
        for line in text.lines() {
            let (k, v) = line.split_once('=').unwrap();
            Settings::default().set(k, v).unwrap();
        }
    }

    #[test]
    fn parses_comments_lists_and_dashes() {
        let mut s = Settings::default();
        s.apply_text(
            "# a flight\n\ngait = -0.1, 0.1, -0.2, 0.1   # Gait 1\nkpz=1,2,3\ngrid-n = 51\nrotor_speed_cap = 900\nrestriction = negative-half\n",
        )
        .unwrap();
        assert_eq!(s.sim.gait, Gait::new(-0.1, 0.1, -0.2, 0.1));
        assert_eq!((s.sim.gains.kpz1, s.sim.gains.kpz2, s.sim.gains.kpz3), (1.0, 2.0, 3.0));
        assert_eq!(s.grid.n, 51);
        assert_eq!(s.sim.rotor_speed_cap, Some(900.0));
        assert_eq!(s.restriction.kind, RestrictionKind::NegativeHalf);
    }

    #[test]
    fn rejects_bad_input() {
        let mut s = Settings::default();
        assert!(matches!(s.set("warp", "9"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(s.set("dt", "-1"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(s.set("dt", "nan"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(s.set("gait", "1,2,3"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(s.set("triangle", "0,0,1,1,2,2"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(s.apply_text("dt 0.1"), Err(ConfigError::Syntax { line: 1, .. })));
        s.set("gait", "4,0,0,0").unwrap();
        assert!(s.validate().is_err());
    }

    #[test]
    fn later_values_override_earlier() {
        let mut s = Settings::default();
        s.apply_text("duration = 3\nduration = 4\n").unwrap();
        s.set("duration", "5").unwrap();
        assert_eq!(s.sim.duration, 5.0);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = Settings::from_file(Path::new("/nonexistent/tilt.conf")).unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }));
    }

    #[test]
    fn reads_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "alpha1 = 0.2\nrestriction = half\n").unwrap();
        let s = Settings::from_file(&path).unwrap();
        assert_eq!(s.restriction, GaitRestriction::new(RestrictionKind::Half, 0.2));
    }
}
