use std::io::Write;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

/// Column order of the telemetry CSV.
pub const TELEMETRY_COLUMNS: [&str; 17] = [
    "t", "phi", "theta", "psi", "z", "p", "q", "r", "vz", "w1", "w2", "w3", "w4", "det", "ma4",
    "x", "y",
];

/// One sample per integration step, taken before the step's command is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub t: f64,
    /// `(roll, pitch, yaw, z)`.
    pub y: [f64; 4],
    /// `(p, q, r, vz)`.
    pub y_rate: [f64; 4],
    /// Signed rotor speeds (rad/s).
    pub rotors: [f64; 4],
    /// Decoupling determinant; NaN when no decoupling matrix was formed.
    pub det: f64,
    pub ma4: f64,
    /// Horizontal position `(x, y)`.
    pub xy: [f64; 2],
}

impl TelemetryRow {
    pub fn min_abs_rotor(&self) -> f64 {
        self.rotors.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()))
    }
}

/// A flight record together with the targets it was flown against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub rows: Vec<TelemetryRow>,
    /// Planned flight duration (s).
    pub duration: f64,
    pub dt: f64,
    /// Constant output reference the errors are measured against.
    pub reference: Vector4<f64>,
}

impl Telemetry {
    /// True when the record reaches the planned end time.
    pub fn is_complete(&self) -> bool {
        self.rows
            .last()
            .is_some_and(|r| r.t >= self.duration - 0.5 * self.dt)
    }
}

pub fn write_telemetry_csv<W: Write>(telemetry: &Telemetry, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TELEMETRY_COLUMNS)?;
    for row in &telemetry.rows {
        let fields = [row.t]
            .into_iter()
            .chain(row.y)
            .chain(row.y_rate)
            .chain(row.rotors)
            .chain([row.det, row.ma4])
            .chain(row.xy);
        w.write_record(fields.map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}
