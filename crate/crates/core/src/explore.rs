//! Batch gait exploration: marching rays out of the zero gait and surveying
//! a lattice of the region of interest, one closed-loop flight per sample.
//!
//! Flights run on a worker pool; results are always reported in sample
//! order, so output does not depend on scheduling.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::invertibility::{GaitRestriction, TriangleRegion};
use crate::sim::{run_classification, GaitClassification, Reason, SimConfig, Verdict};

/// A ray in the `(alpha2, alpha4)` plane starting at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationDirection {
    /// `alpha4 = -alpha2`, `alpha2` in `[-1.5, 0]`.
    AntiDiagNegative,
    /// `alpha4 = -alpha2`, `alpha2` in `[0, 1.5]`.
    AntiDiagPositive,
    /// `alpha4 = alpha2`, `alpha2` in `[0, 1]`.
    Diagonal,
}

impl ExplorationDirection {
    pub const ALL: [ExplorationDirection; 3] = [
        ExplorationDirection::AntiDiagNegative,
        ExplorationDirection::AntiDiagPositive,
        ExplorationDirection::Diagonal,
    ];

    /// Sign of `alpha2` along the ray and the largest `|alpha2|`.
    pub fn domain(self) -> (f64, f64) {
        match self {
            ExplorationDirection::AntiDiagNegative => (-1.0, 1.5),
            ExplorationDirection::AntiDiagPositive => (1.0, 1.5),
            ExplorationDirection::Diagonal => (1.0, 1.0),
        }
    }

    /// The `(alpha2, alpha4)` point at a given `alpha2`.
    pub fn point(self, alpha2: f64) -> [f64; 2] {
        match self {
            ExplorationDirection::Diagonal => [alpha2, alpha2],
            _ => [alpha2, -alpha2],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExplorationDirection::AntiDiagNegative => "anti_diag_negative",
            ExplorationDirection::AntiDiagPositive => "anti_diag_positive",
            ExplorationDirection::Diagonal => "diagonal",
        }
    }
}

impl std::str::FromStr for ExplorationDirection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "anti_diag_negative" | "antidiagnegative" => Ok(ExplorationDirection::AntiDiagNegative),
            "anti_diag_positive" | "antidiagpositive" => Ok(ExplorationDirection::AntiDiagPositive),
            "diagonal" => Ok(ExplorationDirection::Diagonal),
            other => Err(format!(
                "unknown direction '{other}' (expected anti_diag_negative, anti_diag_positive or diagonal)"
            )),
        }
    }
}

/// One simulated gait of a batch run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitSample {
    pub index: usize,
    pub alpha2: f64,
    pub alpha4: f64,
    pub verdict: Verdict,
    pub reason: Reason,
    pub t_end: f64,
    pub min_abs_rotor_speed: f64,
    pub max_attitude_error: f64,
    pub max_altitude_error: f64,
}

impl GaitSample {
    fn new(index: usize, p: [f64; 2], c: GaitClassification) -> Self {
        Self {
            index,
            alpha2: p[0],
            alpha4: p[1],
            verdict: c.verdict,
            reason: c.reason,
            t_end: c.t_end,
            min_abs_rotor_speed: c.min_abs_rotor_speed,
            max_attitude_error: c.max_attitude_error,
            max_altitude_error: c.max_altitude_error,
        }
    }

    pub fn is_stable(&self) -> bool {
        self.verdict == Verdict::Stable
    }
}

/// Why a direction march ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarchEnd {
    DomainEnd,
    NonStable,
}

/// Outcome of marching one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalGaitResult {
    pub restriction: GaitRestriction,
    pub alpha3: f64,
    pub direction: ExplorationDirection,
    pub step: f64,
    /// Signed critical `alpha2`: every sample with `|alpha2| <= |alpha2_m|`
    /// is Stable. Zero when the first sample already fails.
    pub alpha2_m: f64,
    pub ended_by: MarchEnd,
    /// Samples in march order, up to and including the first non-Stable one.
    pub samples: Vec<GaitSample>,
}

impl CriticalGaitResult {
    pub const SEMANTICS: &'static str =
        "alpha2_m is resolved at the sampling step: all sampled points with |alpha2| <= |alpha2_m| are Stable";

    /// The gait at the critical point.
    pub fn critical_gait(&self) -> crate::model::Gait {
        let p = self.direction.point(self.alpha2_m);
        self.restriction.gait(p[0], p[1])
    }
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool")
}

/// Classifies each point in parallel; results follow the input order.
pub fn classify_points(
    restriction: &GaitRestriction,
    points: &[[f64; 2]],
    sim: &SimConfig,
    workers: usize,
) -> Vec<GaitSample> {
    pool(workers).install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &p)| {
                let cfg = sim.with_gait(restriction.gait(p[0], p[1]));
                GaitSample::new(i, p, run_classification(&cfg))
            })
            .collect()
    })
}

/// `alpha2` values along the ray, `0, step, 2 step, ...` up to the domain
/// end, keeping only those inside `region`.
pub fn ray_points(direction: ExplorationDirection, step: f64, region: &TriangleRegion) -> Vec<[f64; 2]> {
    assert!(step > 0.0, "exploration step must be positive");
    let (sign, limit) = direction.domain();
    let count = (limit / step + 1e-9).floor() as usize;
    (0..=count)
        .map(|k| direction.point(sign * k as f64 * step))
        .filter(|&p| region.contains(p))
        .collect()
}

/// Marches from the zero gait outward and stops at the first non-Stable
/// sample or the end of the direction's domain.
pub fn explore_direction(
    restriction: &GaitRestriction,
    direction: ExplorationDirection,
    step: f64,
    sim: &SimConfig,
    region: &TriangleRegion,
    workers: usize,
) -> CriticalGaitResult {
    let points = ray_points(direction, step, region);
    let batch = if workers == 0 {
        rayon::current_num_threads()
    } else {
        workers
    }
    .max(1);

    let mut samples: Vec<GaitSample> = Vec::new();
    let mut ended_by = MarchEnd::DomainEnd;
    // evaluate a batch at a time and cut at the first failure
    'march: for chunk in points.chunks(batch) {
        let offset = samples.len();
        for mut s in classify_points(restriction, chunk, sim, workers) {
            s.index += offset;
            let stable = s.is_stable();
            samples.push(s);
            if !stable {
                ended_by = MarchEnd::NonStable;
                break 'march;
            }
        }
    }
    let alpha2_m = samples
        .iter()
        .take_while(|s| s.is_stable())
        .last()
        .map_or(0.0, |s| s.alpha2);
    CriticalGaitResult {
        restriction: *restriction,
        alpha3: restriction.alpha3(),
        direction,
        step,
        alpha2_m,
        ended_by,
        samples,
    }
}

/// Triangle `(-a, a), (a, -a), (b, b)`, the shape of the reported stable
/// regions. `a = b = 0` is the single point at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullTriangle {
    pub a: f64,
    pub b: f64,
    pub vertices: [[f64; 2]; 3],
    pub area: f64,
}

impl HullTriangle {
    pub fn new(a: f64, b: f64) -> Self {
        Self {
            a,
            b,
            vertices: [[-a, a], [a, -a], [b, b]],
            area: 2.0 * a * b,
        }
    }

    /// Closed membership, robust to the degenerate (segment or point) cases.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        const TOL: f64 = 1e-12;
        // u along the anti-diagonal, v along the diagonal
        let u = 0.5 * (p[0] - p[1]);
        let v = 0.5 * (p[0] + p[1]);
        if v < -TOL || v > self.b + TOL {
            return false;
        }
        let half_width = if self.b > 0.0 { self.a * (1.0 - v / self.b) } else { self.a };
        u.abs() <= half_width.max(0.0) + TOL
    }

    /// True when this hull covers the hull `other`.
    pub fn covers(&self, other: &HullTriangle) -> bool {
        other.vertices.iter().all(|&p| self.contains(p))
    }
}

/// Survey of one restricted case over the lattice of a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRegionReport {
    pub restriction: GaitRestriction,
    pub alpha3: f64,
    pub pitch: f64,
    pub region: [[f64; 2]; 3],
    /// Samples in lattice order (rows of increasing `alpha4`, then `alpha2`).
    pub samples: Vec<GaitSample>,
    pub stable: usize,
    /// Largest [`HullTriangle`] on the lattice holding only Stable samples;
    /// absent when the zero gait itself is not Stable.
    pub hull: Option<HullTriangle>,
}

impl AdmissibleRegionReport {
    pub fn non_stable(&self) -> impl Iterator<Item = &GaitSample> {
        self.samples.iter().filter(|s| !s.is_stable())
    }
}

/// Lattice points `(i pitch, j pitch)` inside `region`, ordered by `j` then `i`.
pub fn lattice(region: &TriangleRegion, pitch: f64) -> Vec<[f64; 2]> {
    assert!(pitch > 0.0, "survey pitch must be positive");
    let v = region.vertices();
    let lo = |k: usize| v.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
    let hi = |k: usize| v.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
    let range = |k: usize| {
        let a = (lo(k) / pitch - 1e-9).ceil() as i64;
        let b = (hi(k) / pitch + 1e-9).floor() as i64;
        a..=b
    };
    let mut out = Vec::new();
    for j in range(1) {
        for i in range(0) {
            // snap so that e.g. 13 * 0.1 prints as 1.3
            let snap = |n: i64| (n as f64 * pitch * 1e12).round() / 1e12;
            let p = [snap(i), snap(j)];
            if region.contains(p) {
                out.push(p);
            }
        }
    }
    out
}

/// Largest hull (by area, then `a`, then `b`) with `a` and `b` on the
/// lattice, `a <= a_max`, `b <= b_max`, that contains no non-Stable sample.
pub fn fit_hull(samples: &[GaitSample], pitch: f64, a_max: f64, b_max: f64) -> Option<HullTriangle> {
    let origin_ok = samples
        .iter()
        .find(|s| s.alpha2.abs() < 1e-12 && s.alpha4.abs() < 1e-12)
        .is_some_and(GaitSample::is_stable);
    if !origin_ok {
        return None;
    }
    let bad: Vec<[f64; 2]> = samples
        .iter()
        .filter(|s| !s.is_stable())
        .map(|s| [s.alpha2, s.alpha4])
        .collect();
    let steps = |max: f64| (0..=((max / pitch + 1e-9).floor() as usize)).map(move |k| k as f64 * pitch);
    let mut best: Option<HullTriangle> = None;
    for a in steps(a_max) {
        for b in steps(b_max) {
            let h = HullTriangle::new(a, b);
            if bad.iter().any(|&p| h.contains(p)) {
                continue;
            }
            let better = match &best {
                None => true,
                Some(cur) => (h.area, h.a, h.b) > (cur.area, cur.a, cur.b),
            };
            if better {
                best = Some(h);
            }
        }
    }
    best
}

/// Flies every lattice gait of `region` and fits the stable hull.
pub fn survey_region(
    restriction: &GaitRestriction,
    pitch: f64,
    sim: &SimConfig,
    region: &TriangleRegion,
    workers: usize,
) -> AdmissibleRegionReport {
    survey_points(restriction, pitch, &lattice(region, pitch), sim, region, workers)
}

/// As [`survey_region`] over explicit points; points outside `region` are
/// dropped.
pub fn survey_points(
    restriction: &GaitRestriction,
    pitch: f64,
    points: &[[f64; 2]],
    sim: &SimConfig,
    region: &TriangleRegion,
    workers: usize,
) -> AdmissibleRegionReport {
    let inside: Vec<[f64; 2]> = points.iter().copied().filter(|&p| region.contains(p)).collect();
    let samples = classify_points(restriction, &inside, sim, workers);
    let v = region.vertices();
    // the hull may not reach past the sampled extent
    let extent = |pts: &mut dyn Iterator<Item = [f64; 2]>| {
        pts.fold((0.0_f64, 0.0_f64), |(a, b), p| {
            (a.max(0.5 * (p[0] - p[1]).abs()), b.max(0.5 * (p[0] + p[1])))
        })
    };
    let (region_a, region_b) = extent(&mut v.iter().copied());
    let (sampled_a, sampled_b) = extent(&mut inside.iter().copied());
    let (a_max, b_max) = (region_a.min(sampled_a), region_b.min(sampled_b));
    AdmissibleRegionReport {
        restriction: *restriction,
        alpha3: restriction.alpha3(),
        pitch,
        region: v,
        stable: samples.iter().filter(|s| s.is_stable()).count(),
        hull: fit_hull(&samples, pitch, a_max, b_max),
        samples,
    }
}

/// NDJSON: one `sample` record per ray sample, then one `summary` record.
pub fn write_exploration_ndjson<W: Write>(result: &CriticalGaitResult, mut out: W) -> std::io::Result<()> {
    for s in &result.samples {
        let rec = serde_json::json!({
            "record": "sample",
            "restriction": result.restriction.kind,
            "alpha1": result.restriction.alpha1,
            "alpha3": result.alpha3,
            "direction": result.direction,
            "sample": s,
        });
        writeln!(out, "{rec}")?;
    }
    let summary = serde_json::json!({
        "record": "summary",
        "restriction": result.restriction.kind,
        "alpha1": result.restriction.alpha1,
        "alpha3": result.alpha3,
        "direction": result.direction,
        "step": result.step,
        "alpha2_m": result.alpha2_m,
        "critical_gait": result.critical_gait().0,
        "ended_by": result.ended_by,
        "samples": result.samples.len(),
        "semantics": CriticalGaitResult::SEMANTICS,
    });
    writeln!(out, "{summary}")
}

/// NDJSON: one `sample` record per lattice point, then one `summary` record.
pub fn write_survey_ndjson<W: Write>(report: &AdmissibleRegionReport, mut out: W) -> std::io::Result<()> {
    for s in &report.samples {
        let rec = serde_json::json!({
            "record": "sample",
            "restriction": report.restriction.kind,
            "alpha1": report.restriction.alpha1,
            "alpha3": report.alpha3,
            "sample": s,
        });
        writeln!(out, "{rec}")?;
    }
    let summary = serde_json::json!({
        "record": "summary",
        "restriction": report.restriction.kind,
        "alpha1": report.restriction.alpha1,
        "alpha3": report.alpha3,
        "pitch": report.pitch,
        "region": report.region,
        "samples": report.samples.len(),
        "stable": report.stable,
        "hull": report.hull,
    });
    writeln!(out, "{summary}")
}
