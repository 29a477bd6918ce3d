//! Where the decoupling matrix loses rank, as a function of the gait.
//!
//! The ground truth is the determinant of the torque rows of the airframe
//! stacked over the thrust-direction row at a given roll and pitch. The
//! closed-form level-attitude polynomial is carried alongside as a cross-check.

use std::io::Write;

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{zero_contours, GridSpec, SampledField};
use crate::linalg;
use crate::model::{torque_map, Gait, VehicleParams};

/// How `alpha3` is tied to `alpha1` in a restricted gait family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionKind {
    /// `alpha3 = alpha1`
    Equal,
    /// `alpha3 = 2 alpha1`
    Half,
    /// `alpha3 = -alpha1`
    Negative,
    /// `alpha3 = -2 alpha1`
    NegativeHalf,
}

impl RestrictionKind {
    pub const ALL: [RestrictionKind; 4] = [
        RestrictionKind::Equal,
        RestrictionKind::Half,
        RestrictionKind::Negative,
        RestrictionKind::NegativeHalf,
    ];

    pub fn factor(self) -> f64 {
        match self {
            RestrictionKind::Equal => 1.0,
            RestrictionKind::Half => 2.0,
            RestrictionKind::Negative => -1.0,
            RestrictionKind::NegativeHalf => -2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RestrictionKind::Equal => "equal",
            RestrictionKind::Half => "half",
            RestrictionKind::Negative => "negative",
            RestrictionKind::NegativeHalf => "negative_half",
        }
    }

    /// The five `alpha1` values studied for this family.
    pub fn standard_alpha1(self) -> [f64; 5] {
        let top = match self {
            RestrictionKind::Equal => 0.15,
            RestrictionKind::Half => 0.2,
            RestrictionKind::Negative => 1.4,
            RestrictionKind::NegativeHalf => 0.3,
        };
        [-top, -0.5 * top, 0.0, 0.5 * top, top]
    }
}

impl std::str::FromStr for RestrictionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "equal" => Ok(RestrictionKind::Equal),
            "half" => Ok(RestrictionKind::Half),
            "negative" => Ok(RestrictionKind::Negative),
            "negative_half" | "negativehalf" => Ok(RestrictionKind::NegativeHalf),
            other => Err(format!(
                "unknown restriction '{other}' (expected equal, half, negative or negative_half)"
            )),
        }
    }
}

/// A one-parameter family of front/back tilt angles; the free pair is
/// `(alpha2, alpha4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitRestriction {
    pub kind: RestrictionKind,
    pub alpha1: f64,
}

impl GaitRestriction {
    pub fn new(kind: RestrictionKind, alpha1: f64) -> Self {
        Self { kind, alpha1 }
    }

    pub fn alpha3(&self) -> f64 {
        self.kind.factor() * self.alpha1
    }

    pub fn gait(&self, alpha2: f64, alpha4: f64) -> Gait {
        Gait([self.alpha1, alpha2, self.alpha3(), alpha4])
    }

    /// All twenty restricted cases, family by family.
    pub fn standard_cases() -> Vec<GaitRestriction> {
        RestrictionKind::ALL
            .iter()
            .flat_map(|&k| k.standard_alpha1().map(|a| GaitRestriction::new(k, a)))
            .collect()
    }
}

/// The 4x4 matrix whose determinant decides invertibility: three torque
/// rows over the thrust-direction row at roll `phi` and pitch `theta`.
pub fn invertibility_matrix(gait: &Gait, phi: f64, theta: f64, params: &VehicleParams) -> Matrix4<f64> {
    let tau = torque_map(gait, params);
    let [s1, s2, s3, s4] = gait.sin();
    let [c1, c2, c3, c4] = gait.cos();
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let level = [
        ct * sp * s1 - ct * cp * c1,
        -st * s2 + ct * cp * c2,
        -ct * sp * s3 - ct * cp * c3,
        st * s4 + ct * cp * c4,
    ];
    Matrix4::from_fn(|i, j| if i < 3 { tau[(i, j)] } else { level[j] })
}

pub fn determinant_general(gait: &Gait, phi: f64, theta: f64, params: &VehicleParams) -> f64 {
    linalg::determinant(&invertibility_matrix(gait, phi, theta, params))
}

/// Determinant at level attitude divided by a quarter of its zero-gait
/// value, so the zero gait maps to 4 like the closed-form polynomial.
pub fn normalized_level_determinant(gait: &Gait, params: &VehicleParams) -> f64 {
    determinant_general(gait, 0.0, 0.0, params) / level_scale(params)
}

/// Quarter of the level determinant at the zero gait.
pub fn level_scale(params: &VehicleParams) -> f64 {
    determinant_general(&Gait::ZERO, 0.0, 0.0, params) / 4.0
}

/// The level-attitude invertibility polynomial with its rounded
/// coefficients.
pub fn polynomial_level(gait: &Gait) -> f64 {
    let [s1, s2, s3, s4] = gait.sin();
    let [c1, c2, c3, c4] = gait.cos();
    4.000 * c1 * c2 * c3 * c4
        + 5.592 * (c1 * c2 * c3 * s4 - c1 * c2 * s3 * c4 + c1 * s2 * c3 * c4 - s1 * c2 * c3 * c4)
        + 0.9716 * (c1 * c2 * s3 * s4 + c1 * s2 * s3 * c4 + s1 * c2 * c3 * s4 + s1 * s2 * c3 * c4)
        + 2.000 * (-c1 * s2 * c3 * s4 - s1 * c2 * s3 * c4)
        + 0.1687 * (-c1 * s2 * s3 * s4 + s1 * c2 * s3 * s4 - s1 * s2 * c3 * s4 + s1 * s2 * s3 * c4)
}

/// How well the matrix determinant and the closed-form polynomial agree on
/// uniformly sampled gaits at level attitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionalityReport {
    pub samples: usize,
    /// Samples with `|polynomial| > min_polynomial` that entered the fit.
    pub used: usize,
    pub min_polynomial: f64,
    /// Median of `det / polynomial`.
    pub fitted_ratio: f64,
    /// Max of `|ratio / fitted_ratio - 1|` over the used samples.
    pub max_relative_deviation: f64,
    /// Max of `|det / fitted_ratio - polynomial|` over all samples, in
    /// polynomial units.
    pub max_abs_residual: f64,
    pub relative_tolerance: f64,
    /// True when the deviation is within `relative_tolerance`.
    pub uniform: bool,
}

pub fn proportionality_report(params: &VehicleParams, samples: usize, seed: u64) -> ProportionalityReport {
    const MIN_POLY: f64 = 1e-3;
    const REL_TOL: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = std::f64::consts::PI;
    let pairs: Vec<(f64, f64)> = (0..samples)
        .map(|_| {
            let g = Gait(std::array::from_fn(|_| rng.random_range(-pi..pi)));
            (determinant_general(&g, 0.0, 0.0, params), polynomial_level(&g))
        })
        .collect();
    let mut ratios: Vec<f64> = pairs
        .iter()
        .filter(|(_, p)| p.abs() > MIN_POLY)
        .map(|(d, p)| d / p)
        .collect();
    ratios.sort_by(f64::total_cmp);
    let fitted = if ratios.is_empty() {
        f64::NAN
    } else {
        ratios[ratios.len() / 2]
    };
    let max_rel = ratios
        .iter()
        .map(|r| (r / fitted - 1.0).abs())
        .fold(0.0, f64::max);
    let max_abs = pairs
        .iter()
        .map(|(d, p)| (d / fitted - p).abs())
        .fold(0.0, f64::max);
    ProportionalityReport {
        samples,
        used: ratios.len(),
        min_polynomial: MIN_POLY,
        fitted_ratio: fitted,
        max_relative_deviation: max_rel,
        max_abs_residual: max_abs,
        relative_tolerance: REL_TOL,
        uniform: max_rel <= REL_TOL,
    }
}

/// Parameters in `[0, 1]` where `f` changes sign, sampled at `samples + 1`
/// evenly spaced points and refined by bisection.
pub fn sign_changes(f: impl Fn(f64) -> f64, samples: usize) -> Vec<f64> {
    let n = samples.max(1);
    let mut roots = Vec::new();
    let mut t0 = 0.0;
    let mut v0 = f(0.0);
    for k in 1..=n {
        let t1 = k as f64 / n as f64;
        let v1 = f(t1);
        if (v0 >= 0.0) != (v1 >= 0.0) {
            let (mut lo, mut hi) = (t0, t1);
            let lo_pos = v0 >= 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (f(mid) >= 0.0) == lo_pos {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        t0 = t1;
        v0 = v1;
    }
    roots
}

/// Sign-change comparison along random segments of the `(alpha2, alpha4)`
/// plane, with `alpha1` and `alpha3` drawn per segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroSetReport {
    pub segments: usize,
    pub samples_per_segment: usize,
    /// Roots found on the determinant.
    pub roots: usize,
    /// Segments where the two functions change sign a different number of times.
    pub count_mismatches: usize,
    /// Largest gap between paired roots, in segment parameter.
    pub max_parameter_gap: f64,
    /// The same gap in radians.
    pub max_angle_gap: f64,
}

impl ZeroSetReport {
    pub fn agrees(&self, tolerance: f64) -> bool {
        self.count_mismatches == 0 && self.max_parameter_gap <= tolerance
    }
}

pub fn zero_set_agreement(
    params: &VehicleParams,
    segments: usize,
    samples_per_segment: usize,
    seed: u64,
) -> ZeroSetReport {
    let pi = std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ZeroSetReport {
        segments,
        samples_per_segment,
        roots: 0,
        count_mismatches: 0,
        max_parameter_gap: 0.0,
        max_angle_gap: 0.0,
    };
    for _ in 0..segments {
        let a1 = rng.random_range(-pi..pi);
        let a3 = rng.random_range(-pi..pi);
        let p: [f64; 4] = std::array::from_fn(|_| rng.random_range(-pi..pi));
        let gait = |t: f64| Gait([a1, p[0] + (p[2] - p[0]) * t, a3, p[1] + (p[3] - p[1]) * t]);
        let det_roots = sign_changes(|t| determinant_general(&gait(t), 0.0, 0.0, params), samples_per_segment);
        let poly_roots = sign_changes(|t| polynomial_level(&gait(t)), samples_per_segment);
        report.roots += det_roots.len();
        if det_roots.len() != poly_roots.len() {
            report.count_mismatches += 1;
            continue;
        }
        let length = (p[2] - p[0]).hypot(p[3] - p[1]);
        for (a, b) in det_roots.iter().zip(&poly_roots) {
            let gap = (a - b).abs();
            report.max_parameter_gap = report.max_parameter_gap.max(gap);
            report.max_angle_gap = report.max_angle_gap.max(gap * length);
        }
    }
    report
}

/// Level determinant over the `(alpha2, alpha4)` grid, normalized as in
/// [`normalized_level_determinant`]. Rows are computed in parallel and
/// assembled in grid order.
pub fn determinant_surface(restriction: &GaitRestriction, grid: &GridSpec, params: &VehicleParams) -> SampledField {
    let xs = grid.coords();
    let scale = level_scale(params);
    let values = xs
        .par_iter()
        .flat_map_iter(|&a4| {
            xs.iter().map(move |&a2| {
                determinant_general(&restriction.gait(a2, a4), 0.0, 0.0, params) / scale
            })
        })
        .collect();
    SampledField { grid: *grid, values }
}

pub fn write_surface_csv<W: Write>(field: &SampledField, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alpha2", "alpha4", "det"])?;
    let xs = field.grid.coords();
    for (j, a4) in xs.iter().enumerate() {
        for (i, a2) in xs.iter().enumerate() {
            w.write_record([format!("{a2:e}"), format!("{a4:e}"), format!("{:e}", field.at(i, j))])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Zero set of the level determinant for one restricted family member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroCurveSet {
    pub restriction: GaitRestriction,
    pub grid: GridSpec,
    /// `(alpha2, alpha4)` vertices; closed curves repeat their first vertex.
    pub polylines: Vec<Vec<[f64; 2]>>,
}

impl ZeroCurveSet {
    pub fn vertex_count(&self) -> usize {
        self.polylines.iter().map(Vec::len).sum()
    }
}

pub fn zero_curves(restriction: &GaitRestriction, grid: &GridSpec, params: &VehicleParams) -> ZeroCurveSet {
    let field = determinant_surface(restriction, grid, params);
    let scale = level_scale(params);
    let f = |a2: f64, a4: f64| determinant_general(&restriction.gait(a2, a4), 0.0, 0.0, params) / scale;
    ZeroCurveSet {
        restriction: *restriction,
        grid: *grid,
        polylines: zero_contours(&field, &f),
    }
}

/// One curve set per `alpha1`, in the order given.
pub fn zero_curves_for(
    kind: RestrictionKind,
    alpha1_values: &[f64],
    grid: &GridSpec,
    params: &VehicleParams,
) -> Vec<ZeroCurveSet> {
    alpha1_values
        .iter()
        .map(|&a| zero_curves(&GaitRestriction::new(kind, a), grid, params))
        .collect()
}

pub fn write_curves_csv<W: Write>(curves: &ZeroCurveSet, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve_id", "alpha2", "alpha4"])?;
    for (id, line) in curves.polylines.iter().enumerate() {
        for p in line {
            w.write_record([id.to_string(), format!("{:e}", p[0]), format!("{:e}", p[1])])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("triangle vertices are collinear or not finite")]
pub struct DegenerateTriangle;

/// A closed triangle in the `(alpha2, alpha4)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleRegion {
    vertices: [[f64; 2]; 3],
}

const BOUNDARY_TOL: f64 = 1e-12;

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl TriangleRegion {
    pub fn new(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> Result<Self, DegenerateTriangle> {
        let area2 = cross(a, b, c);
        if !area2.is_finite() || area2 == 0.0 {
            return Err(DegenerateTriangle);
        }
        Ok(Self { vertices: [a, b, c] })
    }

    /// U(-1.5, 1.5), V(1.5, -1.5), M(1, 1): the region gaits are drawn from.
    pub fn interested() -> Self {
        Self {
            vertices: [[-1.5, 1.5], [1.5, -1.5], [1.0, 1.0]],
        }
    }

    /// (-1.3, 1.3), (1.3, -1.3), (1, 1): the region reported as stable.
    pub fn stable_core() -> Self {
        Self {
            vertices: [[-1.3, 1.3], [1.3, -1.3], [1.0, 1.0]],
        }
    }

    pub fn vertices(&self) -> [[f64; 2]; 3] {
        self.vertices
    }

    pub fn area(&self) -> f64 {
        let [a, b, c] = self.vertices;
        0.5 * cross(a, b, c).abs()
    }

    /// Barycentric coordinates of `p`.
    pub fn barycentric(&self, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.vertices;
        let total = cross(a, b, c);
        [cross(p, b, c) / total, cross(a, p, c) / total, cross(a, b, p) / total]
    }

    /// Boundary points count as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.barycentric(p).iter().all(|&l| l >= -BOUNDARY_TOL)
    }

    pub fn edges(&self) -> [([f64; 2], [f64; 2]); 3] {
        let [a, b, c] = self.vertices;
        [(a, b), (b, c), (c, a)]
    }
}

pub fn in_triangle(point: [f64; 2], region: &TriangleRegion) -> bool {
    region.contains(point)
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed segments `p1 p2` and `q1 q2` share a point.
pub fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

/// True iff no curve vertex lies in the region and no curve segment crosses
/// its boundary.
pub fn region_clear_of_curves(region: &TriangleRegion, curves: &ZeroCurveSet) -> bool {
    for line in &curves.polylines {
        if line.iter().any(|&p| region.contains(p)) {
            return false;
        }
        for w in line.windows(2) {
            if region.edges().iter().any(|&(a, b)| segments_intersect(w[0], w[1], a, b)) {
                return false;
            }
        }
    }
    true
}
