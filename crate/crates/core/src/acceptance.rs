//! The acceptance checks, runnable from tests and from the command line.
//!
//! Each check measures its quantities, compares them against fixed
//! tolerances and a runtime budget, and reports a one-line outcome. Nothing
//! here panics on a failed check.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::explore::{lattice, survey_region, AdmissibleRegionReport};
use crate::invertibility::{
    determinant_general, polynomial_level, proportionality_report, zero_set_agreement,
    GaitRestriction, RestrictionKind, TriangleRegion,
};
use crate::linearization::{
    build_decoupling, invert_allocate, output_second_derivative, DEFAULT_SINGULARITY_THRESHOLD,
};
use crate::model::{translational_accel, Attitude, Gait, VehicleParams};
use crate::sim::{integrate, run, step, Controller, SimConfig, Verdict, ZeroInput};
use crate::state::VehicleState;

pub const GAIT_1: Gait = Gait([-0.1, 0.1, -0.2, 0.1]);
pub const GAIT_2: Gait = Gait([-0.15, -0.1, 0.3, -0.1]);

#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    /// Measured values, human readable.
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {}: {} {} | {} | {:.3?} of {:?}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail,
            self.elapsed,
            self.budget
        )
    }
}

fn timed(
    id: u8,
    title: &'static str,
    budget: Duration,
    check: impl FnOnce() -> (bool, String),
) -> CriterionOutcome {
    let start = Instant::now();
    let (ok, detail) = check();
    let elapsed = start.elapsed();
    let in_budget = elapsed <= budget;
    let detail = if in_budget {
        detail
    } else {
        format!("{detail}; over runtime budget")
    };
    CriterionOutcome {
        id,
        title,
        passed: ok && in_budget,
        detail,
        elapsed,
        budget,
    }
}

/// Level determinant at the zero gait is nonzero and the closed-form polynomial
/// reads exactly 4 there.
pub fn criterion_1() -> CriterionOutcome {
    let p = VehicleParams::default();
    timed(1, "determinant ground truth", Duration::from_millis(1), || {
        let det = determinant_general(&Gait::ZERO, 0.0, 0.0, &p);
        let poly = polynomial_level(&Gait::ZERO);
        (
            det != 0.0 && det.is_finite() && poly == 4.0,
            format!("det={det:e} polynomial={poly}"),
        )
    })
}

/// Sign changes of the determinant and the closed-form polynomial agree along
/// random segments; the proportionality fit is reported alongside.
pub fn criterion_2() -> CriterionOutcome {
    let p = VehicleParams::default();
    timed(2, "zero-set agreement", Duration::from_secs(10), || {
        let zs = zero_set_agreement(&p, 100, 2000, 2);
        let prop = proportionality_report(&p, 1000, 2);
        let detail = format!(
            "roots={} count_mismatches={} max_gap={:.2e} (tol 1e-3); ratio={:.6e} max_rel_dev={:.2e} uniform_to_1e-6={} max_abs_residual={:.2e}",
            zs.roots,
            zs.count_mismatches,
            zs.max_parameter_gap,
            prop.fitted_ratio,
            prop.max_relative_deviation,
            prop.uniform,
            prop.max_abs_residual
        );
        (zs.agrees(1e-3) && zs.roots > 0, detail)
    })
}

fn flight_criterion(id: u8, title: &'static str, gait: Gait) -> CriterionOutcome {
    let cfg = SimConfig::default().with_gait(gait);
    timed(id, title, Duration::from_secs(5), || {
        let (telemetry, c) = run(&cfg);
        let th = cfg.thresholds;
        let ok = c.verdict == Verdict::Stable
            && c.max_attitude_error <= th.attitude_tol
            && c.max_altitude_error <= th.altitude_tol
            && c.min_abs_rotor_speed > th.rotor_eps
            && telemetry.is_complete();
        (
            ok,
            format!(
                "verdict={:?} reason={:?} t_end={:.3} final-window att_err={:.4} (tol {}) alt_err={:.4} (tol {}) min|w|={:.2}",
                c.verdict,
                c.reason,
                c.t_end,
                c.max_attitude_error,
                th.attitude_tol,
                c.max_altitude_error,
                th.altitude_tol,
                c.min_abs_rotor_speed
            ),
        )
    })
}

pub fn criterion_3() -> CriterionOutcome {
    flight_criterion(3, "gait 1 flight", GAIT_1)
}

pub fn criterion_4() -> CriterionOutcome {
    flight_criterion(4, "gait 2 flight", GAIT_2)
}

/// The restricted cases surveyed by [`criterion_5`]. The four families share
/// the zero gait at `alpha1 = 0`, so it is flown once.
pub fn region_cases() -> Vec<GaitRestriction> {
    vec![
        GaitRestriction::new(RestrictionKind::Equal, 0.0),
        GaitRestriction::new(RestrictionKind::Equal, 0.15),
        GaitRestriction::new(RestrictionKind::Half, 0.2),
        GaitRestriction::new(RestrictionKind::Negative, 0.7),
        GaitRestriction::new(RestrictionKind::NegativeHalf, 0.15),
    ]
}

/// The case expected to show instability.
pub fn is_exception(r: &GaitRestriction) -> bool {
    r.kind == RestrictionKind::Half && (r.alpha1 - 0.2).abs() < 1e-12
}

/// Samples of `report` inside the stable-core triangle that are not Stable.
pub fn core_failures(report: &AdmissibleRegionReport) -> usize {
    let core = TriangleRegion::stable_core();
    report
        .samples
        .iter()
        .filter(|s| core.contains([s.alpha2, s.alpha4]) && !s.is_stable())
        .count()
}

pub fn criterion_5() -> CriterionOutcome {
    criterion_5_with(&SimConfig::default(), 0)
}

/// [`criterion_5`] with an explicit flight config and worker count.
pub fn criterion_5_with(sim: &SimConfig, workers: usize) -> CriterionOutcome {
    let region = TriangleRegion::interested();
    let core = TriangleRegion::stable_core();
    timed(5, "region reproduction (pitch 0.25)", Duration::from_secs(15 * 60), || {
        let mut ok = true;
        let mut parts = Vec::new();
        for case in region_cases() {
            let report = survey_region(&case, 0.25, sim, &region, workers);
            let in_core = report
                .samples
                .iter()
                .filter(|s| core.contains([s.alpha2, s.alpha4]))
                .count();
            let core_bad = core_failures(&report);
            let any_bad = report.non_stable().count();
            let case_ok = if is_exception(&case) { any_bad > 0 } else { core_bad == 0 };
            ok &= case_ok;
            parts.push(format!(
                "{}({},{}): core {}/{} stable, {} non-stable overall{}",
                case.kind.name(),
                case.alpha1,
                case.alpha3(),
                in_core - core_bad,
                in_core,
                any_bad,
                if case_ok { "" } else { " <- fails" }
            ));
        }
        (ok, parts.join("; "))
    })
}

/// Number of lattice points the region survey flies per case.
pub fn region_samples_per_case() -> usize {
    lattice(&TriangleRegion::interested(), 0.25).len()
}

pub fn criterion_6() -> CriterionOutcome {
    let p = VehicleParams::default();
    timed(6, "hover oracle", Duration::from_millis(1), || {
        let hover = p.hover_rotor_speed();
        let closed = (p.mass * p.gravity / (4.0 * p.k_f)).sqrt();
        let state = VehicleState::at_rest(hover);
        let acc = translational_accel(&state.rotation, &state.rotors, &Gait::ZERO, &p);
        let ok = (hover - closed).abs() <= 1e-12 * closed
            && (hover - 361.4).abs() < 0.05
            && acc.amax() < 1e-9;
        (ok, format!("w_h={hover:.4} closed_form={closed:.4} |a|max={:.2e}", acc.amax()))
    })
}

pub fn criterion_7() -> CriterionOutcome {
    timed(7, "free-fall oracle", Duration::from_secs(1), || {
        let cfg = SimConfig::default().with_gait(GAIT_1);
        let plant = cfg.plant();
        let start = VehicleState::at_rest(0.0).with_attitude(Attitude::new(0.1, -0.05, 0.3));
        let mut s = start;
        for _ in 0..1000 {
            match step(&s, &plant, &ZeroInput, 1e-3) {
                Ok(o) => s = o.state,
                Err(_) => return (false, "zero input refused".into()),
            }
        }
        let z = s.position.z;
        let rel = (z + 4.9).abs() / 4.9;
        let att = (s.rotation - start.rotation).amax();
        (
            rel <= 1e-6 && att < 1e-12,
            format!("z={z:.9} rel_err={rel:.2e} attitude_drift={att:.2e}"),
        )
    })
}

fn random_state(rng: &mut ChaCha8Rng) -> (VehicleState, Gait) {
    let u = |rng: &mut ChaCha8Rng, a: f64| rng.random_range(-a..a);
    let gait = Gait(std::array::from_fn(|_| u(rng, 1.2)));
    let att = Attitude::new(u(rng, 0.6), u(rng, 0.6), u(rng, 3.0));
    let speeds: [f64; 4] = std::array::from_fn(|_| rng.random_range(150.0..600.0));
    let mut s = VehicleState::at_rest(300.0)
        .with_attitude(att)
        .with_rotors(Vector4::new(-speeds[0], speeds[1], -speeds[2], speeds[3]));
    s.body_rates = Vector3::new(u(rng, 2.0), u(rng, 2.0), u(rng, 2.0));
    s.velocity = Vector3::new(u(rng, 1.0), u(rng, 1.0), u(rng, 1.0));
    (s, gait)
}

/// One-step finite-difference jerk error at step `dt` under the held command.
fn fd_jerk_error(state: &VehicleState, gait: &Gait, jerk: &Vector4<f64>, dt: f64) -> f64 {
    let cfg = SimConfig::default().with_gait(*gait);
    let plant = cfg.plant();
    let dm = build_decoupling(state, gait, &plant.params);
    let Ok(u) = invert_allocate(&dm, jerk, DEFAULT_SINGULARITY_THRESHOLD) else {
        return f64::NAN;
    };
    let next = integrate(state, &u, &plant, dt);
    let a0 = output_second_derivative(state, gait, &plant.params);
    let a1 = output_second_derivative(&next, gait, &plant.params);
    ((a1 - a0) / dt - jerk).norm()
}

pub fn criterion_8() -> CriterionOutcome {
    timed(8, "linearization exactness", Duration::from_secs(30), || {
        let params = VehicleParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst_residual: f64 = 0.0;
        let mut tested = 0;
        while tested < 100 {
            let (s, gait) = random_state(&mut rng);
            let dm = build_decoupling(&s, &gait, &params);
            if dm.det.abs() <= DEFAULT_SINGULARITY_THRESHOLD || dm.cond > 1e8 {
                continue;
            }
            let jerk = Vector4::from_fn(|_, _| rng.random_range(-50.0..50.0));
            let Ok(u) = invert_allocate(&dm, &jerk, DEFAULT_SINGULARITY_THRESHOLD) else {
                continue;
            };
            let r = (dm.delta * u.0 + dm.drift - jerk).norm() / jerk.norm();
            worst_residual = worst_residual.max(r);
            tested += 1;
        }

        // halving dt should halve the finite-difference error
        let mut ratios = Vec::new();
        for _ in 0..5 {
            let (s, gait) = random_state(&mut rng);
            let jerk = Vector4::from_fn(|_, _| rng.random_range(-50.0..50.0));
            let e1 = fd_jerk_error(&s, &gait, &jerk, 1e-3);
            let e2 = fd_jerk_error(&s, &gait, &jerk, 5e-4);
            let e3 = fd_jerk_error(&s, &gait, &jerk, 2.5e-4);
            ratios.push(e1 / e2);
            ratios.push(e2 / e3);
        }
        let ratio_ok = ratios.iter().all(|r| (1.8..=2.2).contains(r));
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
        (
            worst_residual < 1e-9 && ratio_ok,
            format!(
                "states={tested} worst_rel_residual={worst_residual:.2e} (tol 1e-9) halving ratios in [{lo:.3}, {hi:.3}] (want ~2)"
            ),
        )
    })
}

pub fn criterion_9() -> CriterionOutcome {
    timed(9, "singularity detection", Duration::from_millis(1), || {
        let params = VehicleParams::default();
        let mut all = true;
        for stopped in 0..4 {
            let mut speeds = Vector4::new(-300.0, 280.0, -320.0, 310.0);
            speeds[stopped] = 0.0;
            let s = VehicleState::at_rest(300.0)
                .with_attitude(Attitude::new(0.2, -0.1, 0.4))
                .with_rotors(speeds);
            let dm = build_decoupling(&s, &GAIT_1, &params);
            let refused = invert_allocate(&dm, &Vector4::new(1.0, 1.0, 1.0, 1.0), DEFAULT_SINGULARITY_THRESHOLD).is_err();
            let controller = SimConfig::default().with_gait(GAIT_1).controller();
            all &= dm.det == 0.0 && refused && controller.command(&s).is_err();
        }
        (all, format!("det==0 and SingularDecoupling for each stopped rotor: {all}"))
    })
}

pub type Check = fn() -> CriterionOutcome;

/// All criteria in order.
pub const CRITERIA: [Check; 9] = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
];

pub fn run_all() -> Vec<CriterionOutcome> {
    CRITERIA.iter().map(|c| c()).collect()
}
