use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tiltgait::invertibility::{determinant_general, determinant_surface, zero_curves};
use tiltgait::{Gait, GaitRestriction, GridSpec, RestrictionKind, VehicleParams};

fn determinant(c: &mut Criterion) {
    let params = VehicleParams::default();
    let gait = Gait::new(0.3, -0.7, 1.1, 0.2);
    c.bench_function("determinant_general", |b| {
        b.iter(|| determinant_general(black_box(&gait), 0.1, -0.2, &params))
    });
}

fn surfaces(c: &mut Criterion) {
    let params = VehicleParams::default();
    let restriction = GaitRestriction::new(RestrictionKind::Equal, 0.15);
    let grid = GridSpec::default();
    let mut g = c.benchmark_group("grid_401");
    g.sample_size(10);
    g.bench_function("surface", |b| b.iter(|| determinant_surface(&restriction, &grid, &params)));
    g.bench_function("zero_curves", |b| b.iter(|| zero_curves(&restriction, &grid, &params)));
    g.finish();
}

criterion_group!(benches, determinant, surfaces);
criterion_main!(benches);
