use std::hint::black_box;

use cavityflow::fluid::ops::{divergence, viscous_advective_rhs};
use cavityflow_bench::reference_simulation;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const SIZES: [usize; 2] = [16, 24];

fn projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("projection");
    for n in SIZES {
        let sim = reference_simulation(n);
        let solver = sim.system.fluid.solver();
        let mut u = sim.initial.fluid.velocity.clone();
        // Break solenoidality so the solve has work to do.
        for v in &mut u.comps[0].data {
            *v *= 1.1;
        }
        u.zero_boundary();
        assert!(divergence(sim.grid(), &u).max_abs() > 0.0);
        group.bench_with_input(BenchmarkId::from_parameter(n), &u, |b, u| {
            b.iter(|| solver.project(black_box(u)).unwrap())
        });
    }
    group.finish();
}

fn explicit_rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("explicit_rhs");
    for n in SIZES {
        let sim = reference_simulation(n);
        let u = &sim.initial.fluid.velocity;
        let nu = sim.config.geometry.nu;
        group.bench_with_input(BenchmarkId::from_parameter(n), u, |b, u| {
            b.iter(|| viscous_advective_rhs(sim.grid(), black_box(u), nu, false))
        });
    }
    group.finish();
}

fn coupled_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("coupled_step");
    group.sample_size(20);
    for n in SIZES {
        let sim = reference_simulation(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &sim.initial, |b, state| {
            b.iter(|| sim.system.step(black_box(state), sim.dt).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, projection, explicit_rhs, coupled_step);
criterion_main!(benches);
