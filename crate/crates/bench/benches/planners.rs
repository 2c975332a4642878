use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use uavplan_bench::square;
use uavplan_core::circular::{init_plan, init_state, step, InitMode, Step};
use uavplan_core::planners::{build_p12, Objective};
use uavplan_core::subsolver::{solve_with_phase_one, SolverOptions};
use uavplan_core::surrogates::surrogate_suite;
use uavplan_core::ScaConfig;

fn trajectory_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("trajectory_step");
    group.sample_size(10);
    for n in [20, 40, 60] {
        let s = square(60.0 * n as f64 / 20.0, n);
        let init = init_plan(&s, InitMode::MinRate).unwrap();
        let problem = build_p12(&s, &init).unwrap();
        let opts = SolverOptions::with_tol(1e-7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &problem, |b, p| {
            b.iter(|| solve_with_phase_one(black_box(&p.sp), &opts).unwrap())
        });
    }
    group.finish();
}

fn circular_steps(c: &mut Criterion) {
    let s = square(60.0, 30);
    let state = init_state(&s, InitMode::MinRate).unwrap();
    let cfg = ScaConfig::default();
    let mut group = c.benchmark_group("circular_step");
    group.sample_size(20);
    for kind in [Step::Radius, Step::Angle] {
        group.bench_function(format!("{kind:?}"), |b| {
            b.iter(|| step(&s, black_box(&state), kind, Objective::MinRate, &cfg).unwrap())
        });
    }
    group.finish();
}

fn surrogates(c: &mut Criterion) {
    c.bench_function("surrogate_suite_1000", |b| b.iter(|| surrogate_suite(black_box(1000), 7)));
}

criterion_group!(benches, trajectory_step, circular_steps, surrogates);
criterion_main!(benches);
