use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use opinion_limits::dem::{build_limit, integrate};
use opinion_limits::limitcheck::exact_coefficients;
use opinion_limits::rng::stream;
use opinion_limits::{time_grid, Dynamics, IntegratorSpec, OpinionState};
use opinion_limits_bench::{external_spec, standard_spec, uniform_state};

fn abm_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("abm_1000_steps");
    for (name, spec) in [
        ("standard", standard_spec(50, 1e-5)),
        ("external", external_spec(50, 1e-5)),
    ] {
        let x0 = uniform_state(50);
        group.bench_function(name, |b| {
            let mut rng = stream(1, 0);
            b.iter(|| {
                let mut state = OpinionState::new(x0.clone());
                for _ in 0..1000 {
                    state.step(&spec, &mut rng).unwrap();
                }
                black_box(state.x[0])
            })
        });
    }
    group.finish();
}

fn drift(c: &mut Criterion) {
    let mut group = c.benchmark_group("limit_evaluate");
    for n in [50, 200] {
        let model = build_limit(&external_spec(n, 1e-4)).unwrap();
        let x = uniform_state(n);
        let (mut b, mut s) = (vec![0.0; n], vec![0.0; n]);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                model.evaluate(black_box(&x), &mut b, &mut s).unwrap();
                black_box(b[0])
            })
        });
    }
    group.finish();
}

fn euler_maruyama(c: &mut Criterion) {
    let spec = external_spec(50, 1e-4);
    let model = build_limit(&spec).unwrap();
    let x0 = uniform_state(50);
    let grid = time_grid(1.0, 0.01);
    c.bench_function("euler_maruyama_T1", |b| {
        let mut rng = stream(2, 0);
        b.iter(|| {
            integrate(
                &model,
                &x0,
                &IntegratorSpec::euler_maruyama(0.01),
                1.0,
                &grid,
                &mut rng,
            )
            .unwrap()
        })
    });
}

fn coefficients(c: &mut Criterion) {
    let spec = standard_spec(50, 1e-4);
    let x = uniform_state(50);
    c.bench_function("exact_coefficients_n50", |b| {
        b.iter(|| exact_coefficients(black_box(&x), &spec).unwrap())
    });
}

criterion_group!(benches, abm_steps, drift, euler_maruyama, coefficients);
criterion_main!(benches);
