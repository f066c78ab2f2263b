use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use siltlab_core::gauss_field::FieldSampler;
use siltlab_core::green_torus::build_green;
use siltlab_core::lattice_walk::{silt, simulate_walk, Geometry};
use siltlab_core::rng::stream;
use siltlab_core::variational::{solve_chi, solve_rho1};
use siltlab_core::ProblemParams;

fn walk(c: &mut Criterion) {
    let mut group = c.benchmark_group("walk_silt");
    for d in [1, 2, 3] {
        let params = ProblemParams::new(d, 2.0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, &d| {
            let mut i = 0;
            b.iter(|| {
                i += 1;
                let mut rng = stream(1, i);
                let field = simulate_walk(&params, Geometry::FreeLattice { d }, 16.0, &mut rng).unwrap();
                black_box(silt(&field, 2.0).unwrap())
            })
        });
    }
    group.finish();
}

fn green(c: &mut Criterion) {
    let mut group = c.benchmark_group("green");
    for (n, d) in [(64, 1), (16, 2), (8, 3)] {
        let id = format!("N{n}_d{d}");
        group.bench_function(BenchmarkId::new("build", &id), |b| {
            b.iter(|| black_box(build_green(n, d, 0.5).unwrap()))
        });
        let g = build_green(n, d, 0.5).unwrap();
        let f: Vec<f64> = (0..g.volume()).map(|x| (x as f64).sin()).collect();
        group.bench_function(BenchmarkId::new("apply", &id), |b| b.iter(|| black_box(g.apply(&f))));
    }
    group.finish();
}

fn field(c: &mut Criterion) {
    let g = build_green(8, 2, 1.0).unwrap();
    let sampler = FieldSampler::new(&g);
    let v = g.volume();
    let (mut xi, mut z) = (vec![0.0; v], vec![0.0; v]);
    let mut rng = stream(2, 0);
    c.bench_function("field_sample_N8_d2", |b| {
        b.iter(|| {
            sampler.sample_into(&mut rng, &mut xi, &mut z);
            black_box(z[0])
        })
    });
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solvers");
    group.sample_size(10);
    group.bench_function("rho1_N16_d1", |b| b.iter(|| black_box(solve_rho1(16, 1, 0.5, 2.0, 1e-9).unwrap())));
    group.bench_function("rho1_N8_d2", |b| b.iter(|| black_box(solve_rho1(8, 2, 0.5, 2.0, 1e-9).unwrap())));
    group.bench_function("chi_d1", |b| b.iter(|| black_box(solve_chi(1, 2.0, 8.0, 0.05, 1e-7).unwrap())));
    group.finish();
}

criterion_group!(benches, walk, green, field, solvers);
criterion_main!(benches);
