use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fcsim_bench::core::fit::{build_operators, FitMesh};
use fcsim_bench::core::{l_lambda, pencil_index, simulate, OutputSelection, SolverConfig};
use fcsim_bench::{coil_circuit, coil_model, ladder, pencil};
use std::hint::black_box;

fn operators(c: &mut Criterion) {
    let mut g = c.benchmark_group("build_operators");
    for n in [4, 8, 16] {
        let mesh = FitMesh::cube(n, 0.01).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &mesh, |b, m| b.iter(|| build_operators(black_box(m), 0)));
    }
    g.finish();
}

fn inductance(c: &mut Criterion) {
    let mut g = c.benchmark_group("l_lambda_tomega");
    g.sample_size(10);
    for n in [4, 8] {
        let model = coil_model(n, "linear");
        g.bench_with_input(BenchmarkId::from_parameter(n), &model, |b, m| b.iter(|| l_lambda(black_box(m)).unwrap()));
    }
    g.finish();
}

fn index(c: &mut Criterion) {
    let mut g = c.benchmark_group("pencil_index");
    for sections in [5, 20] {
        let (e, a) = pencil(&ladder(sections));
        g.bench_with_input(BenchmarkId::new("rlc_ladder", e.nrows()), &(e, a), |b, (e, a)| {
            b.iter(|| pencil_index(black_box(e), black_box(a)).unwrap())
        });
    }
    let (e, a) = pencil(&coil_circuit(&coil_model(4, "linear"), "I1 0 1 SIN 1 1"));
    g.bench_function(BenchmarkId::new("tomega_current", e.nrows()), |b| b.iter(|| pencil_index(&e, &a).unwrap()));
    g.finish();
}

fn stepping(c: &mut Criterion) {
    let mut g = c.benchmark_group("implicit_euler_100_steps");
    g.sample_size(10);
    let linear = coil_circuit(&coil_model(4, "linear"), "V1 1 0 SIN 1 6.283185307179586");
    let iron = coil_circuit(&coil_model(4, "iron"), "V1 1 0 SIN 1 6.283185307179586");
    for (name, sys) in [("linear_coil", &linear), ("iron_coil", &iron)] {
        let cfg = SolverConfig::new(1e-4, 1e-2);
        let out = OutputSelection::new(sys, None).unwrap();
        g.bench_function(name, |b| b.iter(|| simulate(black_box(sys), &cfg, &out).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, operators, inductance, index, stepping);
criterion_main!(benches);
