use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use robin_dd::fem::{assemble_jacobian, assemble_residual};
use robin_dd::interface::{peaceman_rachford_step, robin_robin_step, run};
use robin_dd::mesh::trace;
use robin_dd::monolithic::solve_global;
use robin_dd::{FeFunction, InitialTrace, InterfaceState, NewtonConfig, RunOptions, Side, StopCriteria};
use robin_dd_bench::{interval, square};

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    for n in [16, 32, 64] {
        let prob = square(3.0, n);
        let mesh = prob.decomposition().global();
        let u = FeFunction::interpolate(mesh, |x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
        g.bench_with_input(BenchmarkId::new("residual", n), &n, |b, _| {
            b.iter(|| assemble_residual(prob.pstructure(), mesh, black_box(&u), prob.source(), prob.quadrature()).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("jacobian", n), &n, |b, _| {
            b.iter(|| assemble_jacobian(prob.pstructure(), mesh, black_box(&u), prob.quadrature(), 1e-12).unwrap())
        });
    }
    g.finish();
}

fn subdomain_solves(c: &mut Criterion) {
    let cfg = NewtonConfig::default();
    let mut g = c.benchmark_group("subdomain");
    g.sample_size(20);
    for n in [16, 32] {
        let prob = square(3.0, n);
        let eta = prob.natural_trace(Side::Two, &cfg).unwrap();
        let eta2 = trace(prob.decomposition(), Side::Two, &eta.u).unwrap();
        g.bench_with_input(BenchmarkId::new("dirichlet_p3", n), &n, |b, _| {
            b.iter(|| prob.solve_dirichlet(Side::One, black_box(&eta2), &cfg, None).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("monolithic_p3", n), &n, |b, _| {
            let d = prob.decomposition();
            b.iter(|| solve_global(d.global(), prob.pstructure(), prob.source(), prob.quadrature(), &cfg).unwrap())
        });
    }
    g.finish();
}

fn sweeps(c: &mut Criterion) {
    let cfg = NewtonConfig::default();
    let prob = square(3.0, 16);
    let start = prob.natural_trace(Side::Two, &cfg).unwrap();
    let eta = trace(prob.decomposition(), Side::Two, &start.u).unwrap();
    let state = InterfaceState::new(&prob, 1.0, &eta, &cfg).unwrap();
    let mut g = c.benchmark_group("sweep");
    g.sample_size(20);
    g.bench_function("robin_robin_p3_16", |b| {
        b.iter(|| robin_robin_step(&prob, black_box(&state), &cfg, false).unwrap())
    });
    g.bench_function("peaceman_rachford_p3_16", |b| {
        b.iter(|| peaceman_rachford_step(&prob, black_box(&state), &cfg).unwrap())
    });
    g.finish();
}

fn full_run(c: &mut Criterion) {
    let cfg = NewtonConfig::default();
    let mut g = c.benchmark_group("run");
    g.sample_size(10);
    for p in [2.0, 3.0, 4.0] {
        let prob = interval(p, 64);
        let opts = RunOptions {
            s: 1.0,
            initial: InitialTrace::Natural,
            stop: StopCriteria {
                tol_gap: 1e-6,
                max_outer: 200,
            },
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::new("interval_64", p), &p, |b, _| {
            b.iter(|| run(&prob, &opts, &cfg, None).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, assembly, subdomain_solves, sweeps, full_run);
criterion_main!(benches);
