use bundlekit_bench::{bundle, instance};
use bundlekit_core::lmo::lmo_max;
use bundlekit_core::model::{PolicyKind, SolverConfig};
use bundlekit_core::mpbfa::run_mpbfa;
use bundlekit_core::subqp::solve_bundle_subproblem;
use bundlekit_core::synth::uniform;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn lmo(c: &mut Criterion) {
    let mut g = c.benchmark_group("lmo_polytope");
    for n in [50usize, 100, 200] {
        let inst = instance(n);
        let w: Vec<f64> = (0..n).map(|i| uniform(3, 0, i as u64)).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| lmo_max(&inst.lmo, black_box(&w)).unwrap()));
    }
    g.finish();
}

fn subqp(c: &mut Criterion) {
    let mut g = c.benchmark_group("subqp_cold");
    let inst = instance(100);
    let center = vec![0.0; 100];
    for k in [10usize, 40, 120] {
        let b = bundle(&inst, k);
        g.bench_with_input(BenchmarkId::from_parameter(b.len()), &b, |bch, b| {
            bch.iter(|| solve_bundle_subproblem(&inst.objective, b, Some((&center, 1.0)), 1e-10).unwrap())
        });
    }
    g.finish();
}

fn mpbfa(c: &mut Criterion) {
    let mut g = c.benchmark_group("mpbfa_n50");
    g.sample_size(10);
    let inst = instance(50);
    for p in PolicyKind::ALL {
        let cfg = SolverConfig::new(2e-3).with_policy(p).with_max_iter(20_000);
        g.bench_function(p.as_str(), |b| b.iter(|| run_mpbfa(&inst, &cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, lmo, subqp, mpbfa);
criterion_main!(benches);
