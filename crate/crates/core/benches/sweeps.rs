use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fairdiv::audit::{sweep, SweepMode};
use fairdiv::checks::synthetic_spec;
use fairdiv::exec::ExecMode;
use fairdiv::forge::random_budget_instance;
use fairdiv::solver::SolverOptions;
use fairdiv::welfare::WelfareRule;

fn pairs_sweep(c: &mut Criterion) {
    let inst = random_budget_instance(&synthetic_spec(7)).unwrap();
    let opts = SolverOptions::default();
    let mut group = c.benchmark_group("pairs_sweep_nw");
    group.sample_size(10);
    for (name, mode) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| sweep(&inst, &WelfareRule::Nash, SweepMode::Pairs, 0.1, &opts, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pairs_sweep);
criterion_main!(benches);
