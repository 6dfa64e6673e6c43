use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use viscrack::energy::{u_only_energies, Ledger};
use viscrack::scenario::Scenario;
use viscrack::stepper::run;

fn stepping(c: &mut Criterion) {
    let mut g = c.benchmark_group("run");
    g.sample_size(10);
    for name in ["cracked_plate", "planar_elastic_crack"] {
        let s = Scenario::builtin(name).unwrap();
        for n in [16, 64] {
            g.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
                b.iter(|| run(black_box(&s.problem), n).unwrap())
            });
        }
    }
    g.finish();
}

fn post_processing(c: &mut Criterion) {
    let s = Scenario::builtin("cracked_plate").unwrap();
    let traj = run(&s.problem, 64).unwrap();
    c.bench_function("ledger/cracked_plate/64", |b| {
        b.iter(|| Ledger::build(black_box(&s.problem), black_box(&traj)).unwrap())
    });

    let s = Scenario::builtin("smooth_uncracked").unwrap();
    let mut g = c.benchmark_group("u_only");
    g.sample_size(10);
    for n in [32, 128] {
        let traj = run(&s.problem, n).unwrap();
        g.bench_with_input(BenchmarkId::new("smooth_uncracked", n), &traj, |b, traj| {
            b.iter(|| u_only_energies(&s.problem, traj).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, stepping, post_processing);
criterion_main!(benches);
