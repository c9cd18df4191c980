//! Sequential against rayon-parallel execution of the two hot loops: the
//! eigenvalue scan at one r and a short r sweep.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use neckglue::analysis::{run_sweep, SweepOptions, ThresholdSchedule};
use neckglue::eigen::{find_eigenvalues, EigenOptions};
use neckglue::glue::GluedProblem;
use neckglue::models;
use neckglue::par::Exec;

const MODES: [(&str, Exec); 2] = [("seq", Exec::Sequential), ("par", Exec::Parallel)];

fn scan(c: &mut Criterion) {
    let pair = models::perturbed_rotation();
    let p = GluedProblem::assemble(&pair.end1, &pair.end2, 8.0, 0.02).unwrap();
    let mut g = c.benchmark_group("find_eigenvalues");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = EigenOptions {
            window: 1.0,
            exec,
            ..EigenOptions::default()
        };
        g.bench_function(BenchmarkId::new(name, "perturbed_rotation r=8"), |b| {
            b.iter(|| find_eigenvalues(&p, &opts).unwrap())
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let pair = models::exponential();
    let rs: Vec<f64> = (2..=8).map(f64::from).collect();
    let schedule = ThresholdSchedule::auto(&pair.end1, &pair.end2, rs[0]).unwrap();
    let mut g = c.benchmark_group("run_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = SweepOptions {
            exec,
            eigen: EigenOptions {
                exec,
                ..EigenOptions::default()
            },
            ..SweepOptions::default()
        };
        g.bench_function(BenchmarkId::new(name, "exponential r=2..8"), |b| {
            b.iter(|| run_sweep(&pair.end1, &pair.end2, &schedule, &rs, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, scan, sweep);
criterion_main!(benches);
