// SPDX-License-Identifier: Apache-2.0

use criterion::{criterion_group, criterion_main, Criterion};
use deon_bench::{sweep_with, Exec, SweepConfig};
use deon_harness::Arm;

fn small_grid() -> SweepConfig {
    SweepConfig {
        rates: vec![50.0, 100.0],
        arms: vec![Arm::BASELINE, Arm::PRIVATE_CAS],
        block_sizes: vec![10, 50],
        total: 100,
        clients: 4,
        ..SweepConfig::default()
    }
}

fn sweep_exec(c: &mut Criterion) {
    let cfg = small_grid();
    let mut g = c.benchmark_group("sweep_8_runs");
    g.sample_size(10);
    g.bench_function("sequential", |b| b.iter(|| sweep_with(&cfg, Exec::Sequential).unwrap()));
    g.bench_function("parallel", |b| b.iter(|| sweep_with(&cfg, Exec::Parallel).unwrap()));
    g.finish();
}

criterion_group!(benches, sweep_exec);
criterion_main!(benches);
