// SPDX-License-Identifier: Apache-2.0

use deon_bench::{read_csv, run_bench, sweep, to_csv, BenchConfig, SweepConfig};
use deon_core::config::NetworkConfig;
use deon_harness::{Arm, Arrivals, LinkConfig};

#[test]
fn light_load_tracks_offered_rate() {
    let m = run_bench(&BenchConfig::new(50.0, Arm::BASELINE, 50, 3)).unwrap();
    assert!((m.achieved_tps - 50.0).abs() <= 5.0, "{}", m.achieved_tps);
    assert!(m.conserved());
    assert_eq!(m.valid, 1000);
    assert!(m.p50_ms <= m.p95_ms && m.p95_ms <= m.p99_ms);
}

#[test]
fn private_with_store_is_slower_at_200() {
    let base = run_bench(&BenchConfig::new(200.0, Arm::BASELINE, 50, 4)).unwrap();
    let pc = run_bench(&BenchConfig::new(200.0, Arm::PRIVATE_CAS, 50, 4)).unwrap();
    assert!(pc.achieved_tps < base.achieved_tps, "{} vs {}", pc.achieved_tps, base.achieved_tps);
    assert!(pc.mean_ms > base.mean_ms);
}

/// With one transaction in flight at a time, latency is the batch timeout
/// plus a handful of LAN hops and the modelled processing.
#[test]
fn isolated_transactions_wait_one_batch_timeout() {
    let mut c = BenchConfig::new(0.001, Arm::BASELINE, 50, 5);
    c.total = 3;
    c.clients = 1;
    let m = run_bench(&c).unwrap();
    assert_eq!(m.valid, 3);

    let net = NetworkConfig::default();
    let link = LinkConfig::lan();
    // submit, endorse x2, order, replicate, ack, receipt
    let hops = 7.0 * link.base_ms;
    let cost = &net.cost;
    let work = 3.0 * (cost.sig_verify_ms + cost.chaincode_ms + cost.sign_ms) + 4.0 * cost.sig_verify_ms + cost.block_commit_ms;
    let expected = net.block.timeout_ms as f64 + hops + work;
    assert!(
        (m.p50_ms - expected).abs() <= 0.5 * expected,
        "p50 {} ms, expected about {expected} ms",
        m.p50_ms
    );
}

#[test]
fn poisson_arrivals_run() {
    let mut c = BenchConfig::new(80.0, Arm::CAS, 10, 6);
    c.total = 200;
    c.arrivals = Arrivals::Poisson;
    let m = run_bench(&c).unwrap();
    assert!(m.conserved());
    assert_eq!(m.valid, 200);
}

#[test]
fn sweep_rows_and_csv_are_reproducible() {
    let cfg = SweepConfig {
        rates: vec![50.0, 100.0],
        arms: vec![Arm::BASELINE, Arm::PRIVATE],
        block_sizes: vec![10],
        total: 100,
        seeds: vec![1, 2],
        ..SweepConfig::default()
    };
    let (rows, runs) = sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(runs.len(), 8);
    let csv = to_csv(&rows);
    assert_eq!(to_csv(&sweep(&cfg).unwrap().0), csv);
    let back = read_csv(&csv).unwrap();
    assert_eq!(back.len(), rows.len());
    assert_eq!(back[3].arm, Arm::PRIVATE);
}

#[test]
fn samples_are_persisted() {
    let mut c = BenchConfig::new(100.0, Arm::PRIVATE, 10, 7);
    c.total = 30;
    let m = run_bench(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("samples.jsonl");
    m.write_samples(&path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 30);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["flag"], "valid");
}
