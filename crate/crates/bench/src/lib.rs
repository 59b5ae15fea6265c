// SPDX-License-Identifier: Apache-2.0

//! Open-loop benchmark runs over a simulated or wall-clock network, a
//! parameter sweep, CSV output and throughput/latency plots.

mod plot;
mod sweep;

pub use plot::{plot_sweep, PLOT_FILES};
pub use sweep::{read_csv, sweep, sweep_with, to_csv, write_csv, Exec, Row, SweepConfig, CSV_HEADER};

use std::io::Write;
use std::path::Path;

use deon_core::error::Error;
use deon_core::net::ClientId;
use deon_core::time::Span;
use deon_harness::{onboard_clients, Arm, Arrivals, Bus, Capture, LoadGen, LoadSpec, Mode, NetConfig, Sample, SimNet, WallNet};
use serde::{Deserialize, Serialize};

/// How long after the last scheduled submission a run keeps collecting.
pub const DRAIN_MS: u64 = 40_000;

/// A run with more failed transactions than this share is marked invalid.
pub const MAX_FAILED_SHARE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Offered rate in tx/s.
    pub rate: f64,
    pub total: usize,
    pub arm: Arm,
    pub block_size: usize,
    pub nodes: u32,
    pub seed: u64,
    pub mode: Mode,
    pub arrivals: Arrivals,
    /// Distinct onboarded clients the load is spread over.
    pub clients: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            rate: 100.0,
            total: 1000,
            arm: Arm::BASELINE,
            block_size: 50,
            nodes: 3,
            seed: 1,
            mode: Mode::Sim,
            arrivals: Arrivals::Uniform,
            clients: 8,
        }
    }
}

impl BenchConfig {
    pub fn new(rate: f64, arm: Arm, block_size: usize, seed: u64) -> Self {
        BenchConfig { rate, arm, block_size, seed, ..Default::default() }
    }

    pub fn validate(&self) -> deon_core::Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::InvalidRequest(format!("rate must be positive, got {}", self.rate)));
        }
        if self.total == 0 || self.block_size == 0 || self.clients == 0 {
            return Err(Error::InvalidRequest("total, block_size and clients must be positive".into()));
        }
        Ok(())
    }

    pub fn net_config(&self) -> NetConfig {
        let mut net = NetConfig::new(self.nodes, self.seed);
        net.mode = self.mode;
        net.capture = Capture::None;
        net.network.block.max_txs = self.block_size;
        net
    }

    fn load_spec(&self) -> LoadSpec {
        let mut spec = LoadSpec::new(self.total, self.rate, self.arm);
        spec.arrivals = self.arrivals;
        spec.seed = self.seed;
        spec.poll = format!("bench-{}", self.seed);
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub config: BenchConfig,
    pub offered: usize,
    pub valid: usize,
    /// Committed with a flag other than valid.
    pub invalid: usize,
    /// Gave up on after every attempt, or rejected.
    pub failed: usize,
    pub in_flight: usize,
    pub achieved_tps: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
    pub first_submit_us: u64,
    pub last_commit_us: u64,
    /// More than half of the transactions failed.
    pub invalid_run: bool,
    #[serde(skip)]
    pub samples: Vec<Sample>,
}

impl RunMetrics {
    pub fn from_samples(config: BenchConfig, samples: Vec<Sample>) -> Self {
        let offered = samples.len();
        let valid = samples.iter().filter(|s| s.valid()).count();
        let invalid = samples.iter().filter(|s| s.committed() && !s.valid()).count();
        let in_flight =
            samples.iter().filter(|s| !s.committed() && s.error.as_deref() == Some("in flight at cutoff")).count();
        let failed = offered - valid - invalid - in_flight;

        let mut latencies: Vec<f64> =
            samples.iter().filter(|s| s.committed()).filter_map(|s| s.latency()).map(|l| l.0 as f64 / 1000.0).collect();
        latencies.sort_by(|a, b| a.total_cmp(b));
        let mean_ms = if latencies.is_empty() { 0.0 } else { latencies.iter().sum::<f64>() / latencies.len() as f64 };

        let first_submit_us = samples.iter().map(|s| s.submit_us).min().unwrap_or(0);
        let last_commit_us = samples.iter().filter(|s| s.valid()).filter_map(|s| s.commit_us).max().unwrap_or(0);
        let window = last_commit_us.saturating_sub(first_submit_us) as f64 / 1e6;
        let achieved_tps = if valid == 0 || window <= 0.0 { 0.0 } else { valid as f64 / window };

        RunMetrics {
            config,
            offered,
            valid,
            invalid,
            failed,
            in_flight,
            achieved_tps,
            p50_ms: percentile(&latencies, 50.0),
            p95_ms: percentile(&latencies, 95.0),
            p99_ms: percentile(&latencies, 99.0),
            mean_ms,
            first_submit_us,
            last_commit_us,
            invalid_run: failed as f64 > MAX_FAILED_SHARE * offered as f64,
            samples,
        }
    }

    /// offered = valid + invalid + failed + in flight.
    pub fn conserved(&self) -> bool {
        self.offered == self.valid + self.invalid + self.failed + self.in_flight
    }

    /// One JSON object per transaction.
    pub fn write_samples(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for s in &self.samples {
            serde_json::to_writer(&mut f, s)?;
            f.write_all(b"\n")?;
        }
        f.flush()
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Brings a network up, onboards the clients, offers the load and collects
/// one sample per transaction.
pub fn run_bench(config: &BenchConfig) -> deon_core::Result<RunMetrics> {
    config.validate()?;
    let spec = config.load_spec();
    spec.validate()?;
    let samples = match config.mode {
        Mode::Sim => {
            let mut net = SimNet::new(config.net_config())?;
            if net.wait_for_leader(Span::from_millis(10_000)).is_none() {
                return Err(Error::Unavailable("network unavailable: no leader elected".into()));
            }
            drive(&mut net, config, spec)?
        }
        Mode::Wall => {
            let mut net = WallNet::new(config.net_config())?;
            let ids: Vec<ClientId> = (0..config.clients as u32).map(ClientId).collect();
            let mut bus = net.endpoint(ClientId(u32::MAX - 1), &ids);
            wait_for_leader_wall(&mut bus, ClientId(u32::MAX - 1))?;
            let samples = drive(&mut bus, config, spec)?;
            drop(bus);
            net.shutdown();
            samples
        }
    };
    Ok(RunMetrics::from_samples(config.clone(), samples))
}

fn drive<B: Bus>(bus: &mut B, config: &BenchConfig, spec: LoadSpec) -> deon_core::Result<Vec<Sample>> {
    let sessions = onboard_clients(bus, config.clients, config.seed)?;
    let start = bus.now() + Span::from_millis(100);
    let last = spec.schedule().last().copied().unwrap_or(Span(0));
    let mut gen = LoadGen::new(spec, sessions, config.nodes, start)?;
    gen.run(bus, start + last + Span::from_millis(DRAIN_MS));
    Ok(gen.finish().0)
}

/// Polls every node for health, as `client`, until one reports a leader, for
/// up to 10 s.
pub fn wait_for_leader_wall<B: Bus>(bus: &mut B, client: ClientId) -> deon_core::Result<()> {
    use deon_core::service::{Request, Response};
    let end = bus.now() + Span::from_millis(10_000);
    let mut req = 1u64 << 50;
    while bus.now() < end {
        for n in 0..bus.node_count() {
            req += 1;
            let node = deon_core::net::NodeId(n);
            let answer = deon_harness::call(bus, client, node, req, Request::Health, Span::from_millis(500));
            if let Some(Ok(Response::Health(h))) = answer {
                if h.leader.is_some() {
                    return Ok(());
                }
            }
        }
        let pause = bus.now() + Span::from_millis(100);
        bus.poll(pause);
    }
    Err(Error::Unavailable("network unavailable: no leader elected".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0), 50.0);
        assert_eq!(percentile(&v, 95.0), 95.0);
        assert_eq!(percentile(&v, 99.0), 99.0);
        assert_eq!(percentile(&[7.0], 99.0), 7.0);
        assert_eq!(percentile(&[], 50.0), 0.0);
    }

    #[test]
    fn rejects_non_positive_rate() {
        assert!(BenchConfig::new(0.0, Arm::BASELINE, 10, 1).validate().is_err());
        assert!(BenchConfig::new(f64::NAN, Arm::BASELINE, 10, 1).validate().is_err());
    }

    #[test]
    fn small_run_conserves() {
        let mut c = BenchConfig::new(50.0, Arm::PRIVATE_CAS, 10, 3);
        c.total = 40;
        c.clients = 2;
        let m = run_bench(&c).unwrap();
        assert!(m.conserved());
        assert_eq!(m.valid, 40);
        assert!(!m.invalid_run);
        for s in &m.samples {
            assert!(s.commit_us.unwrap() >= s.submit_us);
        }
    }
}
