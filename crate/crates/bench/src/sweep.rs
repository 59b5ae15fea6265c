// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::path::Path;

use deon_core::error::Error;
use deon_harness::{Arm, Arrivals, Mode};
use serde::{Deserialize, Serialize};

use crate::{run_bench, BenchConfig, RunMetrics};

pub const CSV_HEADER: &str = "rate,arm,block_size,achieved_tps,p50_ms,p95_ms,p99_ms,invalid,failed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub rates: Vec<f64>,
    pub arms: Vec<Arm>,
    pub block_sizes: Vec<usize>,
    pub total: usize,
    /// Each grid point is run once per seed and averaged.
    pub seeds: Vec<u64>,
    pub nodes: u32,
    pub clients: usize,
    pub mode: Mode,
    pub arrivals: Arrivals,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let base = BenchConfig::default();
        SweepConfig {
            rates: vec![50.0, 100.0, 150.0, 200.0],
            arms: Arm::ALL.to_vec(),
            block_sizes: vec![10, 50, 100],
            total: base.total,
            seeds: vec![1],
            nodes: base.nodes,
            clients: base.clients,
            mode: Mode::Sim,
            arrivals: Arrivals::Uniform,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> deon_core::Result<()> {
        if self.rates.is_empty() || self.arms.is_empty() || self.block_sizes.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidRequest("sweep needs at least one rate, arm, block size and seed".into()));
        }
        self.configs().iter().try_for_each(BenchConfig::validate)
    }

    /// Every run of the sweep, grouped by grid point in row order.
    pub fn configs(&self) -> Vec<BenchConfig> {
        let mut out = Vec::new();
        for &rate in &self.rates {
            for &arm in &self.arms {
                for &block_size in &self.block_sizes {
                    for &seed in &self.seeds {
                        out.push(BenchConfig {
                            rate,
                            total: self.total,
                            arm,
                            block_size,
                            nodes: self.nodes,
                            seed,
                            mode: self.mode,
                            arrivals: self.arrivals,
                            clients: self.clients,
                        });
                    }
                }
            }
        }
        out
    }
}

/// One grid point, averaged over seeds. `invalid` and `failed` are totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub rate: f64,
    pub arm: Arm,
    pub block_size: usize,
    pub achieved_tps: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub invalid: usize,
    pub failed: usize,
}

impl Row {
    pub fn from_runs(runs: &[RunMetrics]) -> Row {
        let n = runs.len() as f64;
        let mean = |f: fn(&RunMetrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
        let c = &runs[0].config;
        Row {
            rate: c.rate,
            arm: c.arm,
            block_size: c.block_size,
            achieved_tps: mean(|m| m.achieved_tps),
            p50_ms: mean(|m| m.p50_ms),
            p95_ms: mean(|m| m.p95_ms),
            p99_ms: mean(|m| m.p99_ms),
            invalid: runs.iter().map(|m| m.invalid).sum(),
            failed: runs.iter().map(|m| m.failed + m.in_flight).sum(),
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{},{}",
            self.rate,
            self.arm,
            self.block_size,
            self.achieved_tps,
            self.p50_ms,
            self.p95_ms,
            self.p99_ms,
            self.invalid,
            self.failed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Runs grid points on the rayon pool; the same as sequential when the
    /// crate is built without the `parallel` feature.
    Parallel,
}

/// Runs the grid. Sim-time runs go in parallel; wall-clock runs share the
/// machine's real time and are always sequential.
pub fn sweep(cfg: &SweepConfig) -> deon_core::Result<(Vec<Row>, Vec<RunMetrics>)> {
    let exec = if cfg.mode == Mode::Sim { Exec::Parallel } else { Exec::Sequential };
    sweep_with(cfg, exec)
}

pub fn sweep_with(cfg: &SweepConfig, exec: Exec) -> deon_core::Result<(Vec<Row>, Vec<RunMetrics>)> {
    cfg.validate()?;
    let configs = cfg.configs();
    let runs: Vec<RunMetrics> = match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            configs.par_iter().map(run_bench).collect::<deon_core::Result<_>>()?
        }
        _ => configs.iter().map(run_bench).collect::<deon_core::Result<_>>()?,
    };
    let rows = runs.chunks(cfg.seeds.len()).map(Row::from_runs).collect();
    Ok((rows, runs))
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_line());
    }
    s
}

pub fn write_csv(path: &Path, rows: &[Row]) -> std::io::Result<()> {
    std::fs::write(path, to_csv(rows))
}

pub fn read_csv(text: &str) -> deon_core::Result<Vec<Row>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::InvalidRequest("csv header does not match".into()));
    }
    let bad = |line: &str| Error::InvalidRequest(format!("bad csv line {line:?}"));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad(line));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(line));
            let int = |i: usize| f[i].parse::<usize>().map_err(|_| bad(line));
            Ok(Row {
                rate: num(0)?,
                arm: f[1].parse().map_err(|_| bad(line))?,
                block_size: int(2)?,
                achieved_tps: num(3)?,
                p50_ms: num(4)?,
                p95_ms: num(5)?,
                p99_ms: num(6)?,
                invalid: int(7)?,
                failed: int(8)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_cardinality() {
        let cfg = SweepConfig::default();
        assert_eq!(cfg.configs().len(), 48);
        let cfg = SweepConfig { seeds: vec![1, 2, 3, 4, 5], ..SweepConfig::default() };
        assert_eq!(cfg.configs().len(), 240);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![Row {
            rate: 50.0,
            arm: Arm::PRIVATE_CAS,
            block_size: 10,
            achieved_tps: 49.8765,
            p50_ms: 261.5,
            p95_ms: 300.0,
            p99_ms: 310.25,
            invalid: 0,
            failed: 2,
        }];
        let text = to_csv(&rows);
        assert_eq!(text, format!("{CSV_HEADER}\n50,private+cas,10,49.877,261.500,300.000,310.250,0,2\n"));
        let back = read_csv(&text).unwrap();
        assert_eq!(back[0].arm, Arm::PRIVATE_CAS);
        assert_eq!(back[0].failed, 2);
        assert!(read_csv("nope\n").is_err());
    }
}
