// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use deon_bench::{plot_sweep, run_bench, sweep_with, to_csv, write_csv, BenchConfig, Exec, Row, SweepConfig};
use deon_harness::{Arm, Arrivals, Mode};
use serde_json::json;

use crate::{Failure, Report};

#[derive(Args)]
pub struct RunArgs {
    /// Offered load in tx/s.
    #[arg(long, default_value_t = 100.0)]
    rate: f64,
    #[arg(long, default_value_t = 1000)]
    total: usize,
    /// baseline | cas | private | private+cas
    #[arg(long, default_value = "baseline")]
    arm: Arm,
    #[arg(long, default_value_t = 50)]
    block_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    nodes: u32,
    #[arg(long, default_value_t = 8)]
    clients: usize,
    /// sim | wall
    #[arg(long, default_value = "sim")]
    mode: Mode,
    /// uniform | poisson
    #[arg(long, default_value = "uniform")]
    arrivals: Arrivals,
    /// CSV output; per-transaction samples go next to it as <stem>.samples.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum BenchCommand {
    /// One load run.
    Run(RunArgs),
    /// Grid of runs over rates, arms, block sizes and seeds, with plots.
    Sweep {
        /// JSON sweep description [default: the full grid].
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Run the grid on one thread.
        #[arg(long)]
        sequential: bool,
    },
}

fn io(p: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new("io", format!("{}: {e}", p.display()))
}

fn samples_path(csv: &Path) -> PathBuf {
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    csv.with_file_name(format!("{stem}.samples.jsonl"))
}

pub fn run(c: BenchCommand) -> Result<Report, Failure> {
    match c {
        BenchCommand::Run(a) => {
            let cfg = BenchConfig {
                rate: a.rate,
                total: a.total,
                arm: a.arm,
                block_size: a.block_size,
                nodes: a.nodes,
                seed: a.seed,
                mode: a.mode,
                arrivals: a.arrivals,
                clients: a.clients,
            };
            let m = run_bench(&cfg)?;
            if !m.conserved() {
                return Err(Failure::new("invalid_run", "sample counts do not add up to the submitted total"));
            }
            let row = Row::from_runs(std::slice::from_ref(&m));
            let csv = to_csv(std::slice::from_ref(&row));
            if let Some(out) = &a.out {
                if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
                }
                write_csv(out, std::slice::from_ref(&row)).map_err(|e| io(out, e))?;
                let sp = samples_path(out);
                m.write_samples(&sp).map_err(|e| io(&sp, e))?;
            }
            let text = match &a.out {
                Some(out) => format!(
                    "{} tx/s committed at {} offered, p50 {:.1} ms, p99 {:.1} ms\nwritten {}\n",
                    fmt3(m.achieved_tps),
                    a.rate,
                    m.p50_ms,
                    m.p99_ms,
                    out.display()
                ),
                None => csv,
            };
            Ok(Report::new(&m, text))
        }
        BenchCommand::Sweep { config, out, sequential } => {
            let cfg: SweepConfig = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| io(p, e))?;
                    serde_json::from_str(&text).map_err(|e| Failure::new("invalid_request", format!("{}: {e}", p.display())))?
                }
                None => SweepConfig::default(),
            };
            let exec = if sequential || cfg.mode == Mode::Wall { Exec::Sequential } else { Exec::Parallel };
            let (rows, runs) = sweep_with(&cfg, exec)?;
            std::fs::create_dir_all(&out).map_err(|e| io(&out, e))?;
            let csv = out.join("sweep.csv");
            write_csv(&csv, &rows).map_err(|e| io(&csv, e))?;
            let plots = plot_sweep(&rows, &out).map_err(|e| Failure::new("io", e))?;
            let runs_path = out.join("runs.json");
            std::fs::write(&runs_path, serde_json::to_string_pretty(&runs).expect("runs serialize"))
                .map_err(|e| io(&runs_path, e))?;
            let mut files = vec![csv, runs_path];
            files.extend(plots);
            let text = format!("{}\nwritten {} files to {}\n", to_csv(&rows).trim_end(), files.len(), out.display());
            Ok(Report::new(&json!({"rows": rows, "files": files}), text))
        }
    }
}

fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_sit_next_to_the_csv() {
        assert_eq!(samples_path(Path::new("out/run.csv")), PathBuf::from("out/run.samples.jsonl"));
        assert_eq!(samples_path(Path::new("r")), PathBuf::from("r.samples.jsonl"));
    }
}
