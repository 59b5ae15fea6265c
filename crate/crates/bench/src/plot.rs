// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use deon_harness::Arm;
use plotters::prelude::*;

use crate::Row;

/// Output files, in order: throughput and latency without private data,
/// then with it.
pub const PLOT_FILES: [&str; 4] =
    ["throughput_public.svg", "throughput_private.svg", "latency_public.svg", "latency_private.svg"];

#[derive(Clone, Copy)]
enum Metric {
    Throughput,
    Latency,
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// Writes the four plots into `dir`: one curve per (block size, content
/// store on/off), against the offered rate.
pub fn plot_sweep(rows: &[Row], dir: &Path) -> Result<Vec<PathBuf>, String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let jobs = [
        (PLOT_FILES[0], Metric::Throughput, false),
        (PLOT_FILES[1], Metric::Throughput, true),
        (PLOT_FILES[2], Metric::Latency, false),
        (PLOT_FILES[3], Metric::Latency, true),
    ];
    let mut out = Vec::new();
    for (name, metric, private) in jobs {
        let path = dir.join(name);
        let selected: Vec<&Row> = rows.iter().filter(|r| r.arm.private == private).collect();
        draw(&path, &selected, metric, private).map_err(|e| format!("{}: {e}", path.display()))?;
        out.push(path);
    }
    Ok(out)
}

fn value(r: &Row, metric: Metric) -> f64 {
    match metric {
        Metric::Throughput => r.achieved_tps,
        Metric::Latency => r.p50_ms / 1000.0,
    }
}

fn draw(path: &Path, rows: &[&Row], metric: Metric, private: bool) -> Result<(), Box<dyn std::error::Error>> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;

    let x_max = rows.iter().map(|r| r.rate).fold(0.0, f64::max).max(1.0) * 1.05;
    let y_max = rows.iter().map(|r| value(r, metric)).fold(0.0, f64::max).max(1e-3) * 1.15;
    let (title, y_label) = match metric {
        Metric::Throughput => ("Throughput", "committed tx/s"),
        Metric::Latency => ("Latency (p50)", "seconds"),
    };
    let caption = format!("{title}, {}", if private { "private data" } else { "public data" });

    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)?;
    chart.configure_mesh().x_desc("offered tx/s").y_desc(y_label).draw()?;

    let mut curves: Vec<(Arm, usize)> = rows.iter().map(|r| (r.arm, r.block_size)).collect();
    curves.sort_by_key(|(a, b)| (a.cas, *b));
    curves.dedup();
    for (i, (arm, block)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> =
            rows.iter().filter(|r| r.arm == *arm && r.block_size == *block).map(|r| (r.rate, value(r, metric))).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let label = format!("block {block}{}", if arm.cas { ", content store" } else { "" });
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart.draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))?;
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.85)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_four_svgs() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = Vec::new();
        for arm in Arm::ALL {
            for block_size in [10, 50] {
                for rate in [50.0, 100.0] {
                    rows.push(Row {
                        rate,
                        arm,
                        block_size,
                        achieved_tps: rate * 0.9,
                        p50_ms: 300.0,
                        p95_ms: 400.0,
                        p99_ms: 500.0,
                        invalid: 0,
                        failed: 0,
                    });
                }
            }
        }
        let files = plot_sweep(&rows, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        for f in files {
            let text = std::fs::read_to_string(f).unwrap();
            assert!(text.starts_with("<svg"));
            assert!(text.contains("block 50, content store"));
        }
    }
}
