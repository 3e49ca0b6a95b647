//! Report writers: per-repeat CSV, the paper-style per-class summary table,
//! sweep and ablation CSVs, and an optional SVG chart for the sweep.
//!
//! Every cell is printed with fixed 6-decimal formatting and no timestamps
//! or environment details are embedded, so a report's bytes are a pure
//! function of its contents — the determinism contract leans on this.

use std::fs;
use std::path::Path;

use crate::error::{PhnetError, Result};
use crate::evalx::{
    AblationReport, ExperimentReport, Metrics, SweepReport, CLASS_NAMES, N_CLASSES,
};

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| PhnetError::io(path.display().to_string(), e))
}

// ---------------------------------------------------------------------------
// Per-repeat experiment CSV
// ---------------------------------------------------------------------------

/// One row per repeat plus `mean` and `std` summary rows.
pub fn bootstrap_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("repeat");
    for name in Metrics::COL_NAMES {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for row in &report.rows {
        out.push_str(&row.repeat.to_string());
        for v in row.metrics.to_cols() {
            out.push(',');
            out.push_str(&fmt(v));
        }
        out.push('\n');
    }
    for (label, m) in [("mean", report.mean), ("std", report.std)] {
        out.push_str(label);
        for v in m.to_cols() {
            out.push(',');
            out.push_str(&fmt(v));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Per-class summary table (the paper's Table 2 shape)
// ---------------------------------------------------------------------------

fn scalar_mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-class rows (AUC / ACC / sensitivity / specificity, mean ± std over
/// repeats) plus an `ALL` row. Per-class accuracy is the one-vs-rest
/// (TP+TN)/N of the argmax predictions; with `per_class_test` samples per
/// class that equals `(sens·n + spec·(N−n))/N` exactly, computed per repeat
/// so the dispersion is honest. The `ALL` row carries overall accuracy, the
/// macro AUC, and macro-averaged sensitivity/specificity.
pub fn table2_csv(report: &ExperimentReport, per_class_test: usize) -> String {
    let n_test = (N_CLASSES * per_class_test) as f64;
    let n_pos = per_class_test as f64;
    let mut out =
        String::from("class,auc_mean,auc_std,acc_mean,acc_std,sens_mean,sens_std,spec_mean,spec_std\n");

    let series = |f: &dyn Fn(&Metrics) -> f64| -> (f64, f64) {
        let vals: Vec<f64> = report.rows.iter().map(|r| f(&r.metrics)).collect();
        scalar_mean_std(&vals)
    };

    for k in 0..N_CLASSES {
        let acc_k = move |m: &Metrics| (m.sens[k] * n_pos + m.spec[k] * (n_test - n_pos)) / n_test;
        let cells = [
            series(&|m| m.auc[k]),
            series(&acc_k),
            series(&|m| m.sens[k]),
            series(&|m| m.spec[k]),
        ];
        out.push_str(CLASS_NAMES[k]);
        for (mean, std) in cells {
            out.push_str(&format!(",{},{}", fmt(mean), fmt(std)));
        }
        out.push('\n');
    }

    let macro3 = |v: &[f64; 3]| v.iter().sum::<f64>() / 3.0;
    let cells = [
        series(&|m| m.auc_macro),
        series(&|m| m.acc),
        series(&|m| macro3(&m.sens)),
        series(&|m| macro3(&m.spec)),
    ];
    out.push_str("ALL");
    for (mean, std) in cells {
        out.push_str(&format!(",{},{}", fmt(mean), fmt(std)));
    }
    out.push('\n');
    out
}

// ---------------------------------------------------------------------------
// Sweep CSV + SVG
// ---------------------------------------------------------------------------

/// One row per swept training size: `mean`, `min`, `max` for every metric.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("size,n_runs");
    for name in Metrics::COL_NAMES {
        for suffix in ["mean", "min", "max"] {
            out.push(',');
            out.push_str(&format!("{name}_{suffix}"));
        }
    }
    out.push('\n');
    for p in &report.points {
        out.push_str(&format!("{},{}", p.size, p.n_runs));
        let (mean, min, max) = (p.mean.to_cols(), p.min.to_cols(), p.max.to_cols());
        for c in 0..Metrics::N_COLS {
            out.push_str(&format!(",{},{},{}", fmt(mean[c]), fmt(min[c]), fmt(max[c])));
        }
        out.push('\n');
    }
    out
}

/// Line chart of the sweep: macro-AUC min/max band, macro-AUC and accuracy
/// mean lines, on a fixed [0, 1] metric axis.
pub fn sweep_svg(report: &SweepReport) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 56.0; // left margin
    const MR: f64 = 16.0;
    const MT: f64 = 20.0;
    const MB: f64 = 44.0;
    let plot_w = W - ML - MR;
    let plot_h = H - MT - MB;

    let points = &report.points;
    let (x_lo, x_hi) = match (points.first(), points.last()) {
        (Some(a), Some(b)) if b.size > a.size => (a.size as f64, b.size as f64),
        (Some(a), _) => (a.size as f64 - 1.0, a.size as f64 + 1.0),
        _ => (0.0, 1.0),
    };
    let x = |size: f64| ML + (size - x_lo) / (x_hi - x_lo) * plot_w;
    let y = |v: f64| MT + (1.0 - v.clamp(0.0, 1.0)) * plot_h;
    let xy = |sx: f64, sy: f64| format!("{:.2},{:.2}", x(sx), y(sy));

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));

    // Min/max envelope of the macro AUC, drawn as a closed polygon.
    if points.len() > 1 {
        let mut band = String::new();
        for p in points {
            band.push_str(&xy(p.size as f64, p.max.auc_macro));
            band.push(' ');
        }
        for p in points.iter().rev() {
            band.push_str(&xy(p.size as f64, p.min.auc_macro));
            band.push(' ');
        }
        svg.push_str(&format!(
            "  <polygon points=\"{}\" fill=\"#c8c8c8\" stroke=\"none\"/>\n",
            band.trim_end()
        ));
    }

    let auc_line = |p: &crate::evalx::SweepPoint| p.mean.auc_macro;
    let acc_line = |p: &crate::evalx::SweepPoint| p.mean.acc;
    let series: [(&dyn Fn(&crate::evalx::SweepPoint) -> f64, &str); 2] =
        [(&auc_line, "#1f4e9c"), (&acc_line, "#b03a2e")];
    for (metric, color) in series {
        if points.is_empty() {
            continue;
        }
        let pts: Vec<String> = points.iter().map(|p| xy(p.size as f64, metric(p))).collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            pts.join(" "),
            color
        ));
    }

    // Axes and ticks.
    svg.push_str(&format!(
        "  <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{:.2}\" stroke=\"black\"/>\n",
        MT + plot_h
    ));
    svg.push_str(&format!(
        "  <line x1=\"{ML}\" y1=\"{0:.2}\" x2=\"{1:.2}\" y2=\"{0:.2}\" stroke=\"black\"/>\n",
        MT + plot_h,
        ML + plot_w
    ));
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{v:.1}</text>\n",
            ML - 6.0,
            y(v) + 4.0
        ));
    }
    for p in points {
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            x(p.size as f64),
            MT + plot_h + 16.0,
            p.size
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">training samples</text>\n",
        ML + plot_w / 2.0,
        H - 10.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#1f4e9c\">macro AUC (band: min/max)</text>\n",
        ML + 10.0,
        MT + 16.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#b03a2e\">accuracy</text>\n",
        ML + 10.0,
        MT + 32.0
    ));
    svg.push_str("</svg>\n");
    svg
}

// ---------------------------------------------------------------------------
// Ablation CSV
// ---------------------------------------------------------------------------

/// Mean ± std per arm with the paper's ablation columns
/// (AUC = macro average, ACC, per-class AUC0..2).
pub fn ablation_csv(report: &AblationReport) -> String {
    let mut out = String::from(
        "name,auc_mean,auc_std,acc_mean,acc_std,auc0_mean,auc0_std,auc1_mean,auc1_std,auc2_mean,auc2_std\n",
    );
    for row in &report.rows {
        out.push_str(&row.name);
        for (mean, std) in [
            (row.mean.auc_macro, row.std.auc_macro),
            (row.mean.acc, row.std.acc),
            (row.mean.auc[0], row.std.auc[0]),
            (row.mean.auc[1], row.std.auc[1]),
            (row.mean.auc[2], row.std.auc[2]),
        ] {
            out.push_str(&format!(",{},{}", fmt(mean), fmt(std)));
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalx::{AblationMode, AblationRow, MetricsRow, SweepPoint};

    fn metrics(base: f64) -> Metrics {
        Metrics::from_cols(std::array::from_fn(|i| {
            (base + i as f64 / 100.0).clamp(0.0, 1.0)
        }))
    }

    fn toy_report() -> ExperimentReport {
        ExperimentReport::from_rows(vec![
            MetricsRow {
                repeat: 0,
                metrics: metrics(0.5),
            },
            MetricsRow {
                repeat: 1,
                metrics: metrics(0.7),
            },
        ])
    }

    #[test]
    fn bootstrap_csv_golden() {
        let csv = bootstrap_csv(&toy_report());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 2); // header + rows + mean/std
        assert_eq!(
            lines[0],
            "repeat,acc,auc_macro,auc0,auc1,auc2,sens0,sens1,sens2,spec0,spec1,spec2"
        );
        assert_eq!(
            lines[1],
            "0,0.500000,0.510000,0.520000,0.530000,0.540000,0.550000,0.560000,0.570000,0.580000,0.590000,0.600000"
        );
        assert!(lines[3].starts_with("mean,0.600000,0.610000"));
        // std of {0.5, 0.7} = 0.141421…
        assert!(lines[4].starts_with("std,0.141421,0.141421"));
        assert!(csv.ends_with('\n'));
    }

    #[test]
    fn table2_has_class_rows_and_consistent_acc() {
        let report = toy_report();
        let csv = table2_csv(&report, 6);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("Non-PH,"));
        assert!(lines[2].starts_with("Pre-capillary PH,"));
        assert!(lines[3].starts_with("Post-capillary PH,"));
        assert!(lines[4].starts_with("ALL,"));

        // Check class-0 accuracy against a direct recomputation:
        // acc0 per repeat = (sens0*6 + spec0*12) / 18.
        let expect: Vec<f64> = report
            .rows
            .iter()
            .map(|r| (r.metrics.sens[0] * 6.0 + r.metrics.spec[0] * 12.0) / 18.0)
            .collect();
        let mean = (expect[0] + expect[1]) / 2.0;
        let cells: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cells[3], fmt(mean), "acc_mean cell");
        // ALL row carries the overall accuracy column.
        let all_cells: Vec<&str> = lines[4].split(',').collect();
        let acc_mean = (report.rows[0].metrics.acc + report.rows[1].metrics.acc) / 2.0;
        assert_eq!(all_cells[3], fmt(acc_mean));
    }

    #[test]
    fn sweep_csv_shape() {
        let report = SweepReport {
            points: vec![
                SweepPoint {
                    size: 71,
                    n_runs: 35,
                    mean: metrics(0.6),
                    min: metrics(0.5),
                    max: metrics(0.7),
                },
                SweepPoint {
                    size: 76,
                    n_runs: 35,
                    mean: metrics(0.65),
                    min: metrics(0.55),
                    max: metrics(0.75),
                },
            ],
        };
        let csv = sweep_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        let header_cols = lines[0].split(',').count();
        assert_eq!(header_cols, 2 + 3 * Metrics::N_COLS);
        assert!(lines[1].starts_with("71,35,0.600000,0.500000,0.700000"));
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), header_cols);
        }
    }

    #[test]
    fn sweep_svg_contains_band_lines_and_ticks() {
        let report = SweepReport {
            points: (0..4)
                .map(|i| SweepPoint {
                    size: 71 + 5 * i,
                    n_runs: 35,
                    mean: metrics(0.6),
                    min: metrics(0.5),
                    max: metrics(0.7),
                })
                .collect(),
        };
        let svg = sweep_svg(&report);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polygon"), "missing min/max band");
        assert_eq!(svg.matches("<polyline").count(), 2, "two mean lines");
        assert!(svg.contains(">86<"), "missing x tick label");
        assert!(svg.contains(">0.4<"), "missing y tick label");
        assert!(svg.ends_with("</svg>\n"));
        // Deterministic output.
        assert_eq!(svg, sweep_svg(&report));
    }

    #[test]
    fn ablation_csv_rows() {
        let report = AblationReport {
            mode: AblationMode::Gcn,
            rows: vec![
                AblationRow {
                    name: "Full_model".into(),
                    n_image_nodes: 11,
                    mean: metrics(0.8),
                    std: metrics(0.05),
                },
                AblationRow {
                    name: "No_GCN".into(),
                    n_image_nodes: 11,
                    mean: metrics(0.7),
                    std: metrics(0.04),
                },
            ],
            plan_files: vec![],
        };
        let csv = ablation_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 11);
        assert!(lines[1].starts_with("Full_model,0.810000,0.060000,0.800000,0.050000"));
        assert!(lines[2].starts_with("No_GCN,"));
    }
}
