//! Text and CSV renderings of evaluation results.

use std::fmt::Write as _;
use std::path::Path;

use cipg_core::metrics::TrajectoryReport;

use crate::error::{Error, Result};
use crate::pipeline::Comparison;

/// `key = value` lines, one metric per line.
pub fn render_report(report: &TrajectoryReport) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("n_epochs", report.n_epochs.to_string());
    for (axis, v) in ["x", "y", "z"].iter().zip(report.position_mae) {
        kv(&format!("pos_{axis}_mae_m"), format!("{v:.6}"));
    }
    if let Some(ori) = report.orientation_mae {
        for (axis, v) in ["x", "y", "z"].iter().zip(ori) {
            kv(&format!("ori_{axis}_mae_rad"), format!("{v:.6}"));
        }
    }
    kv("total_error", format!("{:.6}", report.total_error));
    kv("total_variance", format!("{:.6}", report.total_variance));
    kv("ate_rmse_m", format!("{:.6}", report.ate_rmse));
    kv("rpe_rmse_m", format!("{:.6}", report.rpe_rmse));
    kv("rpe_delta_s", format!("{}", report.rpe_delta));
    kv("align_yaw_rad", format!("{:.6}", report.transform.yaw));
    let t = report.transform.translation;
    kv("align_translation_m", format!("[{:.4}, {:.4}, {:.4}]", t.x, t.y, t.z));
    kv("outliers_5sigma", report.outliers_5sigma.to_string());
    if let Some(rt) = report.runtime_s {
        kv("runtime_s", format!("{rt:.4}"));
    }
    s
}

const METRIC_ROWS: [&str; 9] = [
    "Pos-x", "Pos-y", "Pos-z", "Ori-x", "Ori-y", "Ori-z", "Total Error", "Total Variance", "Runtime (s)",
];

fn metric_values(r: &TrajectoryReport) -> [Option<f64>; 9] {
    let ori = r.orientation_mae;
    [
        Some(r.position_mae[0]),
        Some(r.position_mae[1]),
        Some(r.position_mae[2]),
        ori.map(|o| o[0]),
        ori.map(|o| o[1]),
        ori.map(|o| o[2]),
        Some(r.total_error),
        Some(r.total_variance),
        r.runtime_s,
    ]
}

fn period_label(p: Option<f64>) -> String {
    match p {
        Some(p) => format!("{p} s"),
        None => "full".into(),
    }
}

/// One row per metric, one column per (period, estimator).
pub fn render_comparison(cmp: &Comparison) -> String {
    let mut header = vec!["State".to_owned()];
    let mut columns: Vec<Vec<String>> = Vec::new();
    for &period in &cmp.periods {
        for &kind in &cmp.estimators {
            let label = if cmp.periods.len() > 1 || period.is_some() {
                format!("{} @ {}", kind.label(), period_label(period))
            } else {
                kind.label().to_owned()
            };
            header.push(label);
            let cells = match cmp.entry(kind, period).map(|e| &e.result) {
                Some(Ok(r)) => metric_values(r)
                    .iter()
                    .map(|v| v.map_or("-".to_owned(), |v| format!("{v:.4}")))
                    .collect(),
                _ => vec!["failed".to_owned(); METRIC_ROWS.len()],
            };
            columns.push(cells);
        }
    }
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    widths[0] = widths[0].max(METRIC_ROWS.iter().map(|m| m.len()).max().unwrap_or(0));
    for (i, col) in columns.iter().enumerate() {
        widths[i + 1] = widths[i + 1].max(col.iter().map(String::len).max().unwrap_or(0));
    }
    let mut s = String::new();
    let line = |cells: Vec<&str>, s: &mut String| {
        let row: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(s, "{}", row.join("  ").trim_end());
    };
    line(header.iter().map(String::as_str).collect(), &mut s);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(s, "{}", "-".repeat(total));
    for (m, metric) in METRIC_ROWS.iter().enumerate() {
        let mut cells = vec![*metric];
        cells.extend(columns.iter().map(|c| c[m].as_str()));
        line(cells, &mut s);
    }
    for f in cmp.failures() {
        let _ = writeln!(s, "failed: {f}");
    }
    s
}

/// Long form: `period,estimator,metric,value`; failed runs carry
/// `status=failed` and an empty value.
pub fn write_comparison_csv(path: &Path, cmp: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let io_err = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    w.write_record(["period_s", "estimator", "metric", "value", "status"]).map_err(io_err)?;
    for e in &cmp.entries {
        let period = e.period.map(|p| p.to_string()).unwrap_or_default();
        match &e.result {
            Ok(r) => {
                for (metric, v) in METRIC_ROWS.iter().zip(metric_values(r)) {
                    let value = v.map(|v| v.to_string()).unwrap_or_default();
                    w.write_record([period.as_str(), e.kind.name(), metric, &value, "ok"]).map_err(io_err)?;
                }
            }
            Err(_) => {
                w.write_record([period.as_str(), e.kind.name(), "", "", "failed"]).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cipg_core::metrics::YawTranslation;

    fn sample() -> TrajectoryReport {
        TrajectoryReport {
            n_epochs: 3,
            position_mae: [0.1, 0.2, 0.3],
            orientation_mae: None,
            total_error: 0.6,
            total_variance: 0.01,
            ate_rmse: 0.4,
            rpe_rmse: 0.05,
            rpe_delta: 1.0,
            transform: YawTranslation::identity(),
            outliers_5sigma: 0,
            runtime_s: Some(0.5),
            rows: Vec::new(),
        }
    }

    #[test]
    fn report_lists_key_values() {
        let text = render_report(&sample());
        assert!(text.contains("total_error = 0.600000"));
        assert!(text.contains("pos_y_mae_m = 0.200000"));
        assert!(!text.contains("ori_x"));
    }

    #[test]
    fn missing_orientation_shows_dash() {
        let v = metric_values(&sample());
        assert!(v[3].is_none());
        assert_eq!(v[8], Some(0.5));
    }
}
