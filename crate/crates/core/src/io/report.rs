//! Tabular evaluation reports.

use std::path::Path;

use super::config::ReportFormat;
use super::write_atomic;
use crate::error::Result;
use crate::metrics::EvalReport;

const COLUMNS: [&str; 6] = ["MSE", "PSNR", "NRMS", "AE", "AEF", "Time"];

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:.6}"))
}

fn fields(r: &EvalReport) -> Vec<String> {
    vec![
        cell(r.mse),
        r.psnr.map_or(String::new(), |p| p.label()),
        cell(r.nrms),
        cell(r.ae),
        cell(r.aef),
        format!("{:.3}", r.runtime),
    ]
}

fn table(leading: &[&str], rows: Vec<Vec<String>>, format: ReportFormat) -> String {
    let sep = format.separator().to_string();
    let header: Vec<&str> = leading.iter().copied().chain(COLUMNS).collect();
    let mut out = header.join(&sep);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(&sep));
        out.push('\n');
    }
    out
}

/// One row per method: `method,MSE,PSNR,NRMS,AE,AEF,Time`.
pub fn format_report(rows: &[EvalReport], format: ReportFormat) -> String {
    let body = rows
        .iter()
        .map(|r| std::iter::once(r.method_name.clone()).chain(fields(r)).collect())
        .collect();
    table(&["method"], body, format)
}

/// Per-scene rows: `scene,method,MSE,PSNR,NRMS,AE,AEF,Time`.
pub fn format_scene_report(rows: &[(String, EvalReport)], format: ReportFormat) -> String {
    let body = rows
        .iter()
        .map(|(scene, r)| [scene.clone(), r.method_name.clone()].into_iter().chain(fields(r)).collect())
        .collect();
    table(&["scene", "method"], body, format)
}

pub fn write_report(path: &Path, rows: &[EvalReport], format: ReportFormat) -> Result<()> {
    write_atomic(path, format_report(rows, format).as_bytes())
}
