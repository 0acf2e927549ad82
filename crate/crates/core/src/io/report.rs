//! Metric reports as JSON and as a flat CSV with one row per image plus an
//! `aggregate` row. Undefined metrics are `null` in JSON and empty in CSV.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::json;

use crate::error::FormatError;
use crate::metrics::MetricReport;

pub const CSV_COLUMNS: [&str; 8] = [
    "image_id", "auprc", "fpr95", "mean_f1", "siou_gt", "ppv", "n_pos", "n_neg",
];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn csv_row(out: &mut String, id: &str, r: &MetricReport) {
    writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        csv_field(id),
        num(r.auprc),
        num(r.fpr95),
        num(r.mean_f1),
        num(r.siou_gt),
        num(r.ppv),
        r.n_pos,
        r.n_neg
    )
    .unwrap();
}

pub fn metrics_csv(per_image: &[(String, MetricReport)], aggregate: &MetricReport) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for (id, r) in per_image {
        csv_row(&mut out, id, r);
    }
    csv_row(&mut out, "aggregate", aggregate);
    out
}

pub fn metrics_json(
    per_image: &[(String, MetricReport)],
    aggregate: &MetricReport,
    config: &serde_json::Value,
) -> String {
    let images: Vec<serde_json::Value> = per_image
        .iter()
        .map(|(id, r)| {
            let mut v = serde_json::to_value(r).expect("report serializes");
            v["image_id"] = json!(id);
            v
        })
        .collect();
    let doc = json!({
        "config": config,
        "images": images,
        "aggregate": aggregate,
    });
    serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
}

/// Writes `metrics.json` and `metrics.csv` into `dir`.
pub fn write_metrics(
    dir: impl AsRef<Path>,
    per_image: &[(String, MetricReport)],
    aggregate: &MetricReport,
    config: &serde_json::Value,
) -> Result<(), FormatError> {
    let dir = dir.as_ref();
    super::write_bytes(
        &dir.join("metrics.json"),
        metrics_json(per_image, aggregate, config).as_bytes(),
    )?;
    super::write_bytes(&dir.join("metrics.csv"), metrics_csv(per_image, aggregate).as_bytes())
}
