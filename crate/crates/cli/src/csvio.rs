//! RFC 4180 CSV emission for run records.

use physattn_core::{MetricReport, RunRecord};

/// Column order of a metric-report row.
pub const REPORT_HEADER: [&str; 11] = [
    "run_id",
    "alpha",
    "prior",
    "T",
    "R",
    "D",
    "R_hat",
    "D_hat",
    "S",
    "adjacent_cosine",
    "seed",
];

/// Quotes a field when it holds a comma, quote, or line break; embedded
/// quotes double.
pub fn escape(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn format_row(fields: &[String]) -> String {
    fields.iter().map(|f| escape(f)).collect::<Vec<_>>().join(",")
}

fn float(v: f64) -> String {
    format!("{v}")
}

pub fn report_fields(
    run_id: &str,
    alpha: f64,
    prior: &str,
    report: &MetricReport,
    seed: u64,
) -> Vec<String> {
    vec![
        run_id.to_string(),
        float(alpha),
        prior.to_string(),
        report.t.to_string(),
        float(report.r),
        float(report.d),
        float(report.r_hat),
        float(report.d_hat),
        float(report.s),
        float(report.adjacent_cosine),
        seed.to_string(),
    ]
}

pub fn record_fields(record: &RunRecord) -> Vec<String> {
    report_fields(
        &record.run_id,
        record.alpha,
        record.prior.kind.name(),
        &record.final_report,
        record.seed,
    )
}

/// Builds a whole document: header plus one line per row, LF endings.
pub fn document(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&format_row(
        &header.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
    ));
    out.push('\n');
    for row in rows {
        out.push_str(&format_row(row));
        out.push('\n');
    }
    out
}
