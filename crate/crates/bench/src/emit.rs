use std::path::Path;

use ood_core::metrics::ReportMetric;
use ood_core::MetricReport64;

use crate::error::{io, BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    /// One metric per CSV, fixed 6-decimal formatting.
    Csv(ReportMetric),
    /// Full-precision JSON that parses back to the identical report.
    Json,
}

pub fn render(report: &MetricReport64, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv(metric) => report.to_csv(metric),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).unwrap_or_default();
            s.push('\n');
            s
        }
    }
}

pub fn emit_report(report: &MetricReport64, format: ReportFormat, path: &Path) -> Result<()> {
    write_text(path, &render(report, format))
}

pub fn parse_report(text: &str) -> Result<MetricReport64> {
    serde_json::from_str(text).map_err(|source| BenchError::Json { path: "<report>".into(), source })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io(parent))?;
    }
    std::fs::write(path, text).map_err(io(path))
}
