//! Report export: experiment results as versioned JSON (round-trippable) and
//! as long-format CSV — one `(scenario, info_level, policy, replication,
//! metric, value)` row per number — plus consumption histograms as binned
//! CSV that any plotting tool can ingest directly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{MetricsReport, PolicyMetrics};
use crate::movielens::MovielensReport;

pub const REPORT_FORMAT_VERSION: u32 = 1;

pub const METRICS_CSV_HEADER: &str = "scenario,info_level,policy,replication,metric,value";
pub const HISTOGRAM_CSV_HEADER: &str =
    "policy,enrichment_bin,temptation_bin,enrichment_center,temptation_center,count";

#[derive(Serialize, Deserialize)]
struct ReportFile<T> {
    format_version: u32,
    kind: String,
    report: T,
}

fn save_versioned<T: Serialize>(report: &T, kind: &str, path: &Path) -> Result<()> {
    let file = ReportFile {
        format_version: REPORT_FORMAT_VERSION,
        kind: kind.to_string(),
        report,
    };
    let json = serde_json::to_string_pretty(&file)?;
    fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

fn load_versioned<T: DeserializeOwned>(kind: &str, path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: ReportFile<T> = serde_json::from_str(&text)?;
    if file.format_version != REPORT_FORMAT_VERSION {
        return Err(Error::Input(format!(
            "report file {} has format version {}, expected {REPORT_FORMAT_VERSION}",
            path.display(),
            file.format_version
        )));
    }
    if file.kind != kind {
        return Err(Error::Input(format!(
            "report file {} holds a '{}' report, expected '{kind}'",
            path.display(),
            file.kind
        )));
    }
    Ok(file.report)
}

pub fn save_metrics_json(report: &MetricsReport, path: &Path) -> Result<()> {
    save_versioned(report, "synthetic", path)
}

pub fn load_metrics_json(path: &Path) -> Result<MetricsReport> {
    load_versioned("synthetic", path)
}

pub fn save_movielens_json(report: &MovielensReport, path: &Path) -> Result<()> {
    save_versioned(report, "movielens", path)
}

pub fn load_movielens_json(path: &Path) -> Result<MovielensReport> {
    load_versioned("movielens", path)
}

/// Quotes a CSV field when it contains a delimiter, quote, or newline.
fn csv_field(raw: &str) -> String {
    if raw.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

fn push_row(out: &mut String, scenario: &str, info: &str, policy: &str, replication: &str, metric: &str, value: f64) {
    let _ = writeln!(
        out,
        "{},{},{},{},{},{}",
        csv_field(scenario),
        csv_field(info),
        csv_field(policy),
        csv_field(replication),
        csv_field(metric),
        value
    );
}

fn policy_rows(out: &mut String, scenario: &str, info: &str, metrics: &PolicyMetrics) {
    let policy = metrics.policy.name();
    for (r, value) in metrics.enrichment_per_replication.iter().enumerate() {
        push_row(out, scenario, info, policy, &r.to_string(), "overall_individual_enrichment", *value);
    }
    for (metric, value) in [
        ("mean_enrichment", metrics.mean_enrichment),
        ("std_enrichment", metrics.std_enrichment),
        ("mean_consumed_enrichment", metrics.mean_consumed_enrichment),
        ("mean_consumed_temptation", metrics.mean_consumed_temptation),
        ("on_platform_consumptions", metrics.on_platform_consumptions as f64),
    ] {
        push_row(out, scenario, info, policy, "all", metric, value);
    }
}

/// Long-format CSV for a synthetic-world experiment report.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{METRICS_CSV_HEADER}");
    let scenario = report.config.world.scenario.name();
    let info = report.config.info.name();
    for metrics in &report.per_policy {
        policy_rows(&mut out, scenario, info, metrics);
    }
    out
}

/// Long-format CSV for a ratings-sandbox experiment report. The estimated
/// world plays the role of ground truth, so the information level is fixed
/// at `perfect`; resamples occupy the replication column.
pub fn movielens_metrics_csv(report: &MovielensReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{METRICS_CSV_HEADER}");
    for metrics in &report.per_policy {
        policy_rows(&mut out, "ratings_sandbox", "perfect", metrics);
    }
    out
}

/// Binned consumption-frequency CSV over every per-policy histogram: one
/// row per (policy, enrichment bin, temptation bin) with bin centers and
/// the consumption count.
pub fn histogram_csv(per_policy: &[PolicyMetrics]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HISTOGRAM_CSV_HEADER}");
    for metrics in per_policy {
        let policy = csv_field(metrics.policy.name());
        let hist = &metrics.histogram;
        let (ubins, vbins) = hist.spec.bins;
        for ui in 0..ubins {
            for vi in 0..vbins {
                let (uc, vc) = hist.bin_center(ui, vi);
                let _ = writeln!(out, "{policy},{ui},{vi},{uc},{vc},{}", hist.count(ui, vi));
            }
        }
    }
    out
}

pub fn save_text(content: &str, path: &Path) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}
