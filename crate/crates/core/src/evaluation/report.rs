use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cv::{FoldMetrics, MetricsReport, AGGREGATION};
use super::metrics::Metrics;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CSV_HEADER: &str = "model,fold,mae,mse,accuracy";
pub const AGGREGATE_ROW: &str = "AGGREGATE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "json" => Some(ReportFormat::Json),
            "csv" => Some(ReportFormat::Csv),
            _ => None,
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidInput(format!(
                "unknown report format {other:?} (expected json or csv)"
            ))),
        }
    }
}

/// CSV with one row per fold and a final `AGGREGATE` row per report.
/// Numbers use the shortest representation that parses back exactly.
pub fn reports_to_csv(reports: &[MetricsReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(format!("CSV: {e}"));
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in reports {
        for f in &r.per_fold {
            w.write_record([
                r.model_name.clone(),
                f.fold_id.to_string(),
                f.mae.to_string(),
                f.mse.to_string(),
                f.accuracy.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let a = &r.aggregate;
        w.write_record([
            r.model_name.clone(),
            AGGREGATE_ROW.to_string(),
            a.mae.to_string(),
            a.mse.to_string(),
            a.accuracy.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Parses CSV written by [`reports_to_csv`]. Reports keep the order in which
/// models first appear. A model with only an `AGGREGATE` row (e.g. published
/// figures) yields a report with no folds.
pub fn reports_from_csv(text: &str) -> Result<Vec<MetricsReport>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("CSV header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::Format(format!(
            "expected CSV header {CSV_HEADER:?}, found {:?}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut order: Vec<String> = Vec::new();
    let mut folds: BTreeMap<String, Vec<FoldMetrics>> = BTreeMap::new();
    let mut aggregates: BTreeMap<String, Metrics> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let bad = |msg: String| Error::Format(format!("line {line}: {msg}"));
        let row = row.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            row[k]
                .parse::<f64>()
                .map_err(|e| bad(format!("field {k} {:?}: {e}", &row[k])))
        };
        let metrics = Metrics {
            mae: num(2)?,
            mse: num(3)?,
            accuracy: num(4)?,
        };
        let model = row[0].to_string();
        if !order.contains(&model) {
            order.push(model.clone());
        }
        if &row[1] == AGGREGATE_ROW {
            if aggregates.insert(model.clone(), metrics).is_some() {
                return Err(bad(format!("second AGGREGATE row for {model}")));
            }
        } else {
            let fold_id = row[1]
                .parse::<usize>()
                .map_err(|e| bad(format!("fold {:?}: {e}", &row[1])))?;
            folds.entry(model).or_default().push(FoldMetrics {
                fold_id,
                mae: metrics.mae,
                mse: metrics.mse,
                accuracy: metrics.accuracy,
                n_test_frames: 0,
                test_subjects: Vec::new(),
                best_epoch: None,
                per_class: None,
            });
        }
    }
    order
        .into_iter()
        .map(|model| {
            let per_fold = folds.remove(&model).unwrap_or_default();
            let aggregate = aggregates
                .remove(&model)
                .ok_or_else(|| Error::Format(format!("no AGGREGATE row for {model}")))?;
            Ok(MetricsReport {
                model_name: model,
                aggregation: AGGREGATION.into(),
                per_fold,
                aggregate,
            })
        })
        .collect()
}

pub fn report_to_json(report: &MetricsReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Writes `report` atomically; nothing is left at `path` on failure.
pub fn emit_report(report: &MetricsReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Json => report_to_json(report)?,
        ReportFormat::Csv => reports_to_csv(std::slice::from_ref(report))?,
    };
    write_atomic(path, text.as_bytes())
}

/// Loads reports from a JSON report (single or array) or CSV file.
pub fn load_reports(path: &Path) -> Result<Vec<MetricsReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match ReportFormat::from_path(path) {
        Some(ReportFormat::Csv) => reports_from_csv(&text),
        _ => {
            let value: serde_json::Value = serde_json::from_str(&text)?;
            if value.is_array() {
                Ok(serde_json::from_value(value)?)
            } else {
                Ok(vec![serde_json::from_value(value)?])
            }
        }
    }
}
