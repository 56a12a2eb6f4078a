//! Report emission.
//!
//! CSV output is two files: the cell rows at the given path, and a summary
//! next to it (`<stem>-summary.csv`) holding one row per config (means over
//! concepts: the CLAP-A/CLAP-T Pareto series and the match-rate bars) plus
//! one row per reference line. Floats are written with 4 decimals; absent
//! values are empty cells. JSON output is the whole report with the same
//! rounding.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{CellRow, ExperimentReport, ReferenceLines};
use crate::corpus::Category;
use crate::error::{Error, Result};

pub const ROW_COLUMNS: [&str; 13] = [
    "concept",
    "config",
    "category",
    "held_out",
    "clap_a",
    "fad",
    "clap_t",
    "bpm_match",
    "loudness_match",
    "key_match",
    "scale_match",
    "clips",
    "error",
];

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "kind",
    "name",
    "cells",
    "clap_a",
    "clap_t",
    "fad",
    "bpm_match",
    "loudness_match",
    "key_match",
    "scale_match",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Config(format!("unknown report format {s:?} (csv or json)"))),
        }
    }
}

/// Means over concepts for one config. Values are averaged over the
/// cells where they are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: String,
    pub cells: usize,
    pub clap_a: Option<f64>,
    pub clap_t: Option<f64>,
    pub fad: Option<f64>,
    pub bpm_match: Option<f64>,
    pub loudness_match: Option<f64>,
    pub key_match: Option<f64>,
    pub scale_match: Option<f64>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-config summary in first-appearance order of configs.
pub fn summarize(report: &ExperimentReport) -> Vec<ConfigSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !names.contains(&r.config.as_str()) {
            names.push(&r.config);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let rows: Vec<&CellRow> = report.rows.iter().filter(|r| r.config == name).collect();
            ConfigSummary {
                config: name.to_string(),
                cells: rows.len(),
                clap_a: mean(rows.iter().map(|r| r.clap_a)),
                clap_t: mean(rows.iter().map(|r| r.clap_t)),
                fad: mean(rows.iter().map(|r| r.fad)),
                bpm_match: mean(rows.iter().map(|r| r.bpm_match)),
                loudness_match: mean(rows.iter().map(|r| r.loudness_match)),
                key_match: mean(rows.iter().map(|r| r.key_match)),
                scale_match: mean(rows.iter().map(|r| r.scale_match)),
            }
        })
        .collect()
}

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn fmt4(x: Option<f64>) -> String {
    x.map(|v| format!("{:.4}", round4(v))).unwrap_or_default()
}

fn category_name(c: Category) -> &'static str {
    match c {
        Category::Percussion => "percussion",
        Category::Melodic => "melodic",
        Category::MultiInstrument => "multi-instrument",
        Category::Ambient => "ambient",
    }
}

fn parse_category(s: &str) -> Option<Category> {
    match s {
        "percussion" => Some(Category::Percussion),
        "melodic" => Some(Category::Melodic),
        "multi-instrument" => Some(Category::MultiInstrument),
        "ambient" => Some(Category::Ambient),
        _ => None,
    }
}

/// Path of the summary file written next to a CSV report.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}-summary.csv"))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    }
}

pub fn rows_csv(rows: &[CellRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ROW_COLUMNS).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.concept.clone(),
            r.config.clone(),
            category_name(r.category).to_string(),
            r.held_out.to_string(),
            fmt4(r.clap_a),
            fmt4(r.fad),
            fmt4(r.clap_t),
            fmt4(r.bpm_match),
            fmt4(r.loudness_match),
            fmt4(r.key_match),
            fmt4(r.scale_match),
            r.clips.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn summary_csv(summary: &[ConfigSummary], reference: &ReferenceLines) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_COLUMNS).expect("in-memory write");
    for s in summary {
        w.write_record([
            "config".to_string(),
            s.config.clone(),
            s.cells.to_string(),
            fmt4(s.clap_a),
            fmt4(s.clap_t),
            fmt4(s.fad),
            fmt4(s.bpm_match),
            fmt4(s.loudness_match),
            fmt4(s.key_match),
            fmt4(s.scale_match),
        ])
        .expect("in-memory write");
    }
    let lines = [
        ("ceilA", reference.ceil_a, None),
        ("ceilT", None, reference.ceil_t),
        ("floorT", None, reference.floor_t),
    ];
    for (name, a, t) in lines {
        let mut rec = vec![
            "reference".to_string(),
            name.to_string(),
            String::new(),
            fmt4(a),
            fmt4(t),
        ];
        rec.resize(SUMMARY_COLUMNS.len(), String::new());
        w.write_record(rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn rounded(report: &ExperimentReport) -> ExperimentReport {
    let r = |x: Option<f64>| x.map(round4);
    let mut out = report.clone();
    for row in &mut out.rows {
        row.clap_a = r(row.clap_a);
        row.fad = r(row.fad);
        row.clap_t = r(row.clap_t);
        row.bpm_match = r(row.bpm_match);
        row.loudness_match = r(row.loudness_match);
        row.key_match = r(row.key_match);
        row.scale_match = r(row.scale_match);
    }
    out.reference = ReferenceLines {
        ceil_a: r(out.reference.ceil_a),
        ceil_t: r(out.reference.ceil_t),
        floor_t: r(out.reference.floor_t),
    };
    out
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    #[serde(flatten)]
    report: ExperimentReport,
    summary: Vec<ConfigSummary>,
}

pub fn report_json(report: &ExperimentReport) -> String {
    let report = rounded(report);
    let summary = summarize(&report)
        .into_iter()
        .map(|mut s| {
            for v in [
                &mut s.clap_a,
                &mut s.clap_t,
                &mut s.fad,
                &mut s.bpm_match,
                &mut s.loudness_match,
                &mut s.key_match,
                &mut s.scale_match,
            ] {
                *v = v.map(round4);
            }
            s
        })
        .collect();
    serde_json::to_string_pretty(&JsonReport { report, summary }).expect("report serializes")
}

/// Write the report. CSV writes the rows file and its summary file.
/// Returns the paths written.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Csv => {
            std::fs::write(path, rows_csv(&report.rows)).map_err(|e| Error::io(path, e))?;
            let sp = summary_path(path);
            std::fs::write(&sp, summary_csv(&summarize(report), &report.reference)).map_err(|e| Error::io(&sp, e))?;
            Ok(vec![path.to_path_buf(), sp])
        }
        ReportFormat::Json => {
            std::fs::write(path, report_json(report)).map_err(|e| Error::io(path, e))?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

fn load_err(path: &Path, field: String, detail: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        field,
        detail: detail.into(),
    }
}

/// Parse a rows CSV written by [`emit_report`].
pub fn parse_rows_csv(text: &str, path: &Path) -> Result<Vec<CellRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(ROW_COLUMNS.iter().copied()) {
        return Err(load_err(
            path,
            "header".into(),
            format!("expected columns {ROW_COLUMNS:?}"),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let at = |c: &str| format!("row {} {c}", i + 1);
        let opt = |j: usize| -> Result<Option<f64>> {
            let s = &rec[j];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|e| load_err(path, at(ROW_COLUMNS[j]), format!("{e}")))
            }
        };
        rows.push(CellRow {
            concept: rec[0].to_string(),
            config: rec[1].to_string(),
            category: parse_category(&rec[2]).ok_or_else(|| load_err(path, at("category"), "unknown category"))?,
            held_out: rec[3]
                .parse()
                .map_err(|e| load_err(path, at("held_out"), format!("{e}")))?,
            clap_a: opt(4)?,
            fad: opt(5)?,
            clap_t: opt(6)?,
            bpm_match: opt(7)?,
            loudness_match: opt(8)?,
            key_match: opt(9)?,
            scale_match: opt(10)?,
            clips: rec[11]
                .parse()
                .map_err(|e| load_err(path, at("clips"), format!("{e}")))?,
            error: (!rec[12].is_empty()).then(|| rec[12].to_string()),
        });
    }
    Ok(rows)
}

pub fn read_rows_csv(path: &Path) -> Result<Vec<CellRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rows_csv(&text, path)
}

pub fn read_report_json(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: JsonReport = serde_json::from_str(&text).map_err(|e| load_err(path, "report".into(), e.to_string()))?;
    Ok(parsed.report)
}
