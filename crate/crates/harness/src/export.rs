//! CSV and JSON-lines export of run records.
//!
//! CSV columns are `config_hash, trial_index, toolkit_version`, then
//! `sweep.<key>` and `metric.<key>` each in lexicographic order. Reals are
//! written in shortest round-trip form, so parsing an export gives back equal
//! records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::config::ParamValue;
use crate::runner::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

impl Format {
    /// `.jsonl` and `.json` select JSON lines, anything else CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Format::JsonLines,
            _ => Format::Csv,
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        })
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" | "json-lines" => Ok(Format::JsonLines),
            other => Err(format!("unknown format `{other}` (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("no records to export")]
    EmptyResult,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

const META: [&str; 3] = ["config_hash", "trial_index", "toolkit_version"];

/// Column names for `records`: union of their sweep and metric keys.
pub fn csv_header(records: &[RunRecord]) -> Vec<String> {
    let sweep: BTreeSet<&String> = records.iter().flat_map(|r| r.sweep_point.keys()).collect();
    let metric: BTreeSet<&String> = records.iter().flat_map(|r| r.metrics.keys()).collect();
    META.iter()
        .map(|s| s.to_string())
        .chain(sweep.into_iter().map(|k| format!("sweep.{k}")))
        .chain(metric.into_iter().map(|k| format!("metric.{k}")))
        .collect()
}

fn csv_cells(record: &RunRecord, header: &[String]) -> Vec<String> {
    header
        .iter()
        .map(|col| match col.as_str() {
            "config_hash" => format!("{:016x}", record.config_hash),
            "trial_index" => record.trial_index.to_string(),
            "toolkit_version" => record.toolkit_version.clone(),
            c => {
                if let Some(k) = c.strip_prefix("sweep.") {
                    record.sweep_point.get(k).map(ToString::to_string).unwrap_or_default()
                } else {
                    let k = c.strip_prefix("metric.").expect("metric column");
                    record.metrics.get(k).map(|v| format!("{v:?}")).unwrap_or_default()
                }
            }
        })
        .collect()
}

/// CSV text for `records` under `header`, optionally preceded by the header.
pub fn csv_text(records: &[RunRecord], header: &[String], with_header: bool) -> Result<String, ExportError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    if with_header {
        w.write_record(header)?;
    }
    for r in records {
        w.write_record(csv_cells(r, header))?;
    }
    let bytes = w.into_inner().map_err(|e| ExportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

fn json_number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or_else(|| Value::String(format!("{v:?}")), Value::Number)
}

fn json_line(record: &RunRecord) -> String {
    let sweep: Map<String, Value> = record
        .sweep_point
        .iter()
        .map(|(k, v)| {
            let j = match v {
                ParamValue::Int(i) => Value::from(*i),
                ParamValue::Real(r) => json_number(*r),
                ParamValue::Ident(s) => Value::String(s.clone()),
            };
            (k.clone(), j)
        })
        .collect();
    let metrics: Map<String, Value> = record.metrics.iter().map(|(k, v)| (k.clone(), json_number(*v))).collect();
    let mut obj = Map::new();
    obj.insert("config_hash".into(), Value::String(format!("{:016x}", record.config_hash)));
    obj.insert("metrics".into(), Value::Object(metrics));
    obj.insert("sweep_point".into(), Value::Object(sweep));
    obj.insert("toolkit_version".into(), Value::String(record.toolkit_version.clone()));
    obj.insert("trial_index".into(), Value::from(record.trial_index));
    Value::Object(obj).to_string()
}

/// JSON-lines text, one record per line.
pub fn jsonl_text(records: &[RunRecord]) -> String {
    records.iter().map(|r| json_line(r) + "\n").collect()
}

pub fn export_results(records: &[RunRecord], format: Format) -> Result<String, ExportError> {
    if records.is_empty() {
        return Err(ExportError::EmptyResult);
    }
    match format {
        Format::Csv => csv_text(records, &csv_header(records), true),
        Format::JsonLines => Ok(jsonl_text(records)),
    }
}

pub fn parse_results(text: &str, format: Format) -> Result<Vec<RunRecord>, ExportError> {
    match format {
        Format::Csv => parse_csv(text),
        Format::JsonLines => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| parse_json_line(l).map_err(|message| ExportError::Parse { line: i + 1, message }))
            .collect(),
    }
}

fn parse_hash(s: &str) -> Result<u64, String> {
    u64::from_str_radix(s, 16).map_err(|_| format!("bad config hash `{s}`"))
}

fn parse_metric(s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("bad metric value `{s}`"))
}

fn parse_csv(text: &str) -> Result<Vec<RunRecord>, ExportError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < META.len() || header[..META.len()] != META {
        return Err(ExportError::Parse {
            line: 1,
            message: "header does not start with the record metadata columns".into(),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let err = |message: String| ExportError::Parse { line, message };
        let mut record = RunRecord {
            config_hash: parse_hash(&row[0]).map_err(err)?,
            trial_index: row[1].parse().map_err(|_| err(format!("bad trial index `{}`", &row[1])))?,
            toolkit_version: row[2].to_string(),
            sweep_point: BTreeMap::new(),
            metrics: BTreeMap::new(),
        };
        for (col, cell) in header.iter().zip(row.iter()).skip(META.len()) {
            if cell.is_empty() {
                continue;
            }
            if let Some(k) = col.strip_prefix("sweep.") {
                let v: ParamValue = cell.parse().expect("infallible");
                record.sweep_point.insert(k.to_string(), v);
            } else if let Some(k) = col.strip_prefix("metric.") {
                record.metrics.insert(k.to_string(), parse_metric(cell).map_err(err)?);
            } else {
                return Err(err(format!("unexpected column `{col}`")));
            }
        }
        out.push(record);
    }
    Ok(out)
}

fn parse_json_line(line: &str) -> Result<RunRecord, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = v.as_object().ok_or("record is not an object")?;
    let field = |k: &str| obj.get(k).ok_or_else(|| format!("missing `{k}`"));
    let number = |v: &Value| -> Result<f64, String> {
        match v {
            Value::Number(n) => n.as_f64().ok_or_else(|| "number out of range".to_string()),
            Value::String(s) => parse_metric(s),
            _ => Err(format!("expected a number, got {v}")),
        }
    };
    let sweep_point = field("sweep_point")?
        .as_object()
        .ok_or("sweep_point is not an object")?
        .iter()
        .map(|(k, v)| {
            let p = match v {
                Value::Number(n) if n.is_i64() => ParamValue::Int(n.as_i64().expect("checked")),
                Value::Number(n) => ParamValue::Real(n.as_f64().ok_or("number out of range")?),
                Value::String(s) => s.parse().expect("infallible"),
                _ => return Err(format!("bad sweep value for `{k}`")),
            };
            Ok((k.clone(), p))
        })
        .collect::<Result<_, String>>()?;
    let metrics = field("metrics")?
        .as_object()
        .ok_or("metrics is not an object")?
        .iter()
        .map(|(k, v)| Ok((k.clone(), number(v)?)))
        .collect::<Result<_, String>>()?;
    Ok(RunRecord {
        config_hash: parse_hash(field("config_hash")?.as_str().ok_or("config_hash is not a string")?)?,
        sweep_point,
        metrics,
        trial_index: field("trial_index")?
            .as_u64()
            .and_then(|t| usize::try_from(t).ok())
            .ok_or("bad trial_index")?,
        toolkit_version: field("toolkit_version")?.as_str().ok_or("bad toolkit_version")?.to_string(),
    })
}
