//! Deterministic sweep execution with incremental, resumable output.
//!
//! Trial `t` draws everything from a generator seeded with
//! `derive_seed(config_hash, t)`; every sweep point of a trial restarts from
//! that seed, so points share their random numbers. Results therefore do not
//! depend on the worker count or on scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use aircomp_core::rng::{derive_seed, seeded};
use aircomp_core::AirCompError;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ExperimentConfig, ParamValue};
use crate::experiments::{run_point, Metrics};
use crate::export::{csv_header, csv_text, export_results, jsonl_text, parse_results, ExportError, Format};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config_hash: u64,
    pub sweep_point: BTreeMap<String, ParamValue>,
    pub metrics: Metrics,
    pub trial_index: usize,
    pub toolkit_version: String,
}

#[derive(Debug, Error)]
#[error("trial {trial} at {}: {source}", describe(.point))]
pub struct RunError {
    pub trial: usize,
    pub point: BTreeMap<String, ParamValue>,
    #[source]
    pub source: AirCompError,
}

fn describe(point: &BTreeMap<String, ParamValue>) -> String {
    if point.is_empty() {
        return "the only sweep point".into();
    }
    point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Error)]
pub enum RunFileError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Export {
        path: PathBuf,
        #[source]
        source: ExportError,
    },
    #[error("{path} holds results of a different config (hash {found:016x}, expected {expected:016x})")]
    ForeignResults { path: PathBuf, found: u64, expected: u64 },
    #[error("invalid worker count {0}")]
    Workers(usize),
}

/// All records of trial `trial`, one per sweep point in sweep order.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<Vec<RunRecord>, RunError> {
    let hash = config.config_hash();
    let seed = derive_seed(hash, trial as u64);
    config
        .sweep_points()
        .into_iter()
        .map(|point| {
            let params = config.resolve(&point);
            let mut rng = seeded(seed);
            match run_point(config.kind, &params, &mut rng) {
                Ok(metrics) => Ok(RunRecord {
                    config_hash: hash,
                    sweep_point: point,
                    metrics,
                    trial_index: trial,
                    toolkit_version: TOOLKIT_VERSION.to_string(),
                }),
                Err(source) => Err(RunError { trial, point, source }),
            }
        })
        .collect()
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, RunFileError> {
    if workers == 0 {
        return Err(RunFileError::Workers(workers));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|_| RunFileError::Workers(workers))
}

fn run_trials(
    config: &ExperimentConfig,
    trials: &[usize],
    pool: &rayon::ThreadPool,
) -> Result<Vec<RunRecord>, RunError> {
    let batches: Vec<Vec<RunRecord>> =
        pool.install(|| trials.par_iter().map(|&t| run_trial(config, t)).collect::<Result<_, _>>())?;
    Ok(batches.into_iter().flatten().collect())
}

/// Runs every trial in memory, records ordered by trial then sweep point.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<Vec<RunRecord>, RunFileError> {
    let pool = pool(workers)?;
    let trials: Vec<usize> = (0..config.num_trials).collect();
    Ok(run_trials(config, &trials, &pool)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub records: usize,
    pub reused_trials: usize,
    pub computed_trials: usize,
}

/// Runs the experiment into `path`, `workers` trials at a time, appending
/// each finished batch. Complete trials already present in `path` (from an
/// interrupted run of the same config) are kept and not recomputed. The
/// finished file is identical to that of an uninterrupted run.
pub fn run_to_file(
    config: &ExperimentConfig,
    path: &Path,
    format: Format,
    workers: usize,
) -> Result<RunSummary, RunFileError> {
    let pool = pool(workers)?;
    let io = |source| RunFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    let export_err = |source| RunFileError::Export {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }

    let points = config.sweep_points().len();
    let hash = config.config_hash();
    let mut kept = existing_records(path, format).map_err(|e| match e {
        Existing::Io(source) => io(source),
        Existing::Export(source) => export_err(source),
    })?;
    if let Some(r) = kept.iter().find(|r| r.config_hash != hash) {
        return Err(RunFileError::ForeignResults {
            path: path.to_path_buf(),
            found: r.config_hash,
            expected: hash,
        });
    }
    let mut per_trial: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &kept {
        *per_trial.entry(r.trial_index).or_default() += 1;
    }
    let complete: BTreeSet<usize> = per_trial
        .into_iter()
        .filter(|&(t, n)| n == points && t < config.num_trials)
        .map(|(t, _)| t)
        .collect();
    kept.retain(|r| complete.contains(&r.trial_index));
    kept.sort_by_key(|r| r.trial_index);
    let missing: Vec<usize> = (0..config.num_trials).filter(|t| !complete.contains(t)).collect();

    // Rewrite what is kept, then append batches as they finish.
    let mut header = (!kept.is_empty()).then(|| csv_header(&kept));
    let initial = match (&header, format) {
        (Some(h), Format::Csv) => csv_text(&kept, h, true).map_err(export_err)?,
        (_, Format::JsonLines) => jsonl_text(&kept),
        (None, Format::Csv) => String::new(),
    };
    fs::write(path, initial).map_err(io)?;

    let mut all = kept;
    for batch in missing.chunks(workers) {
        let records = run_trials(config, batch, &pool)?;
        let text = match format {
            Format::Csv => {
                let with_header = header.is_none();
                let h = header.get_or_insert_with(|| csv_header(&records));
                csv_text(&records, h, with_header).map_err(export_err)?
            }
            Format::JsonLines => jsonl_text(&records),
        };
        let mut file = OpenOptions::new().append(true).open(path).map_err(io)?;
        file.write_all(text.as_bytes()).map_err(io)?;
        all.extend(records);
    }

    all.sort_by_key(|r| r.trial_index);
    let canonical = export_results(&all, format).map_err(export_err)?;
    if fs::read_to_string(path).map_err(io)? != canonical {
        let tmp = path.with_extension("partial");
        fs::write(&tmp, &canonical).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)?;
    }
    Ok(RunSummary {
        records: all.len(),
        reused_trials: complete.len(),
        computed_trials: missing.len(),
    })
}

enum Existing {
    Io(std::io::Error),
    Export(ExportError),
}

fn existing_records(path: &Path, format: Format) -> Result<Vec<RunRecord>, Existing> {
    match fs::read_to_string(path) {
        Ok(text) if text.trim().is_empty() => Ok(Vec::new()),
        Ok(text) => parse_results(&text, format).map_err(Existing::Export),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(Existing::Io(e)),
    }
}
