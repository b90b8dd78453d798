//! CSV and JSON artifacts.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! re-read trace is bit-identical. Every file goes through a temporary file
//! in the target directory and is renamed into place, so an interrupted run
//! never leaves a truncated artifact behind.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::engine::{LoopConfig, Metrics, RunResult};
use crate::error::{Error, Result};
use crate::signals::SignalTrace;
use crate::tuning::{TuneResult, TuneSpec};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| Error::Io {
            path: "<buffer>".into(),
            source: e.into_error(),
        })
}

/// Single trace as `t,<label>`.
pub fn write_trace_csv(path: &Path, trace: &SignalTrace) -> Result<()> {
    let label = if trace.label.is_empty() { "value" } else { &trace.label };
    let bytes = csv_bytes(
        &["t", label],
        trace
            .samples
            .iter()
            .enumerate()
            .map(|(i, &v)| vec![trace.time(i), v]),
    )?;
    write_atomic(path, &bytes)
}

/// Named columns of a CSV, in file order.
pub type Columns = Vec<(String, Vec<f64>)>;

/// Reads a CSV whose first column is time. Returns the sample interval and
/// the remaining columns by header.
pub fn read_csv_columns(path: &Path) -> Result<(f64, Columns)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => Error::Configuration(format!("{}: {other:?}", path.display())),
    })?;
    let headers: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if headers.len() < 2 || headers[0] != "t" {
        return Err(Error::Configuration(format!(
            "{}: expected a leading `t` column and at least one signal",
            path.display()
        )));
    }
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (c, field) in rec.iter().enumerate().take(headers.len()) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Configuration(format!(
                    "{}: row {}: `{field}` is not a number",
                    path.display(),
                    line + 2
                ))
            })?;
            cols[c].push(v);
        }
    }
    let t = &cols[0];
    if t.len() < 2 {
        return Err(Error::DegenerateSignal(format!(
            "{}: fewer than two samples",
            path.display()
        )));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    let named = headers.into_iter().zip(cols).skip(1).collect();
    Ok((dt, named))
}

/// Reads one column of a time-indexed CSV as a trace.
pub fn read_trace_csv(path: &Path, column: Option<&str>) -> Result<SignalTrace> {
    let (dt, cols) = read_csv_columns(path)?;
    let (name, samples) = match column {
        None => cols.into_iter().next().expect("at least one signal column"),
        Some(c) => cols.into_iter().find(|(h, _)| h == c).ok_or_else(|| {
            Error::Configuration(format!("{}: no column `{c}`", path.display()))
        })?,
    };
    SignalTrace::new(samples, dt, name)
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a LoopConfig,
    tool: &'static str,
    version: &'static str,
    timestamp_unix: u64,
    metrics: &'a Metrics,
    warnings: &'a [String],
    clamp_events: u64,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Manifest JSON for a run: configuration, tool version, timestamp, metrics.
pub fn manifest_json(result: &RunResult, timestamp_unix: u64) -> Result<String> {
    let m = Manifest {
        config: &result.config,
        tool: "hystloop",
        version: env!("CARGO_PKG_VERSION"),
        timestamp_unix,
        metrics: &result.metrics,
        warnings: &result.warnings,
        clamp_events: result.clamp_events,
    };
    Ok(serde_json::to_string_pretty(&m)?)
}

/// Writes `<name>_traces.csv`, `<name>_loop.csv` and `<name>_manifest.json`
/// into `dir`. Returns the written paths.
pub fn write_run(dir: &Path, name: &str, result: &RunResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let tr = &result.traces;
    let mut written = Vec::new();

    let path = dir.join(format!("{name}_traces.csv"));
    let bytes = csv_bytes(
        &["t", "ref", "u", "vB", "B"],
        (0..tr.len()).map(|i| {
            vec![
                tr.reference.time(i),
                tr.reference.samples[i],
                tr.u.samples[i],
                tr.v_b.samples[i],
                tr.b.samples[i],
            ]
        }),
    )?;
    write_atomic(&path, &bytes)?;
    written.push(path);

    // JA plants: the B(H) loop; others: output against drive
    let (x, header) = match &tr.h {
        Some(h) => (h, ["H", "B"]),
        None => (&tr.u, ["u", "vB"]),
    };
    let path = dir.join(format!("{name}_loop.csv"));
    let bytes = csv_bytes(
        &header,
        x.samples
            .iter()
            .zip(&tr.v_b.samples)
            .map(|(&x, &y)| vec![x, y]),
    )?;
    write_atomic(&path, &bytes)?;
    written.push(path);

    let path = dir.join(format!("{name}_manifest.json"));
    write_atomic(&path, manifest_json(result, now_unix())?.as_bytes())?;
    written.push(path);
    Ok(written)
}

#[derive(Serialize)]
struct TuneSummary<'a> {
    tool: &'static str,
    version: &'static str,
    timestamp_unix: u64,
    spec: &'a TuneSpec,
    best_params: &'a crate::controller::CtrlParams,
    best_score: f64,
    evaluations: usize,
}

/// Writes `<name>_tune.json` and `<name>_tune_history.csv`.
pub fn write_tune(dir: &Path, name: &str, spec: &TuneSpec, result: &TuneResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let summary = TuneSummary {
        tool: "hystloop",
        version: env!("CARGO_PKG_VERSION"),
        timestamp_unix: now_unix(),
        spec,
        best_params: &result.best_params,
        best_score: result.best_score,
        evaluations: result.evaluations,
    };
    let json_path = dir.join(format!("{name}_tune.json"));
    write_atomic(&json_path, serde_json::to_string_pretty(&summary)?.as_bytes())?;

    let mut header = vec!["eval"];
    header.extend(spec.search_space.iter().map(|d| d.param.name()));
    header.push("score");
    let bytes = csv_bytes(
        &header,
        result.history.iter().enumerate().map(|(i, e)| {
            let mut row = vec![i as f64];
            row.extend(&e.point);
            row.push(e.score);
            row
        }),
    )?;
    let csv_path = dir.join(format!("{name}_tune_history.csv"));
    write_atomic(&csv_path, &bytes)?;
    Ok(vec![json_path, csv_path])
}
