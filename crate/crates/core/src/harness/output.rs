//! CSV and manifest writers.
//!
//! Reals are written in scientific notation with 17 significant digits so
//! every value round-trips exactly; rows end in `\n`.

use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::{ExperimentOutput, RunRow, SummaryRow, Timing};
use crate::error::Result;

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Wall-clock times live apart from `runs.csv`, which must be reproducible.
pub const TIMINGS_FILE: &str = "timings.csv";
pub const FILES: [&str; 4] = [RUNS_FILE, SUMMARY_FILE, MANIFEST_FILE, TIMINGS_FILE];

pub const RUNS_HEADER: [&str; 9] = [
    "instance",
    "method",
    "schedule",
    "gamma",
    "seed",
    "epoch",
    "rel_sq_dist",
    "v_lambda",
    "diverged",
];
pub const SUMMARY_HEADER: [&str; 10] = [
    "method",
    "schedule",
    "gamma",
    "epoch",
    "runs",
    "mean",
    "std",
    "ci_low",
    "ci_high",
    "v_lambda_mean",
];

pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Parse(format!("{other:?}")),
    }
}

fn run_fields(r: &RunRow) -> [String; 9] {
    [
        r.instance.to_string(),
        r.method.to_string(),
        r.schedule.to_string(),
        real(r.gamma),
        r.seed.to_string(),
        r.epoch.to_string(),
        opt_real(r.rel_sq_dist),
        opt_real(r.v_lambda),
        u8::from(r.diverged).to_string(),
    ]
}

fn summary_fields(r: &SummaryRow) -> [String; 10] {
    [
        r.method.to_string(),
        r.schedule.to_string(),
        real(r.gamma),
        r.epoch.to_string(),
        r.runs.to_string(),
        real(r.mean),
        real(r.std),
        real(r.ci_low),
        real(r.ci_high),
        opt_real(r.v_lambda_mean),
    ]
}

fn timing_fields(t: &Timing) -> [String; 6] {
    [
        t.instance.to_string(),
        t.method.to_string(),
        t.schedule.to_string(),
        real(t.gamma),
        t.seed.to_string(),
        format!("{:.3}", t.wall_millis),
    ]
}

fn write_table<const N: usize, T>(
    path: &Path,
    header: &[&str],
    rows: &[T],
    fields: fn(&T) -> [String; N],
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(fields(r)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every output file into `dir` (created if missing) and returns the paths.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let runs = dir.join(RUNS_FILE);
    write_table(&runs, &RUNS_HEADER, &out.rows, run_fields)?;
    let summary = dir.join(SUMMARY_FILE);
    write_table(&summary, &SUMMARY_HEADER, &out.summary, summary_fields)?;
    let timings = dir.join(TIMINGS_FILE);
    write_table(
        &timings,
        &[
            "instance",
            "method",
            "schedule",
            "gamma",
            "seed",
            "wall_millis",
        ],
        &out.timings,
        timing_fields,
    )?;
    let manifest = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&out.manifest)?;
    text.push('\n');
    fs::write(&manifest, text)?;
    Ok(vec![runs, summary, manifest, timings])
}
