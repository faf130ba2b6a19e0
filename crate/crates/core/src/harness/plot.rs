//! Plot data: one whitespace-delimited file per method panel plus a gnuplot
//! script that renders them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::Method;
use super::output::{csv_err, SUMMARY_FILE, SUMMARY_HEADER};
use crate::error::{Error, Result};

pub const SCRIPT_FILE: &str = "plot.gp";

/// GDA curves are read on a linear axis; PPM and AGDA span decades.
pub fn y_scale(method: Method) -> &'static str {
    match method {
        Method::Gda => "linear",
        Method::Ppm | Method::Agda => "log",
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Band {
    mean: f64,
    low: f64,
    high: f64,
}

struct Panel {
    method: Method,
    schedules: Vec<String>,
    /// epoch → schedule index → band
    rows: BTreeMap<usize, BTreeMap<usize, Band>>,
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    line: usize,
) -> Result<T> {
    let raw = rec.get(idx).ok_or_else(|| {
        Error::Parse(format!(
            "summary line {line}: missing column {}",
            SUMMARY_HEADER[idx]
        ))
    })?;
    raw.parse().map_err(|_| {
        Error::Parse(format!(
            "summary line {line}: bad {} value {raw:?}",
            SUMMARY_HEADER[idx]
        ))
    })
}

fn read_panels(summary: &Path) -> Result<Vec<Panel>> {
    let mut reader = csv::ReaderBuilder::new()
        .from_path(summary)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != SUMMARY_HEADER {
        return Err(Error::Parse(format!(
            "unexpected summary header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut panels: Vec<Panel> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = k + 2;
        let method: Method = rec[0].parse().map_err(|_| {
            Error::Parse(format!("summary line {line}: unknown method {:?}", &rec[0]))
        })?;
        let schedule = rec[1].to_string();
        let epoch: usize = parse_field(&rec, 3, line)?;
        let band = Band {
            mean: parse_field(&rec, 5, line)?,
            low: parse_field(&rec, 7, line)?,
            high: parse_field(&rec, 8, line)?,
        };
        let p = match panels.iter().position(|p| p.method == method) {
            Some(i) => i,
            None => {
                panels.push(Panel {
                    method,
                    schedules: Vec::new(),
                    rows: BTreeMap::new(),
                });
                panels.len() - 1
            }
        };
        let panel = &mut panels[p];
        let s = match panel.schedules.iter().position(|x| *x == schedule) {
            Some(i) => i,
            None => {
                panel.schedules.push(schedule);
                panel.schedules.len() - 1
            }
        };
        panel.rows.entry(epoch).or_default().insert(s, band);
    }
    if panels.is_empty() {
        return Err(Error::Parse(format!(
            "{} has no data rows",
            summary.display()
        )));
    }
    Ok(panels)
}

fn panel_file(method: Method) -> String {
    format!("panel_{}.dat", method.to_string().to_ascii_lowercase())
}

fn panel_text(p: &Panel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# panel: {}", p.method);
    let _ = writeln!(out, "# yscale: {}", y_scale(p.method));
    let mut cols = vec!["epoch".to_string()];
    for s in &p.schedules {
        cols.extend([
            format!("{s}_mean"),
            format!("{s}_ci_low"),
            format!("{s}_ci_high"),
        ]);
    }
    let _ = writeln!(out, "# columns: {}", cols.join(" "));
    for (epoch, bands) in &p.rows {
        out.push_str(&epoch.to_string());
        for s in 0..p.schedules.len() {
            match bands.get(&s) {
                Some(b) => {
                    let _ = write!(out, " {:.16e} {:.16e} {:.16e}", b.mean, b.low, b.high);
                }
                None => out.push_str(" NaN NaN NaN"),
            }
        }
        out.push('\n');
    }
    out
}

fn script_text(panels: &[Panel]) -> String {
    let mut out = String::from("set terminal pngcairo size 900,600\nset xlabel 'epoch'\nset ylabel 'relative squared distance'\nset key top right\n");
    for p in panels {
        let data = panel_file(p.method);
        let _ = writeln!(out, "\nset output '{}'", data.replace(".dat", ".png"));
        let _ = writeln!(out, "set title '{}'", p.method);
        out.push_str(if y_scale(p.method) == "log" {
            "set logscale y\n"
        } else {
            "unset logscale y\n"
        });
        let mut parts = Vec::new();
        for (i, s) in p.schedules.iter().enumerate() {
            let c = 2 + 3 * i;
            parts.push(format!(
                "'{data}' using 1:{}:{} with filledcurves fs transparent solid 0.2 lc {i} notitle",
                c + 1,
                c + 2
            ));
            parts.push(format!(
                "'{data}' using 1:{c} with lines lw 2 lc {i} title '{s}'"
            ));
        }
        let _ = writeln!(out, "plot {}", parts.join(", \\\n     "));
    }
    out
}

/// Reads `summary.csv` from `summary_dir` and writes one data file per method
/// panel plus [`SCRIPT_FILE`] into the same directory. Nothing is written when
/// the summary is malformed or empty.
pub fn emit_plot_data(summary_dir: &Path) -> Result<Vec<PathBuf>> {
    let summary = if summary_dir.is_dir() {
        summary_dir.join(SUMMARY_FILE)
    } else {
        summary_dir.to_path_buf()
    };
    let dir = summary.parent().map(Path::to_path_buf).unwrap_or_default();
    let panels = read_panels(&summary)?;
    let mut written = Vec::new();
    for p in &panels {
        let path = dir.join(panel_file(p.method));
        fs::write(&path, panel_text(p))?;
        written.push(path);
    }
    let script = dir.join(SCRIPT_FILE);
    fs::write(&script, script_text(&panels))?;
    written.push(script);
    Ok(written)
}
