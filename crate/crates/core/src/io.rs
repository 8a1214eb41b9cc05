//! CSV/JSON serialisation and atomic file output.
//!
//! Numbers are written with 17 significant digits so that every value
//! round-trips exactly; lines end in LF.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::{TraceSidecar, TransientTrace};
use crate::error::{Error, Result};
use crate::scan::{PopulationRow, ScanResult};
use crate::spectra::{ComplexSpectrum, RealSpectrum, SpectrumKind};

/// Formats `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn real_spectrum_csv(s: &RealSpectrum) -> String {
    let mut out = String::from("delta_mhz,value\n");
    for (d, v) in s.delta.iter().zip(&s.values) {
        let _ = writeln!(out, "{},{}", fmt_f64(*d), fmt_f64(*v));
    }
    out
}

pub fn complex_spectrum_csv(s: &ComplexSpectrum) -> String {
    let mut out = String::from("delta_mhz,re,im\n");
    for (d, v) in s.delta.iter().zip(&s.values) {
        let _ = writeln!(out, "{},{},{}", fmt_f64(*d), fmt_f64(v.re), fmt_f64(v.im));
    }
    out
}

fn parse_rows(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Schema(format!(
            "expected header `{}`, found `{}`",
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("cannot parse `{f}` as a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_real_spectrum_csv(text: &str, kind: SpectrumKind) -> Result<RealSpectrum> {
    let rows = parse_rows(text, &["delta_mhz", "value"])?;
    let (delta, values) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    RealSpectrum::unchecked_sign(delta, values, kind)
}

pub fn parse_complex_spectrum_csv(text: &str) -> Result<ComplexSpectrum> {
    let rows = parse_rows(text, &["delta_mhz", "re", "im"])?;
    let (delta, values) = rows
        .into_iter()
        .map(|r| (r[0], Complex64::new(r[1], r[2])))
        .unzip();
    ComplexSpectrum::new(delta, values)
}

/// `time_us,transmission` table readable by [`crate::dynamics::parse_trace`].
pub fn trace_csv(t: &TransientTrace) -> String {
    let mut out = String::from("time_us,transmission\n");
    for (time, v) in t.times.iter().zip(&t.transmission) {
        let _ = writeln!(out, "{},{}", fmt_f64(*time), fmt_f64(*v));
    }
    out
}

/// JSON sidecar paired with [`trace_csv`].
pub fn trace_sidecar_json(t: &TransientTrace) -> Result<String> {
    to_json(&TraceSidecar::from(t))
}

/// One row per grid point; with `per_seed`, adds `w_eit_seed<s>,w_ats_seed<s>` per seed.
pub fn sweep_csv(result: &ScanResult, per_seed: bool) -> String {
    let mut out = String::from("omega_c_over_gamma13,w_eit,w_ats,wbar_eit,wbar_ats");
    let seeds: Vec<u64> = match (per_seed, result.rows.first()) {
        (true, Some(r)) => r.per_seed.iter().map(|s| s.seed).collect(),
        _ => Vec::new(),
    };
    for s in &seeds {
        let _ = write!(out, ",w_eit_seed{s},w_ats_seed{s}");
    }
    out.push('\n');
    for r in &result.rows {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.omega_c_over_gamma13),
            fmt_f64(r.w_eit),
            fmt_f64(r.w_ats),
            fmt_f64(r.wbar_eit),
            fmt_f64(r.wbar_ats)
        );
        if !seeds.is_empty() {
            for s in &r.per_seed {
                let _ = write!(out, ",{},{}", fmt_f64(s.w_eit), fmt_f64(s.w_ats));
            }
        }
        out.push('\n');
    }
    out
}

/// `ratio,transition_a,transition_b`; a missing transition is an empty field.
pub fn population_csv(rows: &[PopulationRow]) -> String {
    let mut out = String::from("ratio,transition_a,transition_b\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f64(r.ratio),
            fmt_opt(r.transition_a),
            fmt_opt(r.transition_b)
        );
    }
    out
}

/// A named (x, y) series for plot-data output.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, xs: &[f64], ys: &[f64]) -> Self {
        Series {
            name: name.into(),
            points: xs.iter().copied().zip(ys.iter().copied()).collect(),
        }
    }
}

/// Tidy `x,y,series` table.
pub fn plot_csv(series: &[Series]) -> Result<String> {
    let mut out = String::from("x,y,series\n");
    for s in series {
        if s.name.contains([',', '"', '\n', '\r']) {
            return Err(Error::invalid("series", format!("name `{}` must not contain CSV delimiters", s.name)));
        }
        for (x, y) in &s.points {
            let _ = writeln!(out, "{},{},{}", fmt_f64(*x), fmt_f64(*y), s.name);
        }
    }
    Ok(out)
}

/// Pretty JSON followed by a newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("path", format!("`{}` has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(Error::from)
}
