//! The four subcommands. Each returns its files in memory; [`crate::execute`]
//! writes them out and indexes them in the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use eitats::dynamics::{
    parse_trace, profile_from_traces, quantifier_scan, scan_profiles, sidecar_path_for, simulate,
    default_dt, ObeSettings, QuantifierMethod, QuantifierPoint, QuantifierScan,
    QuantifierScanConfig, TransientTrace,
};
use eitats::io::{self, fmt_f64, Series};
use eitats::par;
use eitats::scan::{population_study, run_scan, PopulationRow, ScanResult};
use eitats::spectra::synthesize_spectrum;
use eitats::{ComparisonResult, ModelFamily, ScanConfig, SpectrumKind};
use serde::Serialize;

use crate::config::{QuantifierPlan, RunConfig};
use crate::error::CliError;
use crate::manifest::sha256_hex;

pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: Vec<u8>,
}

#[derive(Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub plot: Vec<Series>,
    /// Input file path → SHA-256 of files read besides the config.
    pub inputs: BTreeMap<String, String>,
    pub noise_seeds: Vec<u64>,
}

impl Outcome {
    fn add(&mut self, path: impl Into<String>, text: String) {
        self.artifacts.push(Artifact {
            path: path.into(),
            bytes: text.into_bytes(),
        });
    }
}

/// Shortest round-trip decimal, used in file and series names.
fn tag(x: f64) -> String {
    format!("{x}")
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

pub fn spectra(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let plan = cfg.spectra_plan()?;
    let mut out = Outcome::default();
    for &ratio in &plan.ratios {
        let p = plan.base.with_omega_c_ratio(ratio);
        for (kind, stem) in [
            (SpectrumKind::ImRho13, "im_rho13"),
            (SpectrumKind::AbsRho12, "abs_rho12"),
        ] {
            let s = synthesize_spectrum(&p, plan.pops.as_ref(), &plan.grid, kind)?;
            out.add(format!("{stem}_omega_c_{}.csv", tag(ratio)), io::real_spectrum_csv(&s));
            out.plot
                .push(Series::new(format!("{stem}@{}", tag(ratio)), &s.delta, &s.values));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct SeedTransition {
    seed: u64,
    transition: Option<f64>,
}

#[derive(Serialize)]
struct ScanRunSummary<'a> {
    family: ModelFamily,
    noise_sigma: f64,
    weights_csv: String,
    transition: Option<f64>,
    per_point_transition: Option<f64>,
    median_seed_transition: Option<f64>,
    seeds_without_transition: usize,
    per_seed_transitions: Vec<SeedTransition>,
    config: &'a ScanConfig,
}

#[derive(Serialize)]
struct ScanSummary<'a> {
    /// Noiseless transition per family.
    transitions: BTreeMap<String, Option<f64>>,
    runs: Vec<ScanRunSummary<'a>>,
}

fn weight_series(prefix: &str, r: &ScanResult) -> Vec<Series> {
    let x = r.omega_c_grid();
    let col = |f: fn(&eitats::scan::ScanRow) -> f64| r.rows.iter().map(f).collect::<Vec<_>>();
    vec![
        Series::new(format!("{prefix}w_eit"), &x, &col(|row| row.w_eit)),
        Series::new(format!("{prefix}w_ats"), &x, &col(|row| row.w_ats)),
        Series::new(format!("{prefix}wbar_eit"), &x, &col(|row| row.wbar_eit)),
        Series::new(format!("{prefix}wbar_ats"), &x, &col(|row| row.wbar_ats)),
    ]
}

pub fn scan(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let plan = cfg.scan_plan()?;
    let mut out = Outcome::default();
    if !cfg.scan.noise_sigmas.is_empty() {
        out.noise_seeds = cfg.scan.seeds();
    }
    let mut runs = Vec::with_capacity(plan.len());
    let mut transitions = BTreeMap::new();
    for c in &plan {
        let r = run_scan(c)?;
        let name = format!("weights_{}_sigma_{}.csv", c.family, tag(c.noise_sigma));
        let noisy = c.noise_sigma > 0.0;
        out.add(name.clone(), io::sweep_csv(&r, noisy && cfg.scan.per_seed_columns));
        out.plot
            .extend(weight_series(&format!("{}:sigma={}:", c.family, tag(c.noise_sigma)), &r));
        if !noisy {
            transitions.insert(c.family.to_string(), r.transition);
        }
        let per_seed = r.per_seed_transitions();
        runs.push(ScanRunSummary {
            family: c.family,
            noise_sigma: c.noise_sigma,
            weights_csv: name,
            transition: r.transition,
            per_point_transition: r.per_point_transition(),
            median_seed_transition: median(per_seed.iter().filter_map(|s| s.1).collect()),
            seeds_without_transition: per_seed.iter().filter(|s| s.1.is_none()).count(),
            per_seed_transitions: per_seed
                .into_iter()
                .map(|(seed, transition)| SeedTransition { seed, transition })
                .collect(),
            config: c,
        });
    }
    out.add("scan_summary.json", io::to_json(&ScanSummary { transitions, runs })?);
    Ok(out)
}

#[derive(Serialize)]
struct PopulationSummary<'a> {
    rows: &'a [PopulationRow],
    config: &'a ScanConfig,
}

pub fn population_study_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (template, ratios) = cfg.population_plan()?;
    let rows = population_study(&template, &ratios)?;
    let mut out = Outcome::default();
    out.add("population_study.csv", io::population_csv(&rows));
    out.add(
        "population_study.json",
        io::to_json(&PopulationSummary {
            rows: &rows,
            config: &template,
        })?,
    );
    for (name, pick) in [
        ("transition_a", (|r: &PopulationRow| r.transition_a) as fn(&PopulationRow) -> Option<f64>),
        ("transition_b", |r: &PopulationRow| r.transition_b),
    ] {
        out.plot.push(Series {
            name: name.to_string(),
            points: rows.iter().filter_map(|r| pick(r).map(|t| (r.ratio, t))).collect(),
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct LevelRow {
    delta_mhz: f64,
    h_i: f64,
    h_s: f64,
    h_f: f64,
}

#[derive(Serialize)]
struct QuantifierFit<'a> {
    omega_c_over_gamma13: f64,
    control_off: bool,
    comparison: &'a ComparisonResult,
    levels: Vec<LevelRow>,
}

#[derive(Serialize)]
struct QuantifierPointSummary {
    omega_c_over_gamma13: f64,
    w_eit: f64,
    w_ats: f64,
    wbar_eit: f64,
    wbar_ats: f64,
    profile_csv: String,
    fit_csv: String,
    fit_json: String,
}

#[derive(Serialize)]
struct QuantifierSummary<'a> {
    mode: &'static str,
    method: QuantifierMethod,
    transition: Option<f64>,
    per_point_transition: Option<f64>,
    points: Vec<QuantifierPointSummary>,
    config: &'a QuantifierScanConfig,
}

/// `delta_mhz,fit_eit,fit_ats`: both fitted lineshapes on the profile's grid.
fn fit_curves_csv(pt: &QuantifierPoint) -> String {
    let c = &pt.comparison;
    let mut out = String::from("delta_mhz,fit_eit,fit_ats\n");
    for d in &pt.profile.spectrum.delta {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f64(*d),
            fmt_f64(c.eit.model.eval(*d)),
            fmt_f64(c.ats.model.eval(*d))
        );
    }
    out
}

fn write_quantifier(
    out: &mut Outcome,
    qs: &QuantifierScan,
    cfg: &QuantifierScanConfig,
    mode: &'static str,
) -> Result<(), CliError> {
    let mut points = Vec::with_capacity(qs.points.len());
    for (row, pt) in qs.scan.rows.iter().zip(&qs.points) {
        let r = row.omega_c_over_gamma13;
        let profile_name = format!("quantifier_c_omega_c_{}.csv", tag(r));
        let curves_name = format!("quantifier_fit_omega_c_{}.csv", tag(r));
        let fit_name = format!("quantifier_fit_omega_c_{}.json", tag(r));
        out.add(profile_name.clone(), io::real_spectrum_csv(&pt.profile.spectrum));
        out.add(curves_name.clone(), fit_curves_csv(pt));
        let s = &pt.profile.spectrum;
        let fit = QuantifierFit {
            omega_c_over_gamma13: r,
            control_off: pt.profile.control_off,
            comparison: &pt.comparison,
            levels: s
                .delta
                .iter()
                .zip(&pt.profile.levels)
                .map(|(&d, lv)| LevelRow {
                    delta_mhz: d,
                    h_i: lv.h_i,
                    h_s: lv.h_s,
                    h_f: lv.h_f,
                })
                .collect(),
        };
        out.add(fit_name.clone(), io::to_json(&fit)?);
        out.plot.push(Series::new(format!("c@{}", tag(r)), &s.delta, &s.values));
        for (label, model) in [("fit_eit", &pt.comparison.eit.model), ("fit_ats", &pt.comparison.ats.model)] {
            let ys: Vec<f64> = s.delta.iter().map(|&d| model.eval(d)).collect();
            out.plot.push(Series::new(format!("{label}@{}", tag(r)), &s.delta, &ys));
        }
        points.push(QuantifierPointSummary {
            omega_c_over_gamma13: r,
            w_eit: row.w_eit,
            w_ats: row.w_ats,
            wbar_eit: row.wbar_eit,
            wbar_ats: row.wbar_ats,
            profile_csv: profile_name,
            fit_csv: curves_name,
            fit_json: fit_name,
        });
    }
    out.add("quantifier_weights.csv", io::sweep_csv(&qs.scan, false));
    out.plot.extend(weight_series("quantifier:", &qs.scan));
    let summary = QuantifierSummary {
        mode,
        method: cfg.profile.method,
        transition: qs.scan.transition,
        per_point_transition: qs.scan.per_point_transition(),
        points,
        config: cfg,
    };
    out.add("quantifier_summary.json", io::to_json(&summary)?);
    Ok(())
}

/// Re-runs each transient of the sweep and stores it in the ingest format.
fn emit_traces(out: &mut Outcome, cfg: &QuantifierScanConfig) -> Result<(), CliError> {
    let grid = cfg.grid.build(cfg.base.gamma13)?;
    for &ratio in &cfg.omega_c_grid {
        let p = cfg.base.with_omega_c_ratio(ratio);
        let traces = par::try_map(cfg.execution, grid.points(), |_, &d| {
            let settings = ObeSettings {
                dt: cfg.profile.dt.unwrap_or_else(|| default_dt(&p, d)),
                alpha: cfg.alpha,
                rho11_i: cfg.profile.rho11_i,
            };
            simulate(&p, &cfg.schedule, d, &settings).map(|s| s.trace)
        })?;
        for (j, t) in traces.iter().enumerate() {
            let stem = format!("traces/omega_c_{}/delta_{j:04}", tag(ratio));
            out.add(format!("{stem}.csv"), io::trace_csv(t));
            out.add(format!("{stem}.json"), io::trace_sidecar_json(t)?);
        }
    }
    Ok(())
}

fn read_input(out: &mut Outcome, path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    out.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
    String::from_utf8(bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Ωc/γ13 of an ingested trace, rounded like configured grids so names match.
fn ingested_ratio(t: &TransientTrace, gamma13: f64) -> f64 {
    (t.omega_c / gamma13 * 1e12).round() / 1e12
}

fn ingest(out: &mut Outcome, plan: &QuantifierPlan) -> Result<QuantifierScan, CliError> {
    let cfg = &plan.scan;
    let mut traces = Vec::with_capacity(plan.traces.len());
    for path in &plan.traces {
        let csv = read_input(out, path)?;
        let sidecar = read_input(out, &sidecar_path_for(path))?;
        let t = parse_trace(&csv, &sidecar)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        traces.push(t);
    }
    let gamma13 = cfg.base.gamma13;
    traces.sort_by(|a, b| {
        ingested_ratio(a, gamma13)
            .total_cmp(&ingested_ratio(b, gamma13))
            .then(a.delta.total_cmp(&b.delta))
    });
    let mut grid = Vec::new();
    let mut profiles = Vec::new();
    for group in traces.chunk_by(|a, b| ingested_ratio(a, gamma13) == ingested_ratio(b, gamma13)) {
        let ratio = ingested_ratio(&group[0], gamma13);
        if ratio <= 0.0 {
            return Err(CliError::Input(
                "traces with omega_c_mhz <= 0 carry no quantifier".into(),
            ));
        }
        let profile = profile_from_traces(group, cfg.profile.settle_fraction, cfg.profile.rho11_i)
            .map_err(|e| CliError::Input(format!("traces at omega_c/gamma13 = {ratio}: {e}")))?;
        grid.push(ratio);
        profiles.push(profile);
    }
    Ok(scan_profiles(&grid, profiles, &cfg.fit, cfg.execution)?)
}

pub fn quantifier_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let plan = cfg.quantifier_plan()?;
    let mut out = Outcome::default();
    if plan.traces.is_empty() {
        let qs = quantifier_scan(&plan.scan)?;
        write_quantifier(&mut out, &qs, &plan.scan, "simulated")?;
        if plan.emit_traces {
            emit_traces(&mut out, &plan.scan)?;
        }
    } else {
        let qs = ingest(&mut out, &plan)?;
        let mut echo = plan.scan.clone();
        echo.omega_c_grid = qs.scan.omega_c_grid();
        write_quantifier(&mut out, &qs, &echo, "ingested")?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_handles_even_and_empty() {
        assert_eq!(median(vec![]), None);
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn tags_are_shortest_decimal() {
        assert_eq!(tag(0.17), "0.17");
        assert_eq!(tag(1.0), "1");
        assert_eq!(tag(0.0), "0");
    }
}
