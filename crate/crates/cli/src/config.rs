//! TOML run configuration.
//!
//! Every physical quantity carries its unit in the key (`_mhz`, `_us`); control
//! strengths and grid spans are given in units of γ13 and say so in their names.
//! The `[system]` table has no defaults so a forgotten rate is reported rather
//! than silently filled in. All other tables are optional.

use std::path::{Path, PathBuf};

use eitats::dynamics::{
    ProfileOptions, PulseSchedule, QuantifierMethod, QuantifierScanConfig, DEFAULT_SETTLE_FRACTION,
    THERMAL_RHO11,
};
use eitats::par::Execution;
use eitats::scan::{ratio_grid, GridSpec};
use eitats::{DetuningGrid, FitOptions, ModelFamily, Populations, ScanConfig, SystemParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub execution: Execution,
    pub system: SystemSection,
    /// Zeroth-order populations; when present the population-corrected forms are used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub populations: Option<Populations>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub spectra: SpectraSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub population_study: PopulationStudySection,
    #[serde(default)]
    pub quantifier: QuantifierSection,
}

/// The Λ system of the steady-state commands. Ωc is swept, so it is not listed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub gamma13_mhz: f64,
    pub gamma12_mhz: f64,
    pub gamma23_mhz: f64,
    pub omega_p_mhz: f64,
    pub delta_c_mhz: f64,
}

impl SystemSection {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            gamma13: self.gamma13_mhz,
            gamma12: self.gamma12_mhz,
            gamma23: self.gamma23_mhz,
            omega_p: self.omega_p_mhz,
            omega_c: 0.0,
            delta_c: self.delta_c_mhz,
        }
    }
}

impl From<SystemParams> for SystemSection {
    fn from(p: SystemParams) -> Self {
        SystemSection {
            gamma13_mhz: p.gamma13,
            gamma12_mhz: p.gamma12,
            gamma23_mhz: p.gamma23,
            omega_p_mhz: p.omega_p,
            delta_c_mhz: p.delta_c,
        }
    }
}

/// Uniform probe-detuning grid over ±`half_span_gamma13`·γ13.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub half_span_gamma13: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::default();
        GridSection {
            half_span_gamma13: g.half_span_gamma13,
            points: g.points,
        }
    }
}

impl From<GridSection> for GridSpec {
    fn from(g: GridSection) -> Self {
        GridSpec {
            half_span_gamma13: g.half_span_gamma13,
            points: g.points,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Relative paths are taken from the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// Ωc/γ13 values, either listed or as an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatioGrid {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for RatioGrid {
    fn default() -> Self {
        RatioGrid {
            values: None,
            start: 0.1,
            stop: 1.5,
            step: 0.02,
        }
    }
}

impl RatioGrid {
    fn listed(values: &[f64]) -> Self {
        RatioGrid {
            values: Some(values.to_vec()),
            ..RatioGrid::default()
        }
    }

    pub fn resolve(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let v = match &self.values {
            Some(v) => v.clone(),
            None => {
                let ok = [self.start, self.stop, self.step].iter().all(|x| x.is_finite())
                    && self.step > 0.0
                    && self.stop >= self.start;
                if !ok {
                    return Err(CliError::Config(format!(
                        "{key}: need finite start <= stop and step > 0"
                    )));
                }
                ratio_grid(self.start, self.stop, self.step)
            }
        };
        if v.is_empty() {
            return Err(CliError::Config(format!("{key}: grid is empty")));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectraSection {
    pub omega_c_over_gamma13: Vec<f64>,
}

impl Default for SpectraSection {
    fn default() -> Self {
        SpectraSection {
            omega_c_over_gamma13: vec![0.17, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub families: Vec<ModelFamily>,
    pub omega_c_over_gamma13: RatioGrid,
    /// Noisy repetitions in addition to the noiseless sweep.
    pub noise_sigmas: Vec<f64>,
    pub seed_count: u64,
    /// Noise seeds are `seed_base .. seed_base + seed_count`.
    pub seed_base: u64,
    pub per_seed_columns: bool,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            families: vec![ModelFamily::A, ModelFamily::B],
            omega_c_over_gamma13: RatioGrid::default(),
            noise_sigmas: Vec::new(),
            seed_count: 100,
            seed_base: 0,
            per_seed_columns: true,
        }
    }
}

impl ScanSection {
    pub fn seeds(&self) -> Vec<u64> {
        (self.seed_base..self.seed_base + self.seed_count).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationStudySection {
    /// ρ22/ρ11 with ρ11 + ρ22 = 1. The Ωc grid is the one of `[scan]`.
    pub ratios: Vec<f64>,
}

impl Default for PopulationStudySection {
    fn default() -> Self {
        PopulationStudySection {
            ratios: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

/// Pulsed-control experiment. Its system is independent of `[system]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantifierSection {
    pub gamma13_mhz: f64,
    pub gamma12_mhz: f64,
    pub gamma23_mhz: f64,
    pub omega_p_mhz: f64,
    pub delta_c_mhz: f64,
    pub t_start_us: f64,
    pub t_width_us: f64,
    pub t_total_us: f64,
    /// Optical depth factor in T = exp(−α·absorption).
    pub alpha: f64,
    pub omega_c_over_gamma13: RatioGrid,
    pub grid: GridSection,
    pub method: QuantifierMethod,
    pub settle_fraction: f64,
    pub rho11_i: f64,
    /// Fixed integration step; unset picks one per detuning.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_us: Option<f64>,
    /// Write every simulated trace (CSV plus JSON sidecar) under `traces/`.
    pub emit_traces: bool,
    /// Measured traces to ingest instead of simulating. Each `x.csv` needs an `x.json` sidecar.
    pub traces: Vec<PathBuf>,
}

impl Default for QuantifierSection {
    fn default() -> Self {
        let p = eitats::dynamics::pulsed_reference(0.05);
        let s = PulseSchedule::default();
        QuantifierSection {
            gamma13_mhz: p.gamma13,
            gamma12_mhz: p.gamma12,
            gamma23_mhz: p.gamma23,
            omega_p_mhz: p.omega_p,
            delta_c_mhz: p.delta_c,
            t_start_us: s.t_start,
            t_width_us: s.t_width,
            t_total_us: s.t_total,
            alpha: 1.0,
            omega_c_over_gamma13: RatioGrid::listed(&[0.23, 0.32, 0.58, 0.82]),
            grid: GridSection {
                half_span_gamma13: 4.0,
                points: 161,
            },
            method: QuantifierMethod::default(),
            settle_fraction: DEFAULT_SETTLE_FRACTION,
            rho11_i: THERMAL_RHO11,
            dt_us: None,
            emit_traces: false,
            traces: Vec::new(),
        }
    }
}

impl QuantifierSection {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            gamma13: self.gamma13_mhz,
            gamma12: self.gamma12_mhz,
            gamma23: self.gamma23_mhz,
            omega_p: self.omega_p_mhz,
            omega_c: 0.0,
            delta_c: self.delta_c_mhz,
        }
    }

    pub fn schedule(&self) -> PulseSchedule {
        PulseSchedule {
            t_start: self.t_start_us,
            t_width: self.t_width_us,
            t_total: self.t_total_us,
        }
    }
}

impl Default for RunConfig {
    /// The reference sweep system; used when no config file is given.
    fn default() -> Self {
        RunConfig {
            execution: Execution::default(),
            system: SystemParams::reference().into(),
            populations: None,
            grid: GridSection::default(),
            fit: FitOptions::default(),
            output: OutputSection::default(),
            spectra: SpectraSection::default(),
            scan: ScanSection::default(),
            population_study: PopulationStudySection::default(),
            quantifier: QuantifierSection::default(),
        }
    }
}

/// A resolved spectra run.
#[derive(Debug, Clone)]
pub struct SpectraPlan {
    pub base: SystemParams,
    pub pops: Option<Populations>,
    pub grid: DetuningGrid,
    pub ratios: Vec<f64>,
}

/// A resolved quantifier run. `traces` holds absolute paths in ingest mode.
#[derive(Debug, Clone)]
pub struct QuantifierPlan {
    pub scan: QuantifierScanConfig,
    pub emit_traces: bool,
    pub traces: Vec<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    /// Loads `path` and returns the config with its raw bytes (for hashing).
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(dir) = &cfg.output.dir {
            cfg.output.dir = Some(base.join(dir));
        }
        cfg.quantifier.traces = cfg.quantifier.traces.iter().map(|t| base.join(t)).collect();
        Ok((cfg, bytes))
    }

    /// Applies `--seed`: the fit seed and the first noise seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.fit.seed = seed;
        self.scan.seed_base = seed;
    }

    fn base(&self) -> Result<SystemParams, CliError> {
        let p = self.system.params();
        p.validate().map_err(config_err)?;
        if let Some(pops) = &self.populations {
            pops.validate().map_err(config_err)?;
        }
        Ok(p)
    }

    fn fit_options(&self) -> Result<FitOptions, CliError> {
        let f = &self.fit;
        let (lo, hi) = f.perturbation;
        if f.starts == 0 || f.max_iterations == 0 {
            return Err(CliError::Config("fit.starts and fit.max_iterations must be >= 1".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return Err(CliError::Config("fit.perturbation must satisfy 0 < lo <= hi".into()));
        }
        Ok(f.clone())
    }

    pub fn spectra_plan(&self) -> Result<SpectraPlan, CliError> {
        let base = self.base()?;
        let grid = GridSpec::from(self.grid).build(base.gamma13).map_err(config_err)?;
        let ratios = self.spectra.omega_c_over_gamma13.clone();
        if ratios.is_empty() {
            return Err(CliError::Config("spectra.omega_c_over_gamma13: list is empty".into()));
        }
        if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(CliError::Config(
                "spectra.omega_c_over_gamma13: values must be finite and >= 0".into(),
            ));
        }
        Ok(SpectraPlan {
            base,
            pops: self.populations,
            grid,
            ratios,
        })
    }

    fn scan_template(&self, family: ModelFamily) -> Result<ScanConfig, CliError> {
        let cfg = ScanConfig {
            base: self.base()?,
            pops: self.populations,
            omega_c_grid: self.scan.omega_c_over_gamma13.resolve("scan.omega_c_over_gamma13")?,
            family,
            noise_sigma: 0.0,
            seeds: vec![0],
            grid: self.grid.into(),
            fit: self.fit_options()?,
            execution: self.execution,
        };
        cfg.grid.build(cfg.base.gamma13).map_err(config_err)?;
        cfg.validate().map_err(config_err)?;
        Ok(cfg)
    }

    /// One config per family and noise level, the noiseless sweep first.
    pub fn scan_plan(&self) -> Result<Vec<ScanConfig>, CliError> {
        if self.scan.families.is_empty() {
            return Err(CliError::Config("scan.families: list is empty".into()));
        }
        if self.scan.noise_sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(CliError::Config("scan.noise_sigmas: values must be finite and > 0".into()));
        }
        if !self.scan.noise_sigmas.is_empty() && self.scan.seed_count == 0 {
            return Err(CliError::Config("scan.seed_count: noisy scans need at least one seed".into()));
        }
        let mut plan = Vec::new();
        for &family in &self.scan.families {
            let template = self.scan_template(family)?;
            plan.push(template.clone());
            for &sigma in &self.scan.noise_sigmas {
                plan.push(ScanConfig {
                    noise_sigma: sigma,
                    seeds: self.scan.seeds(),
                    ..template.clone()
                });
            }
        }
        Ok(plan)
    }

    pub fn population_plan(&self) -> Result<(ScanConfig, Vec<f64>), CliError> {
        if self.populations.is_some() {
            return Err(CliError::Config(
                "population-study sets the populations itself; remove [populations]".into(),
            ));
        }
        let ratios = self.population_study.ratios.clone();
        if ratios.is_empty() {
            return Err(CliError::Config("population_study.ratios: list is empty".into()));
        }
        if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(CliError::Config(format!(
                "population_study.ratios: {r} outside [0, 1]"
            )));
        }
        Ok((self.scan_template(ModelFamily::B)?, ratios))
    }

    pub fn quantifier_plan(&self) -> Result<QuantifierPlan, CliError> {
        let q = &self.quantifier;
        let base = q.params();
        if !(q.settle_fraction.is_finite() && (0.0..0.8).contains(&q.settle_fraction)) {
            return Err(CliError::Config("quantifier.settle_fraction must lie in [0, 0.8)".into()));
        }
        if !(q.rho11_i.is_finite() && q.rho11_i > 0.0 && q.rho11_i <= 1.0) {
            return Err(CliError::Config("quantifier.rho11_i must lie in (0, 1]".into()));
        }
        if let Some(dt) = q.dt_us {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(CliError::Config("quantifier.dt_us must be finite and > 0".into()));
            }
        }
        let ingest = !q.traces.is_empty();
        if ingest && q.method == QuantifierMethod::CoherenceModulus {
            return Err(CliError::Config(
                "quantifier.method = \"coherence_modulus\" needs simulated traces".into(),
            ));
        }
        if ingest && q.emit_traces {
            return Err(CliError::Config("quantifier.emit_traces cannot be combined with traces".into()));
        }
        let scan = QuantifierScanConfig {
            base,
            schedule: q.schedule(),
            alpha: q.alpha,
            omega_c_grid: if ingest {
                Vec::new()
            } else {
                q.omega_c_over_gamma13.resolve("quantifier.omega_c_over_gamma13")?
            },
            grid: q.grid.into(),
            profile: ProfileOptions {
                method: q.method,
                settle_fraction: q.settle_fraction,
                rho11_i: q.rho11_i,
                dt: q.dt_us,
                execution: self.execution,
            },
            fit: self.fit_options()?,
            execution: self.execution,
        };
        if ingest {
            base.validate().map_err(config_err)?;
        } else {
            scan.validate().map_err(config_err)?;
            scan.grid.build(base.gamma13).map_err(config_err)?;
            if let Some(dt) = q.dt_us {
                let top = scan.omega_c_grid.last().copied().unwrap_or(0.0);
                let limit = eitats::dynamics::max_dt(&base.with_omega_c_ratio(top));
                if dt > limit {
                    return Err(CliError::Config(format!(
                        "quantifier.dt_us = {dt} exceeds the stable step {limit:.3e} µs"
                    )));
                }
            }
        }
        Ok(QuantifierPlan {
            scan,
            emit_traces: q.emit_traces,
            traces: q.traces.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[system]
gamma13_mhz = 3.0
gamma12_mhz = 0.01
gamma23_mhz = 3.0
omega_p_mhz = 0.03
delta_c_mhz = 0.0
";

    #[test]
    fn minimal_config_matches_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn missing_rate_is_named() {
        let text = MINIMAL.replace("gamma13_mhz = 3.0\n", "");
        match RunConfig::parse(&text) {
            Err(CliError::Config(msg)) => assert!(msg.contains("gamma13_mhz"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unitless_key_is_rejected() {
        let text = MINIMAL.replace("gamma13_mhz", "gamma13");
        assert!(matches!(RunConfig::parse(&text), Err(CliError::Config(_))));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.scan.noise_sigmas = vec![0.1];
        cfg.populations = Some(Populations::ground());
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn empty_grid_and_bad_ratio_are_config_errors() {
        let mut cfg = RunConfig::default();
        cfg.scan.omega_c_over_gamma13.values = Some(Vec::new());
        assert!(matches!(cfg.scan_plan(), Err(CliError::Config(_))));

        let mut cfg = RunConfig::default();
        cfg.population_study.ratios = vec![0.0, 1.5];
        assert!(matches!(cfg.population_plan(), Err(CliError::Config(_))));
    }

    #[test]
    fn scan_plan_orders_noiseless_first() {
        let mut cfg = RunConfig::default();
        cfg.scan.noise_sigmas = vec![0.01, 0.5];
        cfg.scan.seed_count = 3;
        cfg.scan.seed_base = 7;
        let plan = cfg.scan_plan().unwrap();
        let shape: Vec<_> = plan.iter().map(|c| (c.family, c.noise_sigma)).collect();
        assert_eq!(
            shape,
            [
                (ModelFamily::A, 0.0),
                (ModelFamily::A, 0.01),
                (ModelFamily::A, 0.5),
                (ModelFamily::B, 0.0),
                (ModelFamily::B, 0.01),
                (ModelFamily::B, 0.5)
            ]
        );
        assert_eq!(plan[1].seeds, [7, 8, 9]);
        assert_eq!(plan[0].omega_c_grid.len(), 71);
    }

    #[test]
    fn reversed_range_is_rejected() {
        let g = RatioGrid {
            values: None,
            start: 1.0,
            stop: 0.5,
            step: 0.1,
        };
        assert!(g.resolve("x").is_err());
    }
}
