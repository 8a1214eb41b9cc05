//! Control-field sweeps and location of the EIT→ATS transition.
//!
//! Every (Ωc-index, seed) pair is an independent work item with its own PRNG
//! streams derived by [`mix_seed`], so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{compare, mix_seed, ComparisonResult, FitOptions, ModelFamily};
use crate::par::{self, Execution};
use crate::spectra::{synthesize_spectrum, DetuningGrid, Populations, RealSpectrum, SystemParams};

/// Uniform detuning grid expressed in units of γ13.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// The grid covers ±`half_span_gamma13`·γ13.
    pub half_span_gamma13: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            half_span_gamma13: 5.0,
            points: 2001,
        }
    }
}

impl GridSpec {
    pub fn build(&self, gamma13: f64) -> Result<DetuningGrid> {
        let h = self.half_span_gamma13 * gamma13;
        DetuningGrid::uniform(-h, h, self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub base: SystemParams,
    pub pops: Option<Populations>,
    /// Control strengths as Ωc/γ13.
    pub omega_c_grid: Vec<f64>,
    pub family: ModelFamily,
    pub noise_sigma: f64,
    pub seeds: Vec<u64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub execution: Execution,
}

impl ScanConfig {
    /// Noiseless sweep of the reference system over `omega_c_grid`.
    pub fn reference(family: ModelFamily, omega_c_grid: Vec<f64>) -> Self {
        ScanConfig {
            base: SystemParams::reference(),
            pops: None,
            omega_c_grid,
            family,
            noise_sigma: 0.0,
            seeds: vec![0],
            grid: GridSpec::default(),
            fit: FitOptions::default(),
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if let Some(p) = &self.pops {
            p.validate()?;
        }
        if self.omega_c_grid.is_empty() {
            return Err(Error::invalid("omega_c_grid", "must not be empty"));
        }
        if self.omega_c_grid.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::invalid("omega_c_grid", "values must be finite and > 0"));
        }
        if self.omega_c_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("omega_c_grid", "must be strictly increasing"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma", "must be finite and >= 0"));
        }
        if self.noise_sigma > 0.0 && self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "noisy scans need at least one seed"));
        }
        Ok(())
    }
}

/// Values `start, start + step, …` up to `stop` inclusive, rounded to 12 decimals.
pub fn ratio_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..n)
        .map(|i| ((start + step * i as f64) * 1e12).round() / 1e12)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedWeights {
    pub seed: u64,
    pub w_eit: f64,
    pub w_ats: f64,
    pub wbar_eit: f64,
    pub wbar_ats: f64,
}

impl From<(u64, &ComparisonResult)> for SeedWeights {
    fn from((seed, c): (u64, &ComparisonResult)) -> Self {
        SeedWeights {
            seed,
            w_eit: c.w_eit,
            w_ats: c.w_ats,
            wbar_eit: c.wbar_eit,
            wbar_ats: c.wbar_ats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub omega_c_over_gamma13: f64,
    pub w_eit: f64,
    pub w_ats: f64,
    pub wbar_eit: f64,
    pub wbar_ats: f64,
    /// Per-seed weights for noisy scans; empty when noiseless.
    pub per_seed: Vec<SeedWeights>,
    /// Residual sums of the noiseless fits (NaN for noisy rows).
    pub rss_eit: f64,
    pub rss_ats: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub family: ModelFamily,
    pub noise_sigma: f64,
    pub rows: Vec<ScanRow>,
    pub transition: Option<f64>,
}

impl ScanResult {
    pub fn omega_c_grid(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.omega_c_over_gamma13).collect()
    }

    /// Transition of each seed's own weight track, in seed order.
    pub fn per_seed_transitions(&self) -> Vec<(u64, Option<f64>)> {
        let Some(first) = self.rows.first() else {
            return Vec::new();
        };
        (0..first.per_seed.len())
            .map(|k| {
                let pts: Vec<(f64, f64, f64)> = self
                    .rows
                    .iter()
                    .map(|r| (r.omega_c_over_gamma13, r.per_seed[k].w_eit, r.per_seed[k].w_ats))
                    .collect();
                (first.per_seed[k].seed, find_transition(&pts))
            })
            .collect()
    }

    /// Transition located on the per-point weights instead of the total weights.
    pub fn per_point_transition(&self) -> Option<f64> {
        let pts: Vec<(f64, f64, f64)> = self
            .rows
            .iter()
            .map(|r| (r.omega_c_over_gamma13, r.wbar_eit, r.wbar_ats))
            .collect();
        find_transition(&pts)
    }
}

/// Scales `data` to unit peak amplitude and adds i.i.d. N(0, σ²) noise.
pub fn add_noise(data: &RealSpectrum, sigma: f64, seed: u64) -> Result<RealSpectrum> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid("sigma", "must be finite and >= 0"));
    }
    let mut out = data.normalized()?;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("sigma", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut out.values {
            *v += normal.sample(&mut rng);
        }
    }
    RealSpectrum::unchecked_sign(out.delta, out.values, out.kind)
}

/// Smallest grid value from which ATS outweighs EIT at every larger grid
/// value. Points are `(Ωc/γ13, w_eit, w_ats)` in increasing Ωc order.
pub fn find_transition(points: &[(f64, f64, f64)]) -> Option<f64> {
    let mut found = None;
    for &(x, w_eit, w_ats) in points.iter().rev() {
        if w_ats > w_eit {
            found = Some(x);
        } else {
            break;
        }
    }
    found
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn synthesize_at(cfg: &ScanConfig, grid: &DetuningGrid, ratio: f64) -> Result<RealSpectrum> {
    let p = cfg.base.with_omega_c_ratio(ratio);
    synthesize_spectrum(&p, cfg.pops.as_ref(), grid, cfg.family.spectrum_kind())
}

/// Runs the model comparison at every grid point (and seed, when noisy).
pub fn run_scan(cfg: &ScanConfig) -> Result<ScanResult> {
    cfg.validate()?;
    let grid = cfg.grid.build(cfg.base.gamma13)?;
    let rows = if cfg.noise_sigma == 0.0 {
        par::try_map(cfg.execution, &cfg.omega_c_grid, |i, &ratio| {
            let data = synthesize_at(cfg, &grid, ratio)?.normalized()?;
            let opts = cfg.fit.clone().with_seed(mix_seed(cfg.fit.seed, i as u64, 0));
            let c = compare(&data, cfg.family, &opts)?;
            Ok::<_, Error>(ScanRow {
                omega_c_over_gamma13: ratio,
                w_eit: c.w_eit,
                w_ats: c.w_ats,
                wbar_eit: c.wbar_eit,
                wbar_ats: c.wbar_ats,
                per_seed: Vec::new(),
                rss_eit: c.eit.rss,
                rss_ats: c.ats.rss,
            })
        })?
    } else {
        let clean = par::try_map(cfg.execution, &cfg.omega_c_grid, |_, &ratio| {
            synthesize_at(cfg, &grid, ratio)
        })?;
        let items: Vec<(usize, u64)> = (0..cfg.omega_c_grid.len())
            .flat_map(|i| cfg.seeds.iter().map(move |&s| (i, s)))
            .collect();
        let weights = par::try_map(cfg.execution, &items, |_, &(i, seed)| {
            let noisy = add_noise(&clean[i], cfg.noise_sigma, mix_seed(seed, i as u64, 0))?;
            let opts = cfg.fit.clone().with_seed(mix_seed(seed, i as u64, 1));
            let c = compare(&noisy, cfg.family, &opts)?;
            Ok::<_, Error>(SeedWeights::from((seed, &c)))
        })?;
        let per_grid = cfg.seeds.len();
        cfg.omega_c_grid
            .iter()
            .zip(weights.chunks(per_grid))
            .map(|(&ratio, ws)| {
                let pick = |f: fn(&SeedWeights) -> f64| {
                    let mut v: Vec<f64> = ws.iter().map(f).collect();
                    median(&mut v)
                };
                ScanRow {
                    omega_c_over_gamma13: ratio,
                    w_eit: pick(|s| s.w_eit),
                    w_ats: pick(|s| s.w_ats),
                    wbar_eit: pick(|s| s.wbar_eit),
                    wbar_ats: pick(|s| s.wbar_ats),
                    per_seed: ws.to_vec(),
                    rss_eit: f64::NAN,
                    rss_ats: f64::NAN,
                }
            })
            .collect()
    };
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r: &ScanRow| (r.omega_c_over_gamma13, r.w_eit, r.w_ats))
        .collect();
    Ok(ScanResult {
        family: cfg.family,
        noise_sigma: cfg.noise_sigma,
        transition: find_transition(&pts),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRow {
    /// ρ22⁽⁰⁾/ρ11⁽⁰⁾.
    pub ratio: f64,
    pub transition_a: Option<f64>,
    pub transition_b: Option<f64>,
}

/// Transitions of both families for each ground-state population ratio
/// (ρ11 + ρ22 = 1, ρ33 = 0), using the population-corrected spectra.
pub fn population_study(cfg: &ScanConfig, ratios: &[f64]) -> Result<Vec<PopulationRow>> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::invalid("ratio_grid", "ratios must lie in [0, 1]"));
    }
    ratios
        .iter()
        .map(|&ratio| {
            let pops = Populations::from_ground_ratio(ratio)?;
            let run = |family| {
                let c = ScanConfig {
                    pops: Some(pops),
                    family,
                    ..cfg.clone()
                };
                run_scan(&c).map(|r| r.transition)
            };
            Ok(PopulationRow {
                ratio,
                transition_a: run(ModelFamily::A)?,
                transition_b: run(ModelFamily::B)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::SpectrumKind;

    fn ramp(n: usize) -> RealSpectrum {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| (-((i as f64 - n as f64 / 2.0) / 20.0).powi(2)).exp() * 3.0).collect();
        RealSpectrum::new(x, y, SpectrumKind::AbsRho12).unwrap()
    }

    #[test]
    fn transition_rules() {
        let eit_only: Vec<(f64, f64, f64)> = (0..5).map(|i| (i as f64, 1.0, 0.0)).collect();
        assert_eq!(find_transition(&eit_only), None);
        let w_ats = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let pts: Vec<(f64, f64, f64)> = w_ats
            .iter()
            .enumerate()
            .map(|(i, w)| (0.1 * (i + 1) as f64, 1.0 - w, *w))
            .collect();
        assert_eq!(find_transition(&pts), Some(0.5));
        assert_eq!(find_transition(&[]), None);
    }

    #[test]
    fn zero_noise_only_normalises() {
        let s = ramp(101);
        let out = add_noise(&s, 0.0, 3).unwrap();
        let n = s.normalized().unwrap();
        assert_eq!(out.values, n.values);
        assert!((out.peak_amplitude() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let s = ramp(101);
        assert_eq!(add_noise(&s, 0.1, 42).unwrap(), add_noise(&s, 0.1, 42).unwrap());
        assert_ne!(add_noise(&s, 0.1, 42).unwrap(), add_noise(&s, 0.1, 43).unwrap());
    }

    #[test]
    fn noise_has_requested_standard_deviation() {
        let s = ramp(10_000);
        let out = add_noise(&s, 0.1, 11).unwrap();
        let base = s.normalized().unwrap();
        let d: Vec<f64> = out.values.iter().zip(&base.values).map(|(a, b)| a - b).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        // sd of the sample sd is σ/√(2n) ≈ 7e-4; 0.005 is > 3 of those.
        assert!((var.sqrt() - 0.1).abs() < 0.005, "sd {}", var.sqrt());
    }

    #[test]
    fn config_validation() {
        let mut c = ScanConfig::reference(ModelFamily::B, vec![]);
        assert!(run_scan(&c).is_err());
        c.omega_c_grid = vec![0.2, 0.1];
        assert!(c.validate().is_err());
        c.omega_c_grid = vec![0.0, 0.1];
        assert!(c.validate().is_err());
        c.omega_c_grid = vec![0.1, 0.2];
        c.noise_sigma = -1.0;
        assert!(c.validate().is_err());
        c.noise_sigma = 0.1;
        c.seeds.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn ratio_grid_includes_endpoints() {
        let g = ratio_grid(0.1, 1.5, 0.02);
        assert_eq!(g.len(), 71);
        assert!((g[70] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn population_study_rejects_ratio_above_one() {
        let c = ScanConfig::reference(ModelFamily::B, vec![0.3]);
        assert!(population_study(&c, &[0.5, 1.2]).is_err());
    }
}
