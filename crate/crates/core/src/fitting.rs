//! Damped least-squares fitting and Akaike model comparison.
//!
//! The likelihood is Gaussian with the residual variance estimated at the
//! optimum, so `aic = n ln(rss/n) + 2 k_total` with `k_total = K + 1` (the +1 is
//! the variance). The constant `n(ln 2π + 1)` is dropped; only differences matter.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lineshapes::{initial_guess, ModelKind, ModelParams};
use crate::spectra::{RealSpectrum, SpectrumKind};

/// Knobs of the multi-start damped least-squares engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Total starts: the heuristic guess plus `starts - 1` perturbations.
    pub starts: usize,
    /// Range of the log-uniform multiplicative perturbation factors.
    pub perturbation: (f64, f64),
    pub seed: u64,
    pub max_iterations: usize,
    pub rss_rel_tol: f64,
    pub step_tol: f64,
    /// Relative forward-difference step for the Jacobian.
    pub jacobian_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 5,
            perturbation: (0.5, 2.0),
            seed: 0,
            max_iterations: 500,
            rss_rel_tol: 1e-10,
            step_tol: 1e-8,
            jacobian_step: 1e-6,
        }
    }
}

impl FitOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelParams,
    pub rss: f64,
    pub n: usize,
    /// Parameters counted by AIC: model K plus one for the noise variance.
    pub k_total: usize,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    /// A_EIT vs A_ATS on the probe absorption.
    A,
    /// B_EIT vs B_ATS on |ρ12| or the coherence quantifier.
    B,
}

impl ModelFamily {
    pub fn models(self) -> (ModelKind, ModelKind) {
        match self {
            ModelFamily::A => (ModelKind::AEit, ModelKind::AAts),
            ModelFamily::B => (ModelKind::BEit, ModelKind::BAts),
        }
    }

    /// Spectrum kind synthesized for this family in control-field sweeps.
    pub fn spectrum_kind(self) -> SpectrumKind {
        match self {
            ModelFamily::A => SpectrumKind::ImRho13,
            ModelFamily::B => SpectrumKind::AbsRho12,
        }
    }

    pub fn accepts(self, kind: SpectrumKind) -> bool {
        match self {
            ModelFamily::A => kind == SpectrumKind::ImRho13,
            ModelFamily::B => matches!(kind, SpectrumKind::AbsRho12 | SpectrumKind::QuantifierC),
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelFamily::A => "A",
            ModelFamily::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub family: ModelFamily,
    pub eit: FitResult,
    pub ats: FitResult,
    pub i_eit: f64,
    pub i_ats: f64,
    pub w_eit: f64,
    pub w_ats: f64,
    pub wbar_eit: f64,
    pub wbar_ats: f64,
}

/// Mixes a base seed with two stream indices (splitmix64 finaliser).
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn aic_value(rss: f64, n: usize, k_total: usize) -> f64 {
    let nf = n as f64;
    nf * (rss.max(f64::MIN_POSITIVE) / nf).ln() + 2.0 * k_total as f64
}

/// Akaike weights exp(−ΔI/2)/Σ exp(−ΔI/2), with Δ taken from the minimum.
pub fn akaike_weights(aic: &[f64]) -> Result<Vec<f64>> {
    if aic.len() < 2 {
        return Err(Error::invalid("aic", "need at least two AIC values"));
    }
    if aic.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("aic", "AIC values must be finite"));
    }
    let min = aic.iter().cloned().fold(f64::INFINITY, f64::min);
    let rel: Vec<f64> = aic.iter().map(|v| (-(v - min) / 2.0).exp()).collect();
    let total: f64 = rel.iter().sum();
    Ok(rel.into_iter().map(|r| r / total).collect())
}

/// Akaike weights of the per-point AIC, I/n.
pub fn per_point_weights(fits: &[FitResult]) -> Result<Vec<f64>> {
    let n = fits.first().map(|f| f.n).unwrap_or(0);
    if let Some(f) = fits.iter().find(|f| f.n != n) {
        return Err(Error::MismatchedSampleSize(n, f.n));
    }
    let scaled: Vec<f64> = fits.iter().map(|f| f.aic / f.n as f64).collect();
    akaike_weights(&scaled)
}

struct Problem<'a> {
    kind: ModelKind,
    x: &'a [f64],
    y: &'a [f64],
    theta: Vec<f64>,
}

impl Problem<'_> {
    /// Fills model values into `out` and returns the RSS (∞ if non-finite).
    fn eval(&mut self, u: &[f64], out: &mut [f64]) -> f64 {
        self.kind.theta_from_internal(u, &mut self.theta);
        if self.theta.iter().any(|t| !t.is_finite()) {
            return f64::INFINITY;
        }
        let mut rss = 0.0;
        for ((o, &x), &y) in out.iter_mut().zip(self.x).zip(self.y) {
            let m = self.kind.eval(&self.theta, x);
            *o = m;
            let r = y - m;
            rss += r * r;
        }
        if rss.is_finite() {
            rss
        } else {
            f64::INFINITY
        }
    }
}

struct LmOutcome {
    u: Vec<f64>,
    rss: f64,
    converged: bool,
    iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn levenberg_marquardt(prob: &mut Problem<'_>, mut u: Vec<f64>, opts: &FitOptions) -> Option<LmOutcome> {
    let n = prob.x.len();
    let k = u.len();
    let mut model = vec![0.0; n];
    let mut trial_model = vec![0.0; n];
    let mut shifted = vec![0.0; n];
    let mut jac = vec![0.0; n * k];
    let mut rss = prob.eval(&u, &mut model);
    if !rss.is_finite() {
        return None;
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    'outer: while iterations < opts.max_iterations {
        if rss == 0.0 {
            converged = true;
            break;
        }
        for j in 0..k {
            let h = opts.jacobian_step * u[j].abs().max(1.0);
            let saved = u[j];
            u[j] = saved + h;
            let r = prob.eval(&u, &mut shifted);
            u[j] = saved;
            if !r.is_finite() {
                break 'outer;
            }
            let col = &mut jac[j * n..(j + 1) * n];
            for ((c, s), m) in col.iter_mut().zip(&shifted).zip(&model) {
                *c = (s - m) / h;
            }
        }
        let mut jtj = DMatrix::<f64>::zeros(k, k);
        let mut jtr = DVector::<f64>::zeros(k);
        for a in 0..k {
            let ca = &jac[a * n..(a + 1) * n];
            jtr[a] = ca.iter().zip(&model).zip(prob.y).map(|((c, m), y)| c * (y - m)).sum();
            for b in a..k {
                let cb = &jac[b * n..(b + 1) * n];
                let v: f64 = ca.iter().zip(cb).map(|(p, q)| p * q).sum();
                jtj[(a, b)] = v;
                jtj[(b, a)] = v;
            }
        }
        let max_diag = (0..k).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let floor = (max_diag * 1e-15).max(f64::MIN_POSITIVE);

        loop {
            iterations += 1;
            let mut m = jtj.clone();
            for i in 0..k {
                m[(i, i)] += lambda * jtj[(i, i)].max(floor);
            }
            let step = match m.cholesky() {
                Some(ch) => ch.solve(&jtr),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 || iterations >= opts.max_iterations {
                        break 'outer;
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
            let tiny_step = norm(step.as_slice()) <= opts.step_tol * (norm(&u) + opts.step_tol);
            let trial_rss = prob.eval(&trial, &mut trial_model);
            if trial_rss < rss {
                let rel = (rss - trial_rss) / rss;
                u = trial;
                rss = trial_rss;
                std::mem::swap(&mut model, &mut trial_model);
                lambda = (lambda / 10.0).max(1e-12);
                if rel < opts.rss_rel_tol || tiny_step {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if tiny_step || lambda > 1e16 {
                converged = true;
                break 'outer;
            }
            if iterations >= opts.max_iterations {
                break 'outer;
            }
        }
    }
    Some(LmOutcome {
        u,
        rss,
        converged,
        iterations,
    })
}

fn perturbed_starts(guess: &ModelParams, opts: &FitOptions) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (lo, hi) = opts.perturbation;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut starts = vec![guess.theta.clone()];
    for _ in 1..opts.starts.max(1) {
        let mut t: Vec<f64> = guess
            .theta
            .iter()
            .map(|v| {
                let f = if lhi > llo { rng.random_range(llo..lhi).exp() } else { lo };
                v * f
            })
            .collect();
        if guess.kind == ModelKind::BEit && t[1] <= t[2] {
            t.swap(1, 2);
            if t[1] <= t[2] {
                t[1] = 1.1 * t[2];
            }
        }
        starts.push(t);
    }
    starts
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Fits `kind` to `data`, keeping the best of the multi-start runs.
pub fn fit(
    data: &RealSpectrum,
    kind: ModelKind,
    start: Option<&ModelParams>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let n = data.len();
    let k_total = kind.parameter_count() + 1;
    if n < k_total + 2 {
        return Err(Error::DegenerateData(format!(
            "{n} points cannot support {k_total} parameters"
        )));
    }
    if is_constant(&data.values) {
        return Err(Error::DegenerateData("data is constant".into()));
    }
    let guess = match start {
        Some(s) => {
            if s.kind != kind {
                return Err(Error::invalid("start", format!("expected {kind}, got {}", s.kind)));
            }
            s.validate()?;
            s.clone()
        }
        None => initial_guess(kind, data)?,
    };

    let mut prob = Problem {
        kind,
        x: &data.delta,
        y: &data.values,
        theta: vec![0.0; kind.parameter_count()],
    };
    let mut best: Option<LmOutcome> = None;
    for theta in perturbed_starts(&guess, opts) {
        let u0 = kind.to_internal(&theta);
        if u0.iter().any(|v| !v.is_finite()) {
            continue;
        }
        if let Some(out) = levenberg_marquardt(&mut prob, u0, opts) {
            if best.as_ref().is_none_or(|b| out.rss < b.rss) {
                best = Some(out);
            }
        }
    }
    let best = best.ok_or(Error::FitDiverged)?;
    let mut theta = vec![0.0; kind.parameter_count()];
    kind.theta_from_internal(&best.u, &mut theta);
    kind.canonicalize(&mut theta);
    Ok(FitResult {
        model: ModelParams { kind, theta },
        rss: best.rss,
        n,
        k_total,
        aic: aic_value(best.rss, n, k_total),
        converged: best.converged,
        iterations: best.iterations,
    })
}

/// Fits the EIT and ATS models of `family` and weighs them against each other.
pub fn compare(data: &RealSpectrum, family: ModelFamily, opts: &FitOptions) -> Result<ComparisonResult> {
    if !family.accepts(data.kind) {
        return Err(Error::invalid(
            "family",
            format!("family {family} cannot be fitted to {:?} data", data.kind),
        ));
    }
    let (eit_kind, ats_kind) = family.models();
    let eit = fit(data, eit_kind, None, &opts.clone().with_seed(mix_seed(opts.seed, 0, 1)))?;
    let ats = fit(data, ats_kind, None, &opts.clone().with_seed(mix_seed(opts.seed, 0, 2)))?;
    let w = akaike_weights(&[eit.aic, ats.aic])?;
    let wbar = per_point_weights(&[eit.clone(), ats.clone()])?;
    Ok(ComparisonResult {
        family,
        i_eit: eit.aic,
        i_ats: ats.aic,
        w_eit: w[0],
        w_ats: w[1],
        wbar_eit: wbar[0],
        wbar_ats: wbar[1],
        eit,
        ats,
    })
}
