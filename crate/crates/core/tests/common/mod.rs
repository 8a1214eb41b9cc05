//! Single-case checks shared by the property tests and the acceptance run.
#![allow(dead_code)]

use eitats::spectra::{
    dressed_poles, residues, steady_state_rho12, steady_state_rho13, RHO12_POLE_SUM_SIGN,
    RHO13_POLE_SUM_SIGN,
};
use eitats::fitting::fit;
use eitats::{DetuningGrid, FitOptions, ModelKind, ModelParams, RealSpectrum, SpectrumKind, SystemParams};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const IDENTITY_TOL: f64 = 1e-12;
pub const POLE_SUM_REL_TOL: f64 = 1e-10;
/// Residues lose about eps·|δ±|/|δ+ − δ−| of accuracy, so the randomized
/// identity checks stay this far from the degenerate point.
pub const MIN_POLE_SEPARATION: f64 = 1e-2;

/// Ratio γ12/γ13 below which |ρ12| at twice threshold is split. The two peaks
/// exist iff Re δ+ > Im δ+, i.e. γ12/γ13 < (√3 − 1)/(√3 + 1) ≈ 0.268.
pub const PEAK_COUNT_MAX_GAMMA12_RATIO: f64 = 0.2;

pub fn system(gamma13: f64, gamma12: f64, omega_c: f64, delta_c: f64) -> SystemParams {
    SystemParams::new(gamma13, gamma12, gamma13, 0.01 * gamma13, omega_c, delta_c).unwrap()
}

/// Parameters drawn from unit-interval samples over the ranges of the identity suite:
/// γ13 ∈ [0.1, 10], γ12 ∈ [0, γ13/2], Ωc ∈ [0, 5γ13], Δc ∈ [−5, 5].
pub fn system_from_unit(u: [f64; 4]) -> SystemParams {
    let gamma13 = 0.1 + 9.9 * u[0];
    system(gamma13, 0.5 * gamma13 * u[1], 5.0 * gamma13 * u[2], -5.0 + 10.0 * u[3])
}

pub fn well_separated(p: &SystemParams) -> bool {
    let poles = dressed_poles(p);
    (poles.plus - poles.minus).norm() > MIN_POLE_SEPARATION * p.gamma13
}

pub fn check_residue_sums(p: &SystemParams) -> Result<(), String> {
    let d = residues(p).map_err(|e| e.to_string())?;
    let a = (d.a_plus + d.a_minus - 1.0).norm();
    let b = (d.b_plus + d.b_minus).norm();
    if a < IDENTITY_TOL && b < IDENTITY_TOL {
        Ok(())
    } else {
        Err(format!("A sum off by {a:e}, B sum off by {b:e} for {p:?}"))
    }
}

fn rel_err(a: Complex64, b: Complex64) -> f64 {
    let scale = b.norm();
    if scale == 0.0 {
        a.norm()
    } else {
        (a - b).norm() / scale
    }
}

pub fn check_pole_sum(p: &SystemParams, delta: f64) -> Result<(), String> {
    let d = residues(p).map_err(|e| e.to_string())?;
    let e12 = rel_err(
        RHO12_POLE_SUM_SIGN * d.pole_sum_rho12(p.omega_p, delta),
        steady_state_rho12(p, delta).map_err(|e| e.to_string())?,
    );
    let e13 = rel_err(
        RHO13_POLE_SUM_SIGN * d.pole_sum_rho13(p.omega_p, delta),
        steady_state_rho13(p, delta).map_err(|e| e.to_string())?,
    );
    if e12 < POLE_SUM_REL_TOL && e13 < POLE_SUM_REL_TOL {
        Ok(())
    } else {
        Err(format!("rho12 rel err {e12:e}, rho13 rel err {e13:e} at δ = {delta} for {p:?}"))
    }
}

/// Pole positions at Δc = 0 on either side of 2Ωc = γ13 − γ12.
pub fn check_threshold_geometry(p: &SystemParams) -> Result<(), String> {
    assert_eq!(p.delta_c, 0.0);
    let poles = dressed_poles(p);
    let g = p.gamma13 - p.gamma12;
    let (rp, rm) = (poles.plus.re, poles.minus.re);
    if 2.0 * p.omega_c <= g {
        if rp == 0.0 && rm == 0.0 {
            return Ok(());
        }
        return Err(format!("below threshold Re δ± = ({rp:e}, {rm:e}) for {p:?}"));
    }
    let expected = (p.omega_c * p.omega_c - 0.25 * g * g).sqrt();
    let tol = IDENTITY_TOL * p.gamma13;
    if (rp - expected).abs() < tol && (rm + expected).abs() < tol {
        Ok(())
    } else {
        Err(format!("Re δ± = ({rp}, {rm}), expected ±{expected} for {p:?}"))
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Im ρ13 and |ρ12| even in δ at Δc = 0.
pub fn check_evenness(p: &SystemParams, delta: f64) -> Result<(), String> {
    assert_eq!(p.delta_c, 0.0);
    let im13 = |d| steady_state_rho13(p, d).map(|z| z.im);
    let abs12 = |d| steady_state_rho12(p, d).map(|z| z.norm());
    let e13 = rel_diff(im13(delta).unwrap(), im13(-delta).unwrap());
    let e12 = rel_diff(abs12(delta).unwrap(), abs12(-delta).unwrap());
    if e13 < IDENTITY_TOL && e12 < IDENTITY_TOL {
        Ok(())
    } else {
        Err(format!("Im rho13 asymmetry {e13:e}, |rho12| asymmetry {e12:e} at δ = {delta}"))
    }
}

pub fn abs_rho12_maxima(p: &SystemParams) -> usize {
    let grid = DetuningGrid::default_for(p.gamma13);
    let values: Vec<f64> = grid
        .points()
        .iter()
        .map(|&d| steady_state_rho12(p, d).unwrap().norm())
        .collect();
    eitats::spectra::local_maxima(&values).len()
}

/// One peak at half the threshold control strength and two at twice it.
pub fn check_peak_counts(gamma13: f64, gamma12: f64) -> Result<(), String> {
    let base = system(gamma13, gamma12, 0.0, 0.0);
    let threshold = base.threshold_omega_c();
    let below = abs_rho12_maxima(&base.with_omega_c(0.5 * threshold));
    let above = abs_rho12_maxima(&base.with_omega_c(2.0 * threshold));
    if below == 1 && above == 2 {
        Ok(())
    } else {
        Err(format!("{below} maxima at 0.5x and {above} at 2x threshold (γ13 = {gamma13}, γ12 = {gamma12})"))
    }
}

pub const TRIALS: usize = 200;
pub const REL_TOL: f64 = 1e-4;
pub const REQUIRED_RATE: f64 = 0.95;

fn random_theta(kind: ModelKind, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match kind {
        ModelKind::AEit => {
            let gp = rng.random_range(1.0..4.0);
            let gm = gp * rng.random_range(0.05..0.5);
            let sp = gp * rng.random_range(0.5..2.0);
            // Dip depth between 20% and 90% of the broad peak.
            let sm = sp * gm / gp * rng.random_range(0.2f64..0.9).sqrt();
            vec![sp, sm, gp, gm]
        }
        ModelKind::AAts => vec![
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..6.0),
            rng.random_range(0.5..3.0),
        ],
        ModelKind::BEit => {
            let gp = rng.random_range(1.0..4.0);
            vec![rng.random_range(0.5..2.0), gp, gp * rng.random_range(0.02..0.8)]
        }
        ModelKind::BAts => vec![
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..6.0),
            rng.random_range(0.5..3.0),
        ],
    }
}

fn kind_of(kind: ModelKind) -> SpectrumKind {
    match kind {
        ModelKind::AEit | ModelKind::AAts => SpectrumKind::ImRho13,
        ModelKind::BEit | ModelKind::BAts => SpectrumKind::AbsRho12,
    }
}

fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs())
        .fold(0.0, f64::max)
}

/// Fraction of trials recovered within [`REL_TOL`] and the worst final rss.
pub fn recovery_rate(kind: ModelKind, seed: u64) -> (f64, f64) {
    let grid = DetuningGrid::uniform(-15.0, 15.0, 601).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0;
    let mut worst_rss: f64 = 0.0;
    for trial in 0..TRIALS {
        let truth = ModelParams::new(kind, random_theta(kind, &mut rng)).unwrap();
        let values: Vec<f64> = grid.points().iter().map(|&d| truth.eval(d)).collect();
        let data = RealSpectrum::unchecked_sign(grid.points().to_vec(), values, kind_of(kind)).unwrap();
        let opts = FitOptions::default().with_seed(trial as u64);
        let fitted = fit(&data, kind, None, &opts).unwrap();
        if max_rel_error(&fitted.model.theta, &truth.theta) < REL_TOL {
            ok += 1;
        }
        worst_rss = worst_rss.max(fitted.rss);
    }
    (ok as f64 / TRIALS as f64, worst_rss)
}
