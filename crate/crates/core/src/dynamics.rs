//! Time-domain Bloch equations for the pulsed-control Λ system and the
//! coherence quantifier built from probe-transmission levels.
//!
//! The master equation uses the rotating-frame Hamiltonian
//! `H = −δ|2⟩⟨2| − Δp|3⟩⟨3| − (Ωp|3⟩⟨1| + Ωc(t)|3⟩⟨2| + h.c.)` with Δp = δ + Δc,
//! spontaneous decay out of |3⟩ with total rate γ13 + γ23 − γ12 split in the
//! ratio γ13 : γ23, and ground-state dephasing chosen so that ρ12, ρ13 and ρ23
//! are damped at exactly γ12, γ13 and γ23. Its first-order steady state is the
//! closed form in [`crate::spectra`]. The probe transmission is
//! `exp(−α·absorption)` with absorption `−Im ρ13`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{compare, mix_seed, FitOptions, ModelFamily};
use crate::par::{self, Execution};
use crate::scan::{find_transition, GridSpec, ScanResult, ScanRow};
use crate::spectra::{DetuningGrid, Populations, RealSpectrum, SpectrumKind, SystemParams};

type Density = Matrix3<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Initial probe-ground population of a thermal ensemble.
pub const THERMAL_RHO11: f64 = 0.5;

/// Deviations beyond these abort an integration with [`Error::StepTooLarge`].
pub const TRACE_TOL: f64 = 1e-6;
pub const HERMITICITY_TOL: f64 = 1e-6;
pub const NEGATIVITY_TOL: f64 = 1e-6;

/// Minimum number of samples in every level-averaging window.
pub const MIN_WINDOW_SAMPLES: usize = 10;

/// Largest transmission accepted on ingest. Switch-on ringing and transient
/// Raman gain push simulated traces up to ~1e-4 above unity; real detectors add noise.
pub const MAX_TRANSMISSION: f64 = 1.01;

/// Control pulse timing, all in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    #[serde(rename = "t_start_us")]
    pub t_start: f64,
    #[serde(rename = "t_width_us")]
    pub t_width: f64,
    #[serde(rename = "t_total_us")]
    pub t_total: f64,
}

impl Default for PulseSchedule {
    /// 10 µs pulse starting at 10 µs in a 50 µs window.
    fn default() -> Self {
        PulseSchedule {
            t_start: 10.0,
            t_width: 10.0,
            t_total: 50.0,
        }
    }
}

impl PulseSchedule {
    pub fn new(t_start: f64, t_width: f64, t_total: f64) -> Result<Self> {
        let s = PulseSchedule {
            t_start,
            t_width,
            t_total,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.t_start, self.t_width, self.t_total].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("schedule", "times must be finite"));
        }
        if self.t_start < 0.0 {
            return Err(Error::invalid("t_start_us", "must be >= 0"));
        }
        if self.t_width <= 0.0 {
            return Err(Error::invalid("t_width_us", "must be > 0"));
        }
        if self.t_end() >= self.t_total {
            return Err(Error::invalid("t_total_us", "must exceed t_start + t_width"));
        }
        Ok(())
    }

    /// Time the control switches off.
    pub fn t_end(&self) -> f64 {
        self.t_start + self.t_width
    }

    pub fn control_on(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end()
    }
}

/// Probe transmission I_trans/I_in sampled in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientTrace {
    pub times: Vec<f64>,
    pub transmission: Vec<f64>,
    pub schedule: PulseSchedule,
    pub alpha: f64,
    /// Two-photon detuning δ (MHz).
    pub delta: f64,
    pub omega_p: f64,
    /// Control Rabi frequency while the pulse is on.
    pub omega_c: f64,
}

/// Largest deviations from a physical density matrix seen during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhysicalityReport {
    /// max |tr ρ − 1|
    pub max_trace_error: f64,
    /// max |ρ_jk − conj(ρ_kj)|
    pub max_hermiticity_error: f64,
    /// max(0, −λ_min(ρ))
    pub max_negativity: f64,
    pub steps: usize,
}

impl PhysicalityReport {
    fn record(&mut self, rho: &Density) -> Result<()> {
        let trace = (rho[(0, 0)] + rho[(1, 1)] + rho[(2, 2)] - 1.0).norm();
        let herm = hermiticity_error(rho);
        let neg = (-min_eigenvalue_hermitian(rho)).max(0.0);
        if !(trace.is_finite() && herm.is_finite() && neg.is_finite()) {
            return Err(Error::StepTooLarge(format!(
                "density matrix became non-finite after {} steps",
                self.steps
            )));
        }
        self.max_trace_error = self.max_trace_error.max(trace);
        self.max_hermiticity_error = self.max_hermiticity_error.max(herm);
        self.max_negativity = self.max_negativity.max(neg);
        if trace > TRACE_TOL || herm > HERMITICITY_TOL || neg > NEGATIVITY_TOL {
            return Err(Error::StepTooLarge(format!(
                "physicality lost after {} steps (trace error {trace:e}, hermiticity {herm:e}, negativity {neg:e})",
                self.steps
            )));
        }
        Ok(())
    }
}

/// Output of [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trace: TransientTrace,
    pub report: PhysicalityReport,
    /// ρ13 = ⟨1|ρ|3⟩ at every sample.
    pub rho13: Vec<Complex64>,
    /// Diagonal of ρ at every sample.
    pub populations: Vec<Populations>,
    /// Density matrix at the instant the control switches off.
    pub rho_at_pulse_end: Density,
    pub rho_final: Density,
}

impl Simulation {
    pub fn populations_at_pulse_end(&self) -> Populations {
        populations_of(&self.rho_at_pulse_end)
    }
}

fn populations_of(rho: &Density) -> Populations {
    Populations {
        rho11: rho[(0, 0)].re,
        rho22: rho[(1, 1)].re,
        rho33: rho[(2, 2)].re,
    }
}

/// Integration settings for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObeSettings {
    /// Nominal step (µs); each pulse segment is split into equal steps no longer than this.
    pub dt: f64,
    pub alpha: f64,
    /// Initial state is diag(rho11_i, 1 − rho11_i, 0).
    pub rho11_i: f64,
}

/// Decay and dephasing rates realising the coherence damping γ12, γ13, γ23.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Relaxation {
    to_1: f64,
    to_2: f64,
    g12: f64,
    g13: f64,
    g23: f64,
}

impl Relaxation {
    fn new(p: &SystemParams) -> Result<Self> {
        if (p.gamma13 - p.gamma23).abs() > p.gamma12 * (1.0 + 1e-12) + f64::EPSILON {
            return Err(Error::NonPhysicalParams(format!(
                "|γ13 − γ23| = {} exceeds γ12 = {}; no completely positive relaxation gives these damping rates",
                (p.gamma13 - p.gamma23).abs(),
                p.gamma12
            )));
        }
        let total = p.gamma13 + p.gamma23 - p.gamma12;
        if total <= 0.0 {
            return Err(Error::NonPhysicalParams("excited-state decay rate must be > 0".into()));
        }
        let w = p.gamma13 + p.gamma23;
        Ok(Relaxation {
            to_1: total * p.gamma13 / w,
            to_2: total * p.gamma23 / w,
            g12: p.gamma12,
            g13: p.gamma13,
            g23: p.gamma23,
        })
    }
}

struct Liouvillian {
    h: Density,
    relax: Relaxation,
}

impl Liouvillian {
    fn new(p: &SystemParams, delta: f64, omega_c: f64, relax: Relaxation) -> Self {
        let c = |x: f64| Complex64::new(x, 0.0);
        let dp = delta + p.delta_c;
        let h = Matrix3::new(
            c(0.0),
            c(0.0),
            c(-p.omega_p),
            c(0.0),
            c(-delta),
            c(-omega_c),
            c(-p.omega_p),
            c(-omega_c),
            c(-dp),
        );
        Liouvillian { h, relax }
    }

    fn apply(&self, rho: &Density) -> Density {
        let mut d = (self.h * rho - rho * self.h) * (-I);
        let r = &self.relax;
        let p3 = rho[(2, 2)];
        d[(0, 0)] += p3 * r.to_1;
        d[(1, 1)] += p3 * r.to_2;
        d[(2, 2)] -= p3 * (r.to_1 + r.to_2);
        for (j, k, g) in [(0, 1, r.g12), (0, 2, r.g13), (1, 2, r.g23)] {
            d[(j, k)] -= rho[(j, k)] * g;
            d[(k, j)] -= rho[(k, j)] * g;
        }
        d
    }

    fn rk4(&self, rho: &Density, h: f64) -> Density {
        let c = |x: f64| Complex64::new(x, 0.0);
        let k1 = self.apply(rho);
        let k2 = self.apply(&(rho + k1 * c(0.5 * h)));
        let k3 = self.apply(&(rho + k2 * c(0.5 * h)));
        let k4 = self.apply(&(rho + k3 * c(h)));
        rho + (k1 + (k2 + k3) * c(2.0) + k4) * c(h / 6.0)
    }
}

/// Largest step accepted by the integrator: 0.1/max(γ13, Ωc).
pub fn max_dt(p: &SystemParams) -> f64 {
    0.1 / p.gamma13.max(p.omega_c)
}

/// Step used by [`quantifier_profile`]: also resolves γ23 and the detunings.
pub fn default_dt(p: &SystemParams, delta: f64) -> f64 {
    let rate = [p.gamma13, p.gamma23, p.omega_c, (delta + p.delta_c).abs(), delta.abs()]
        .into_iter()
        .fold(0.0, f64::max);
    0.1 / rate
}

fn probe_transmission(rho13: Complex64, alpha: f64) -> f64 {
    (alpha * rho13.im).exp()
}

/// Fixed-step RK4 integration of the density matrix over `schedule`.
pub fn simulate(
    p: &SystemParams,
    schedule: &PulseSchedule,
    delta: f64,
    settings: &ObeSettings,
) -> Result<Simulation> {
    p.validate()?;
    schedule.validate()?;
    if !delta.is_finite() {
        return Err(Error::invalid("delta", "must be finite"));
    }
    if !(settings.alpha.is_finite() && settings.alpha > 0.0) {
        return Err(Error::invalid("alpha", "must be finite and > 0"));
    }
    if !(0.0..=1.0).contains(&settings.rho11_i) {
        return Err(Error::invalid("rho11_i", "must lie in [0, 1]"));
    }
    let dt = settings.dt;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", "must be finite and > 0"));
    }
    let limit = max_dt(p);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge(format!("dt = {dt} µs exceeds 0.1/max(γ13, Ωc) = {limit} µs")));
    }
    let relax = Relaxation::new(p)?;
    let off = Liouvillian::new(p, delta, 0.0, relax);
    let on = Liouvillian::new(p, delta, p.omega_c, relax);

    let mut rho = Density::zeros();
    rho[(0, 0)] = Complex64::from(settings.rho11_i);
    rho[(1, 1)] = Complex64::from(1.0 - settings.rho11_i);

    let segments = [
        (0.0, schedule.t_start, &off),
        (schedule.t_start, schedule.t_end(), &on),
        (schedule.t_end(), schedule.t_total, &off),
    ];
    let estimate: usize = segments
        .iter()
        .map(|(a, b, _)| ((b - a) / dt).ceil() as usize)
        .sum::<usize>()
        + 1;
    let mut times = Vec::with_capacity(estimate);
    let mut rho13 = Vec::with_capacity(estimate);
    let mut populations = Vec::with_capacity(estimate);
    let mut report = PhysicalityReport::default();
    report.record(&rho)?;
    times.push(0.0);
    rho13.push(rho[(0, 2)]);
    populations.push(populations_of(&rho));
    let mut rho_at_pulse_end = rho;
    for (k, &(a, b, l)) in segments.iter().enumerate() {
        let len = b - a;
        if len > 0.0 {
            let n = (len / dt - 1e-9).ceil().max(1.0) as usize;
            let h = len / n as f64;
            for s in 1..=n {
                rho = l.rk4(&rho, h);
                report.steps += 1;
                report.record(&rho)?;
                times.push(if s == n { b } else { a + h * s as f64 });
                rho13.push(rho[(0, 2)]);
                populations.push(populations_of(&rho));
    populations.push(populations_of(&rho));
            }
        }
        if k == 1 {
            rho_at_pulse_end = rho;
        }
    }
    let transmission = rho13
        .iter()
        .map(|&c| probe_transmission(c, settings.alpha))
        .collect();
    Ok(Simulation {
        trace: TransientTrace {
            times,
            transmission,
            schedule: *schedule,
            alpha: settings.alpha,
            delta,
            omega_p: p.omega_p,
            omega_c: p.omega_c,
        },
        report,
        rho13,
        populations,
        rho_at_pulse_end,
        rho_final: rho,
    })
}

/// Transmission trace from the thermal initial state diag(½, ½, 0).
pub fn integrate_obe(
    p: &SystemParams,
    schedule: &PulseSchedule,
    delta: f64,
    dt: f64,
    alpha: f64,
) -> Result<TransientTrace> {
    let settings = ObeSettings {
        dt,
        alpha,
        rho11_i: THERMAL_RHO11,
    };
    simulate(p, schedule, delta, &settings).map(|s| s.trace)
}

/// max_jk |ρ_jk − conj(ρ_kj)|.
pub fn hermiticity_error(rho: &Density) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..3 {
        for k in j..3 {
            worst = worst.max((rho[(j, k)] - rho[(k, j)].conj()).norm());
        }
    }
    worst
}

/// Smallest eigenvalue of the Hermitian part of a 3×3 matrix (trigonometric
/// solution of the characteristic cubic).
pub fn min_eigenvalue_hermitian(m: &Density) -> f64 {
    let a11 = m[(0, 0)].re;
    let a22 = m[(1, 1)].re;
    let a33 = m[(2, 2)].re;
    let a12 = (m[(0, 1)] + m[(1, 0)].conj()) * 0.5;
    let a13 = (m[(0, 2)] + m[(2, 0)].conj()) * 0.5;
    let a23 = (m[(1, 2)] + m[(2, 1)].conj()) * 0.5;
    let off = a12.norm_sqr() + a13.norm_sqr() + a23.norm_sqr();
    let q = (a11 + a22 + a33) / 3.0;
    let (b11, b22, b33) = (a11 - q, a22 - q, a33 - q);
    let p2 = b11 * b11 + b22 * b22 + b33 * b33 + 2.0 * off;
    if p2 == 0.0 {
        return q;
    }
    let p = (p2 / 6.0).sqrt();
    // det(A − qI) for Hermitian A is real.
    let det = b11 * b22 * b33 + 2.0 * (a12 * a23 * a13.conj()).re
        - b11 * a23.norm_sqr()
        - b22 * a13.norm_sqr()
        - b33 * a12.norm_sqr();
    let r = (det / (2.0 * p * p * p)).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos()
}

/// Time interval `[from, to]` (µs) averaged for one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub from: f64,
    pub to: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelWindows {
    pub initial: Window,
    pub steady: Window,
    pub fall: Window,
}

/// Initial, control-on steady and fall-end transmission levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelExtraction {
    pub h_i: f64,
    pub h_s: f64,
    pub h_f: f64,
    pub windows: LevelWindows,
}

/// Default delay after switch-off, as a fraction of the pulse width, before the fall-end window.
pub const DEFAULT_SETTLE_FRACTION: f64 = 0.02;

/// Geometric mean of the transmission over `[from, to]`. Averaging ln T keeps
/// the levels exactly log-linear in the optical depth α.
fn window_mean(trace: &TransientTrace, from: f64, to: f64, name: &str) -> Result<(f64, Window)> {
    let eps = 1e-9 * trace.schedule.t_total.max(1.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (&t, &v) in trace.times.iter().zip(&trace.transmission) {
        if t >= from - eps && t <= to + eps {
            sum += v.ln();
            count += 1;
        }
    }
    if count < MIN_WINDOW_SAMPLES {
        return Err(Error::WindowTooShort(format!(
            "{name} window [{from}, {to}] µs holds {count} samples, need {MIN_WINDOW_SAMPLES}"
        )));
    }
    Ok((
        (sum / count as f64).exp(),
        Window {
            from,
            to,
            samples: count,
        },
    ))
}

/// Averages (geometrically) the transmission over the last 20% of the pre-pulse window (h_i),
/// the last 20% of the control-on window (h_s), and a window of 10% of the
/// pulse width starting `settle_fraction·t_width` after switch-off (h_f).
pub fn extract_levels(trace: &TransientTrace, settle_fraction: f64) -> Result<LevelExtraction> {
    if !(settle_fraction.is_finite() && settle_fraction >= 0.0) {
        return Err(Error::invalid("settle_fraction", "must be finite and >= 0"));
    }
    let s = &trace.schedule;
    let off = s.t_end();
    let fall_from = off + settle_fraction * s.t_width;
    let fall_to = fall_from + 0.1 * s.t_width;
    if fall_to > s.t_total {
        return Err(Error::WindowTooShort(format!(
            "fall-end window ends at {fall_to} µs, after the trace ends at {} µs",
            s.t_total
        )));
    }
    let (h_i, initial) = window_mean(trace, 0.8 * s.t_start, s.t_start, "initial")?;
    let (h_s, steady) = window_mean(trace, off - 0.2 * s.t_width, off, "steady")?;
    let (h_f, fall) = window_mean(trace, fall_from, fall_to, "fall-end")?;
    Ok(LevelExtraction {
        h_i,
        h_s,
        h_f,
        windows: LevelWindows {
            initial,
            steady,
            fall,
        },
    })
}

/// C = |ln h_s − ln h_f| / |ln h_i| · |Ωp|/|Ωc| · ρ11ⁱ.
pub fn quantifier(lv: &LevelExtraction, omega_p: f64, omega_c: f64, rho11_i: f64) -> Result<f64> {
    for (name, h) in [("h_i", lv.h_i), ("h_s", lv.h_s), ("h_f", lv.h_f)] {
        if !(h.is_finite() && h > 0.0 && h <= 1.0) {
            return Err(Error::InvalidParams {
                name: "levels",
                reason: format!("{name} = {h} outside (0, 1]"),
            });
        }
    }
    if !(omega_c.is_finite() && omega_c > 0.0) {
        return Err(Error::invalid("omega_c", "quantifier needs Ωc > 0"));
    }
    if !omega_p.is_finite() {
        return Err(Error::invalid("omega_p", "must be finite"));
    }
    if !(rho11_i.is_finite() && rho11_i > 0.0 && rho11_i <= 1.0) {
        return Err(Error::invalid("rho11_i", "must lie in (0, 1]"));
    }
    let li = lv.h_i.ln();
    if li == 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok((lv.h_s.ln() - lv.h_f.ln()).abs() / li.abs() * (omega_p.abs() / omega_c) * rho11_i)
}

/// How C is formed from a simulated transient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantifierMethod {
    /// From the transmission levels h_i, h_s, h_f ([`quantifier`]).
    #[default]
    TransmissionLevels,
    /// From the complex ρ13 averaged over the same windows ([`quantifier_from_coherences`]).
    CoherenceModulus,
}

/// C = |ρ13(on) − ρ13(off)| / |ρ13(initial)| · |Ωp|/|Ωc| · ρ11ⁱ.
pub fn quantifier_from_coherences(
    initial: Complex64,
    steady: Complex64,
    fall: Complex64,
    omega_p: f64,
    omega_c: f64,
    rho11_i: f64,
) -> Result<f64> {
    if !(omega_c.is_finite() && omega_c > 0.0) {
        return Err(Error::invalid("omega_c", "quantifier needs Ωc > 0"));
    }
    if !(rho11_i.is_finite() && rho11_i > 0.0 && rho11_i <= 1.0) {
        return Err(Error::invalid("rho11_i", "must lie in (0, 1]"));
    }
    let norm = initial.norm();
    if norm == 0.0 {
        return Err(Error::DivisionByZero);
    }
    Ok((steady - fall).norm() / norm * (omega_p.abs() / omega_c) * rho11_i)
}

fn mean_rho13(sim: &Simulation, w: &Window) -> Complex64 {
    let eps = 1e-9 * sim.trace.schedule.t_total.max(1.0);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut count = 0usize;
    for (&t, &c) in sim.trace.times.iter().zip(&sim.rho13) {
        if t >= w.from - eps && t <= w.to + eps {
            sum += c;
            count += 1;
        }
    }
    sum / count as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileOptions {
    pub method: QuantifierMethod,
    pub settle_fraction: f64,
    pub rho11_i: f64,
    /// Fixed step (µs); `None` picks [`default_dt`] per detuning.
    pub dt: Option<f64>,
    pub execution: Execution,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions {
            method: QuantifierMethod::default(),
            settle_fraction: DEFAULT_SETTLE_FRACTION,
            rho11_i: THERMAL_RHO11,
            dt: None,
            execution: Execution::default(),
        }
    }
}

/// C(δ) on a detuning grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifierProfile {
    pub spectrum: RealSpectrum,
    pub rho11_i: f64,
    /// Set when Ωc = 0: the quantifier is undefined and the profile is identically zero.
    pub control_off: bool,
    /// Levels behind each sample; empty when `control_off`.
    pub levels: Vec<LevelExtraction>,
}

pub fn quantifier_profile(
    p: &SystemParams,
    schedule: &PulseSchedule,
    grid: &DetuningGrid,
    alpha: f64,
) -> Result<QuantifierProfile> {
    quantifier_profile_with(p, schedule, grid, alpha, &ProfileOptions::default())
}

/// One simulated transient, level extraction and quantifier per detuning.
pub fn quantifier_profile_with(
    p: &SystemParams,
    schedule: &PulseSchedule,
    grid: &DetuningGrid,
    alpha: f64,
    opts: &ProfileOptions,
) -> Result<QuantifierProfile> {
    p.validate()?;
    schedule.validate()?;
    let delta = grid.points().to_vec();
    if p.omega_c == 0.0 {
        let zeros = vec![0.0; delta.len()];
        return Ok(QuantifierProfile {
            spectrum: RealSpectrum::new(delta, zeros, SpectrumKind::QuantifierC)?,
            rho11_i: opts.rho11_i,
            control_off: true,
            levels: Vec::new(),
        });
    }
    let samples = par::try_map(opts.execution, &delta, |_, &d| {
        let settings = ObeSettings {
            dt: opts.dt.unwrap_or_else(|| default_dt(p, d)),
            alpha,
            rho11_i: opts.rho11_i,
        };
        let sim = simulate(p, schedule, d, &settings)?;
        let lv = extract_levels(&sim.trace, opts.settle_fraction)?;
        let c = match opts.method {
            QuantifierMethod::TransmissionLevels => quantifier(&lv, p.omega_p, p.omega_c, opts.rho11_i)?,
            QuantifierMethod::CoherenceModulus => quantifier_from_coherences(
                mean_rho13(&sim, &lv.windows.initial),
                mean_rho13(&sim, &lv.windows.steady),
                mean_rho13(&sim, &lv.windows.fall),
                p.omega_p,
                p.omega_c,
                opts.rho11_i,
            )?,
        };
        Ok::<_, Error>((lv, c))
    })?;
    let (levels, values): (Vec<LevelExtraction>, Vec<f64>) = samples.into_iter().unzip();
    Ok(QuantifierProfile {
        spectrum: RealSpectrum::new(delta, values, SpectrumKind::QuantifierC)?,
        rho11_i: opts.rho11_i,
        control_off: false,
        levels,
    })
}

/// γ3 = 2π·6.0 MHz, the excited-state linewidth of the pulsed experiment.
pub const GAMMA3_REFERENCE: f64 = 2.0 * PI * 6.0;

/// Drive parameters of the pulsed experiment: γ13 = γ23 = γ3/2,
/// Ωp = 2.5·10⁻³γ3, Ωc = 0.23γ3, with γ12 = `gamma12_over_gamma13`·γ13.
pub fn pulsed_reference(gamma12_over_gamma13: f64) -> SystemParams {
    let g13 = 0.5 * GAMMA3_REFERENCE;
    SystemParams {
        gamma13: g13,
        gamma12: gamma12_over_gamma13 * g13,
        gamma23: g13,
        omega_p: 2.5e-3 * GAMMA3_REFERENCE,
        omega_c: 0.23 * GAMMA3_REFERENCE,
        delta_c: 0.0,
    }
}

/// Family-B sweep over Ωc/γ13 using simulated quantifier profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifierScanConfig {
    pub base: SystemParams,
    pub schedule: PulseSchedule,
    pub alpha: f64,
    pub omega_c_grid: Vec<f64>,
    pub grid: GridSpec,
    #[serde(default)]
    pub profile: ProfileOptions,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub execution: Execution,
}

impl QuantifierScanConfig {
    pub fn reference(gamma12_over_gamma13: f64, omega_c_grid: Vec<f64>) -> Self {
        QuantifierScanConfig {
            base: pulsed_reference(gamma12_over_gamma13),
            schedule: PulseSchedule::default(),
            alpha: 1.0,
            omega_c_grid,
            grid: GridSpec {
                half_span_gamma13: 4.0,
                points: 161,
            },
            profile: ProfileOptions::default(),
            fit: FitOptions::default(),
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.schedule.validate()?;
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid("alpha", "must be finite and > 0"));
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
        Ok(())
    }
}

/// One Ωc point of a quantifier sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifierPoint {
    pub profile: QuantifierProfile,
    pub comparison: crate::fitting::ComparisonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifierScan {
    pub scan: ScanResult,
    pub points: Vec<QuantifierPoint>,
}

pub fn quantifier_scan(cfg: &QuantifierScanConfig) -> Result<QuantifierScan> {
    cfg.validate()?;
    let grid = cfg.grid.build(cfg.base.gamma13)?;
    let profile_opts = ProfileOptions {
        execution: cfg.execution,
        ..cfg.profile
    };
    let profiles = par::try_map(cfg.execution, &cfg.omega_c_grid, |_, &ratio| {
        let p = cfg.base.with_omega_c_ratio(ratio);
        quantifier_profile_with(&p, &cfg.schedule, &grid, cfg.alpha, &profile_opts)
    })?;
    scan_profiles(&cfg.omega_c_grid, profiles, &cfg.fit, cfg.execution)
}

/// Family-B comparison of one profile per Ωc/γ13 in `omega_c_grid`.
///
/// Point `i` fits with seed `mix_seed(fit.seed, i, 0)`, so simulated and
/// ingested profiles of the same data give the same weights.
pub fn scan_profiles(
    omega_c_grid: &[f64],
    profiles: Vec<QuantifierProfile>,
    fit: &FitOptions,
    execution: Execution,
) -> Result<QuantifierScan> {
    if omega_c_grid.len() != profiles.len() {
        return Err(Error::invalid(
            "profiles",
            format!("{} profiles for {} grid points", profiles.len(), omega_c_grid.len()),
        ));
    }
    let comparisons = par::try_map(execution, &profiles, |i, profile| {
        let opts = fit.clone().with_seed(mix_seed(fit.seed, i as u64, 0));
        compare(&profile.spectrum, ModelFamily::B, &opts)
    })?;
    let points: Vec<QuantifierPoint> = profiles
        .into_iter()
        .zip(comparisons)
        .map(|(profile, comparison)| QuantifierPoint { profile, comparison })
        .collect();
    let rows: Vec<ScanRow> = omega_c_grid
        .iter()
        .zip(&points)
        .map(|(&ratio, pt)| {
            let c = &pt.comparison;
            ScanRow {
                omega_c_over_gamma13: ratio,
                w_eit: c.w_eit,
                w_ats: c.w_ats,
                wbar_eit: c.wbar_eit,
                wbar_ats: c.wbar_ats,
                per_seed: Vec::new(),
                rss_eit: c.eit.rss,
                rss_ats: c.ats.rss,
            }
        })
        .collect();
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| (r.omega_c_over_gamma13, r.w_eit, r.w_ats))
        .collect();
    Ok(QuantifierScan {
        scan: ScanResult {
            family: ModelFamily::B,
            noise_sigma: 0.0,
            transition: find_transition(&pts),
            rows,
        },
        points,
    })
}

/// C(δ) from measured traces that share one control strength, in detuning order.
pub fn profile_from_traces(
    traces: &[TransientTrace],
    settle_fraction: f64,
    rho11_i: f64,
) -> Result<QuantifierProfile> {
    let Some(first) = traces.first() else {
        return Err(Error::invalid("traces", "need at least one trace"));
    };
    if traces.iter().any(|t| t.omega_c != first.omega_c) {
        return Err(Error::invalid("traces", "all traces must share one omega_c"));
    }
    let mut order: Vec<&TransientTrace> = traces.iter().collect();
    order.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let mut delta = Vec::with_capacity(order.len());
    let mut levels = Vec::with_capacity(order.len());
    let mut values = Vec::with_capacity(order.len());
    for t in order {
        let lv = extract_levels(t, settle_fraction)?;
        values.push(quantifier(&lv, t.omega_p, t.omega_c, rho11_i)?);
        delta.push(t.delta);
        levels.push(lv);
    }
    Ok(QuantifierProfile {
        spectrum: RealSpectrum::new(delta, values, SpectrumKind::QuantifierC)?,
        rho11_i,
        control_off: false,
        levels,
    })
}

/// Metadata stored next to a measured trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSidecar {
    pub t_start_us: f64,
    pub t_width_us: f64,
    pub t_total_us: f64,
    pub alpha: f64,
    pub delta_mhz: f64,
    pub omega_p_mhz: f64,
    pub omega_c_mhz: f64,
}

impl From<&TransientTrace> for TraceSidecar {
    fn from(t: &TransientTrace) -> Self {
        TraceSidecar {
            t_start_us: t.schedule.t_start,
            t_width_us: t.schedule.t_width,
            t_total_us: t.schedule.t_total,
            alpha: t.alpha,
            delta_mhz: t.delta,
            omega_p_mhz: t.omega_p,
            omega_c_mhz: t.omega_c,
        }
    }
}

/// Reads a `time_us,transmission` CSV and its JSON sidecar.
pub fn ingest_trace(csv_path: &Path, sidecar_path: &Path) -> Result<TransientTrace> {
    let csv_text = std::fs::read_to_string(csv_path)?;
    let sidecar_text = std::fs::read_to_string(sidecar_path)?;
    parse_trace(&csv_text, &sidecar_text)
}

/// Sidecar path conventionally paired with a trace CSV (`trace.csv` → `trace.json`).
pub fn sidecar_path_for(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

pub fn parse_trace(csv_text: &str, sidecar_text: &str) -> Result<TransientTrace> {
    let side: TraceSidecar = serde_json::from_str(sidecar_text).map_err(|e| {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => Error::Schema(format!("sidecar: {e}")),
            _ => Error::Parse {
                line: e.line() as u64,
                message: format!("sidecar: {e}"),
            },
        }
    })?;
    let schedule = PulseSchedule::new(side.t_start_us, side.t_width_us, side.t_total_us)
        .map_err(|e| Error::Schema(format!("sidecar schedule: {e}")))?;
    if !(side.alpha.is_finite() && side.alpha > 0.0) {
        return Err(Error::Schema("sidecar: alpha must be finite and > 0".into()));
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if header.iter().collect::<Vec<_>>() != ["time_us", "transmission"] {
        return Err(Error::Schema(format!(
            "expected header `time_us,transmission`, found `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut transmission = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = rec.get(i).unwrap_or_default();
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("{name}: cannot parse `{raw}` as a number"),
            })
        };
        let t = field(0, "time_us")?;
        let v = field(1, "transmission")?;
        if !t.is_finite() {
            return Err(Error::InvariantViolation(format!("line {line}: time must be finite")));
        }
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::InvariantViolation(format!(
                    "line {line}: times must be strictly increasing ({t} after {prev})"
                )));
            }
        }
        if !(v.is_finite() && v > 0.0 && v <= MAX_TRANSMISSION) {
            return Err(Error::InvariantViolation(format!(
                "line {line}: transmission {v} outside (0, {MAX_TRANSMISSION}]"
            )));
        }
        times.push(t);
        transmission.push(v);
    }
    match (times.first(), times.last()) {
        (Some(&first), Some(&last)) if first <= schedule.t_start && last >= schedule.t_end() => {}
        (Some(_), Some(_)) => {
            return Err(Error::InvariantViolation(
                "trace does not span the control pulse given in the sidecar".into(),
            ))
        }
        _ => return Err(Error::InvariantViolation("trace has no samples".into())),
    }
    Ok(TransientTrace {
        times,
        transmission,
        schedule,
        alpha: side.alpha,
        delta: side.delta_mhz,
        omega_p: side.omega_p_mhz,
        omega_c: side.omega_c_mhz,
    })
}

fn csv_error(e: csv::Error, fallback_line: u64) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{corrected_rho13, steady_state_rho13};

    fn fig4() -> SystemParams {
        pulsed_reference(0.05)
    }

    fn short_schedule() -> PulseSchedule {
        PulseSchedule::new(2.0, 4.0, 8.0).unwrap()
    }

    #[test]
    fn min_eigenvalue_matches_nalgebra() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let mut a = Density::zeros();
            for j in 0..3 {
                a[(j, j)] = Complex64::from(rng.random_range(-1.0..1.0));
                for k in (j + 1)..3 {
                    let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    a[(j, k)] = z;
                    a[(k, j)] = z.conj();
                }
            }
            let reference = a
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!((min_eigenvalue_hermitian(&a) - reference).abs() < 1e-9);
        }
        let pure = Density::from_diagonal(&nalgebra::Vector3::new(
            Complex64::from(0.5),
            Complex64::from(0.5),
            Complex64::from(0.0),
        ));
        assert!(min_eigenvalue_hermitian(&pure).abs() < 1e-12);
    }

    #[test]
    fn relaxation_rates_reproduce_damping() {
        let r = Relaxation::new(&fig4()).unwrap();
        let p = fig4();
        assert!((r.to_1 + r.to_2 - (p.gamma13 + p.gamma23 - p.gamma12)).abs() < 1e-12);
        let bad = SystemParams {
            gamma23: p.gamma13 + 2.0 * p.gamma12,
            ..p
        };
        assert!(matches!(Relaxation::new(&bad), Err(Error::NonPhysicalParams(_))));
    }

    #[test]
    fn schedule_validation() {
        assert!(PulseSchedule::new(10.0, 10.0, 50.0).is_ok());
        assert!(PulseSchedule::new(10.0, 40.0, 50.0).is_err());
        assert!(PulseSchedule::new(-1.0, 10.0, 50.0).is_err());
        assert!(PulseSchedule::new(1.0, 0.0, 50.0).is_err());
    }

    #[test]
    fn step_limit_enforced() {
        let p = fig4();
        let s = short_schedule();
        let err = integrate_obe(&p, &s, 0.0, 2.0 * max_dt(&p), 1.0).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge(_)));
    }

    #[test]
    fn two_level_steady_state_without_control() {
        let p = SystemParams {
            omega_p: 0.01,
            ..fig4().with_omega_c(0.0)
        };
        let s = short_schedule();
        let settings = ObeSettings {
            dt: max_dt(&p),
            alpha: 1.0,
            rho11_i: 1.0,
        };
        let sim = simulate(&p, &s, 0.0, &settings).unwrap();
        let k = sim.trace.times.iter().position(|&t| t >= 10.0 / p.gamma13).unwrap();
        let pops = sim.populations[k];
        let expected = steady_state_rho13(&p, 0.0).unwrap() * (pops.rho11 - pops.rho33);
        let got = sim.rho13[k];
        assert!((got - expected).norm() / expected.norm() < 1e-4, "{got} vs {expected}");
    }

    #[test]
    fn plateau_matches_corrected_form() {
        let p = fig4();
        let s = short_schedule();
        for delta in [0.0, 3.0, -7.5] {
            let settings = ObeSettings {
                dt: default_dt(&p, delta),
                alpha: 1.0,
                rho11_i: THERMAL_RHO11,
            };
            let sim = simulate(&p, &s, delta, &settings).unwrap();
            let pops = sim.populations_at_pulse_end();
            let expected = corrected_rho13(&p, &pops, delta).unwrap();
            let got = sim.rho_at_pulse_end[(0, 2)];
            assert!(
                ((got.im - expected.im) / expected.im).abs() < 1e-3,
                "δ = {delta}: {} vs {}",
                got.im,
                expected.im
            );
        }
    }

    #[test]
    fn transparency_raises_transmission() {
        let p = fig4();
        let s = short_schedule();
        let tr = integrate_obe(&p, &s, 0.0, max_dt(&p), 1.0).unwrap();
        let lv = extract_levels(&tr, DEFAULT_SETTLE_FRACTION).unwrap();
        assert!(lv.h_s > lv.h_i);
        assert!(lv.h_f < lv.h_i, "pumping into |1⟩ raises absorption after switch-off");
    }

    #[test]
    fn quantifier_hand_values() {
        let w = Window {
            from: 0.0,
            to: 1.0,
            samples: 10,
        };
        let windows = LevelWindows {
            initial: w,
            steady: w,
            fall: w,
        };
        let lv = LevelExtraction {
            h_i: (-1.0f64).exp(),
            h_s: (-0.5f64).exp(),
            h_f: (-0.9f64).exp(),
            windows,
        };
        let c = quantifier(&lv, 0.1, 1.0, 0.5).unwrap();
        assert!((c - 0.02).abs() < 1e-15);
        let flat = LevelExtraction {
            h_s: 0.7,
            h_f: 0.7,
            ..lv
        };
        assert_eq!(quantifier(&flat, 0.1, 1.0, 0.5).unwrap(), 0.0);
        let unit = LevelExtraction { h_i: 1.0, ..lv };
        assert!(matches!(quantifier(&unit, 0.1, 1.0, 0.5), Err(Error::DivisionByZero)));
    }

    #[test]
    fn short_windows_rejected() {
        let s = PulseSchedule::new(1.0, 1.0, 3.0).unwrap();
        let times: Vec<f64> = (0..=30).map(|k| k as f64 * 0.1).collect();
        let trace = TransientTrace {
            transmission: vec![0.9; times.len()],
            times,
            schedule: s,
            alpha: 1.0,
            delta: 0.0,
            omega_p: 0.1,
            omega_c: 1.0,
        };
        assert!(matches!(extract_levels(&trace, 0.02), Err(Error::WindowTooShort(_))));
    }

    #[test]
    fn zero_control_profile_is_flagged() {
        let p = fig4().with_omega_c(0.0);
        let grid = DetuningGrid::uniform(-5.0, 5.0, 11).unwrap();
        let prof = quantifier_profile(&p, &short_schedule(), &grid, 1.0).unwrap();
        assert!(prof.control_off);
        assert!(prof.spectrum.values.iter().all(|&v| v == 0.0));
    }

    const SIDECAR: &str = r#"{"t_start_us": 1.0, "t_width_us": 2.0, "t_total_us": 5.0,
        "alpha": 1.0, "delta_mhz": 0.0, "omega_p_mhz": 0.1, "omega_c_mhz": 1.0}"#;

    #[test]
    fn ingest_well_formed() {
        let csv = "time_us,transmission\n0,0.9\n1.5,0.95\n3.5,0.9\n5,0.9\n";
        let tr = parse_trace(csv, SIDECAR).unwrap();
        assert_eq!(tr.times.len(), 4);
        assert_eq!(tr.transmission.len(), 4);
        assert_eq!(tr.schedule.t_width, 2.0);
    }

    #[test]
    fn ingest_rejects_bad_traces() {
        let over = "time_us,transmission\n0,0.9\n1.5,1.3\n3.5,0.9\n";
        assert!(matches!(parse_trace(over, SIDECAR), Err(Error::InvariantViolation(_))));
        let unordered = "time_us,transmission\n0,0.9\n2,0.9\n1.5,0.9\n4,0.9\n";
        assert!(matches!(parse_trace(unordered, SIDECAR), Err(Error::InvariantViolation(_))));
        let garbled = "time_us,transmission\n0,0.9\n1.5,abc\n";
        match parse_trace(garbled, SIDECAR) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let header = "t,T\n0,0.9\n";
        assert!(matches!(parse_trace(header, SIDECAR), Err(Error::Schema(_))));
        let missing = r#"{"t_start_us": 1.0}"#;
        assert!(matches!(
            parse_trace("time_us,transmission\n0,0.9\n", missing),
            Err(Error::Schema(_))
        ));
    }
}
