//! Steady-state response of the Λ system and its dressed-state decomposition.
//!
//! Conventions: `delta` is the two-photon detuning δ = Δp − Δc. The closed forms
//! [`steady_state_rho12`] and [`steady_state_rho13`] are returned exactly as the
//! first-order solution of the Bloch equations gives them, with ρ13 = ⟨1|ρ|3⟩.
//! In that convention an absorbing probe has Im ρ13 < 0; the pole-sum
//! representation carries the opposite overall sign for ρ13 (see
//! [`RHO13_POLE_SUM_SIGN`]). Spectra of kind [`SpectrumKind::ImRho13`] store the
//! absorption-positive value `-Im ρ13`, which is what the lineshape models describe.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative tolerance (in units of γ13) below which the two poles are treated as degenerate.
pub const DEGENERATE_POLE_TOL: f64 = 1e-9;

/// `closed_form_rho12 = RHO12_POLE_SUM_SIGN * pole_sum_rho12`.
pub const RHO12_POLE_SUM_SIGN: f64 = 1.0;
/// `closed_form_rho13 = RHO13_POLE_SUM_SIGN * pole_sum_rho13`.
pub const RHO13_POLE_SUM_SIGN: f64 = -1.0;

/// Physical rates and detunings of the Λ system, all in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Decay |3⟩→|1⟩; damping of the probe coherence ρ13.
    #[serde(rename = "gamma13_mhz")]
    pub gamma13: f64,
    /// Ground-state decoherence (damping of ρ12).
    #[serde(rename = "gamma12_mhz")]
    pub gamma12: f64,
    /// Decay |3⟩→|2⟩; damping of the control coherence ρ23.
    #[serde(rename = "gamma23_mhz")]
    pub gamma23: f64,
    /// Probe Rabi frequency magnitude.
    #[serde(rename = "omega_p_mhz")]
    pub omega_p: f64,
    /// Control Rabi frequency magnitude.
    #[serde(rename = "omega_c_mhz")]
    pub omega_c: f64,
    /// Control detuning Δc.
    #[serde(rename = "delta_c_mhz")]
    pub delta_c: f64,
}

impl SystemParams {
    pub fn new(
        gamma13: f64,
        gamma12: f64,
        gamma23: f64,
        omega_p: f64,
        omega_c: f64,
        delta_c: f64,
    ) -> Result<Self> {
        let p = SystemParams {
            gamma13,
            gamma12,
            gamma23,
            omega_p,
            omega_c,
            delta_c,
        };
        p.validate()?;
        Ok(p)
    }

    /// The reference configuration of the control-field sweeps: γ13 = 3 MHz,
    /// γ12 = 0.01 MHz, γ23 = γ13, Δc = 0, Ωp = 0.01 γ13, control off.
    pub fn reference() -> Self {
        SystemParams {
            gamma13: 3.0,
            gamma12: 0.01,
            gamma23: 3.0,
            omega_p: 0.03,
            omega_c: 0.0,
            delta_c: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gamma13", self.gamma13),
            ("gamma12", self.gamma12),
            ("gamma23", self.gamma23),
            ("omega_p", self.omega_p),
            ("omega_c", self.omega_c),
            ("delta_c", self.delta_c),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.gamma13 <= 0.0 {
            return Err(Error::invalid("gamma13", "must be > 0"));
        }
        for (name, v) in [
            ("gamma12", self.gamma12),
            ("gamma23", self.gamma23),
            ("omega_p", self.omega_p),
            ("omega_c", self.omega_c),
        ] {
            if v < 0.0 {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        if self.gamma12 >= self.gamma13 {
            return Err(Error::invalid("gamma12", "must be < gamma13"));
        }
        Ok(())
    }

    pub fn with_omega_c(mut self, omega_c: f64) -> Self {
        self.omega_c = omega_c;
        self
    }

    /// Sets Ωc from the dimensionless ratio Ωc/γ13.
    pub fn with_omega_c_ratio(self, ratio: f64) -> Self {
        let g = self.gamma13;
        self.with_omega_c(ratio * g)
    }

    pub fn omega_c_ratio(&self) -> f64 {
        self.omega_c / self.gamma13
    }

    /// Control strength (γ13 − γ12)/2 at which the two poles coincide for Δc = 0.
    pub fn threshold_omega_c(&self) -> f64 {
        0.5 * (self.gamma13 - self.gamma12)
    }
}

/// Zeroth-order level populations ρii⁽⁰⁾.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub rho11: f64,
    pub rho22: f64,
    pub rho33: f64,
}

impl Populations {
    pub fn new(rho11: f64, rho22: f64, rho33: f64) -> Result<Self> {
        let p = Populations {
            rho11,
            rho22,
            rho33,
        };
        p.validate()?;
        Ok(p)
    }

    /// All population in the probe ground state.
    pub fn ground() -> Self {
        Populations {
            rho11: 1.0,
            rho22: 0.0,
            rho33: 0.0,
        }
    }

    /// ρ11 + ρ22 = 1, ρ33 = 0 with the given ρ22/ρ11.
    pub fn from_ground_ratio(ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::invalid("ratio", format!("must lie in [0, 1], got {ratio}")));
        }
        let rho11 = 1.0 / (1.0 + ratio);
        Populations::new(rho11, 1.0 - rho11, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho11", self.rho11), ("rho22", self.rho22), ("rho33", self.rho33)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if self.rho11 + self.rho22 + self.rho33 > 1.0 + 1e-12 {
            return Err(Error::invalid("populations", "sum exceeds 1"));
        }
        Ok(())
    }
}

/// Shared denominator multiplied through by (δ − iγ12):
/// (δ + Δc − iγ13)(δ − iγ12) − |Ωc|².
///
/// Removes the removable singularity of the textbook form at γ12 = 0, δ = 0.
fn cleared_denominator(p: &SystemParams, delta: f64) -> Complex64 {
    Complex64::new(delta + p.delta_c, -p.gamma13) * Complex64::new(delta, -p.gamma12)
        - p.omega_c * p.omega_c
}

fn check_finite(z: Complex64, what: &str) -> Result<Complex64> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(z)
    } else {
        Err(Error::NonFiniteResult(what.to_string()))
    }
}

/// Ground-state coherence ρ12 in steady state.
pub fn steady_state_rho12(p: &SystemParams, delta: f64) -> Result<Complex64> {
    if p.omega_c == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let den = cleared_denominator(p, delta);
    if den.norm() == 0.0 {
        return Err(Error::NonFiniteResult(format!("rho12 denominator vanishes at δ = {delta}")));
    }
    check_finite(Complex64::from(p.omega_p * p.omega_c) / den, "rho12")
}

/// Probe coherence ρ13 in steady state.
pub fn steady_state_rho13(p: &SystemParams, delta: f64) -> Result<Complex64> {
    let value = if p.omega_c == 0.0 {
        -p.omega_p / Complex64::new(delta + p.delta_c, -p.gamma13)
    } else {
        let den = cleared_denominator(p, delta);
        if den.norm() == 0.0 {
            return Err(Error::NonFiniteResult(format!(
                "rho13 denominator vanishes at δ = {delta}"
            )));
        }
        -p.omega_p * Complex64::new(delta, -p.gamma12) / den
    };
    check_finite(value, "rho13")
}

/// Complex dressed-state poles δ±.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DressedPoles {
    pub plus: Complex64,
    pub minus: Complex64,
}

/// Poles together with the residue strengths of ρ13 (A±) and ρ12 (B±).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoleDecomposition {
    pub delta_plus: Complex64,
    pub delta_minus: Complex64,
    pub a_plus: Complex64,
    pub a_minus: Complex64,
    pub b_plus: Complex64,
    pub b_minus: Complex64,
}

/// δ± = ½[−Δc + i(γ13+γ12) ± √(4|Ωc|² + (Δc − i(γ13−γ12))²)], principal branch.
pub fn dressed_poles(p: &SystemParams) -> DressedPoles {
    let g = p.gamma13 - p.gamma12;
    // (Δc − ig)² expanded so a zero imaginary part is +0 and the branch is fixed.
    let arg = Complex64::new(
        4.0 * p.omega_c * p.omega_c + p.delta_c * p.delta_c - g * g,
        -2.0 * p.delta_c * g + 0.0,
    );
    let root = arg.sqrt();
    let center = Complex64::new(-p.delta_c, p.gamma13 + p.gamma12);
    DressedPoles {
        plus: 0.5 * (center + root),
        minus: 0.5 * (center - root),
    }
}

/// Full pole/residue decomposition. Fails when the poles are degenerate.
pub fn residues(p: &SystemParams) -> Result<PoleDecomposition> {
    let DressedPoles { plus, minus } = dressed_poles(p);
    let split = plus - minus;
    let tolerance = DEGENERATE_POLE_TOL * p.gamma13;
    if split.norm() < tolerance {
        return Err(Error::DegeneratePoles {
            separation: split.norm(),
            tolerance,
        });
    }
    let ig12 = I * p.gamma12;
    Ok(PoleDecomposition {
        delta_plus: plus,
        delta_minus: minus,
        a_plus: (plus - ig12) / split,
        a_minus: -(minus - ig12) / split,
        b_plus: Complex64::from(p.omega_c) / split,
        b_minus: Complex64::from(-p.omega_c) / split,
    })
}

impl PoleDecomposition {
    /// Ωp·(B+/(δ−δ+) + B−/(δ−δ−)).
    pub fn pole_sum_rho12(&self, omega_p: f64, delta: f64) -> Complex64 {
        let d = Complex64::from(delta);
        omega_p * (self.b_plus / (d - self.delta_plus) + self.b_minus / (d - self.delta_minus))
    }

    /// Ωp·(A+/(δ−δ+) + A−/(δ−δ−)).
    pub fn pole_sum_rho13(&self, omega_p: f64, delta: f64) -> Complex64 {
        let d = Complex64::from(delta);
        omega_p * (self.a_plus / (d - self.delta_plus) + self.a_minus / (d - self.delta_minus))
    }
}

fn correction_denominator(p: &SystemParams) -> Result<Complex64> {
    if p.gamma23 == 0.0 && p.delta_c == 0.0 {
        return Err(Error::InvalidCorrection);
    }
    Ok(Complex64::new(p.delta_c, p.gamma23))
}

/// ρ12 corrected to first order for the population distribution `pops`.
pub fn corrected_rho12(p: &SystemParams, pops: &Populations, delta: f64) -> Result<Complex64> {
    let d23 = correction_denominator(p)?;
    let ideal = steady_state_rho12(p, delta)?;
    let bracket = Complex64::from(pops.rho11 - pops.rho33)
        - Complex64::new(delta + p.delta_c, -p.gamma13) / d23 * (pops.rho22 - pops.rho33);
    check_finite(ideal * bracket, "corrected rho12")
}

/// ρ13 corrected to first order for the population distribution `pops`.
pub fn corrected_rho13(p: &SystemParams, pops: &Populations, delta: f64) -> Result<Complex64> {
    let d23 = correction_denominator(p)?;
    let ideal = steady_state_rho13(p, delta)?;
    let pumped = if p.omega_c == 0.0 {
        Complex64::from(0.0)
    } else {
        p.omega_c * p.omega_c / (d23 * Complex64::new(delta, -p.gamma12))
    };
    let bracket = Complex64::from(pops.rho11 - pops.rho33) - pumped * (pops.rho22 - pops.rho33);
    check_finite(ideal * bracket, "corrected rho13")
}

/// Strictly increasing list of two-photon detunings (MHz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DetuningGrid(Vec<f64>);

impl DetuningGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        validate_grid(&points)?;
        Ok(DetuningGrid(points))
    }

    /// `n` uniform points covering `[lo, hi]` inclusive.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidGrid(format!(
                "need n >= 2 and hi > lo (got n = {n}, [{lo}, {hi}])"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut pts: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        pts[n - 1] = hi;
        if n % 2 == 1 && lo == -hi {
            pts[n / 2] = 0.0;
        }
        DetuningGrid::new(pts)
    }

    /// 2001 points over ±5γ13.
    pub fn default_for(gamma13: f64) -> Self {
        DetuningGrid::uniform(-5.0 * gamma13, 5.0 * gamma13, 2001)
            .expect("gamma13 > 0 gives a valid grid")
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for DetuningGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        DetuningGrid::new(v)
    }
}

impl From<DetuningGrid> for Vec<f64> {
    fn from(g: DetuningGrid) -> Self {
        g.0
    }
}

pub(crate) fn validate_grid(points: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidGrid("grid is empty".into()));
    }
    if let Some(bad) = points.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidGrid(format!("non-finite grid point {bad}")));
    }
    if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!(
            "grid not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpectrumKind {
    /// Absorption-positive probe response, −Im ρ13 in the closed-form convention.
    ImRho13,
    AbsRho12,
    QuantifierC,
}

impl SpectrumKind {
    pub fn is_nonnegative(self) -> bool {
        matches!(self, SpectrumKind::AbsRho12 | SpectrumKind::QuantifierC)
    }
}

/// Complex samples on a detuning grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpectrum {
    pub delta: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn new(delta: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        validate_grid(&delta)?;
        if delta.len() != values.len() {
            return Err(Error::InvariantViolation(format!(
                "grid has {} points but {} values",
                delta.len(),
                values.len()
            )));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvariantViolation("non-finite spectrum value".into()));
        }
        Ok(ComplexSpectrum { delta, values })
    }
}

/// Real samples on a detuning grid, tagged with the quantity they represent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealSpectrum {
    pub delta: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
}

impl RealSpectrum {
    /// Validated constructor; nonnegative kinds must not contain negative samples.
    pub fn new(delta: Vec<f64>, values: Vec<f64>, kind: SpectrumKind) -> Result<Self> {
        let s = RealSpectrum::unchecked_sign(delta, values, kind)?;
        if kind.is_nonnegative() {
            if let Some(v) = s.values.iter().find(|v| **v < 0.0) {
                return Err(Error::InvariantViolation(format!(
                    "{kind:?} spectrum has negative value {v}"
                )));
            }
        }
        Ok(s)
    }

    /// Same as [`RealSpectrum::new`] but allows negative samples of any kind,
    /// as produced by additive noise.
    pub fn unchecked_sign(delta: Vec<f64>, values: Vec<f64>, kind: SpectrumKind) -> Result<Self> {
        validate_grid(&delta)?;
        if delta.len() != values.len() {
            return Err(Error::InvariantViolation(format!(
                "grid has {} points but {} values",
                delta.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation("non-finite spectrum value".into()));
        }
        Ok(RealSpectrum {
            delta,
            values,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest absolute sample.
    pub fn peak_amplitude(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Copy scaled so that the largest absolute sample is 1.
    pub fn normalized(&self) -> Result<RealSpectrum> {
        let peak = self.peak_amplitude();
        if peak == 0.0 {
            return Err(Error::DegenerateData("cannot normalise an all-zero spectrum".into()));
        }
        Ok(RealSpectrum {
            delta: self.delta.clone(),
            values: self.values.iter().map(|v| v / peak).collect(),
            kind: self.kind,
        })
    }

    pub fn local_maxima(&self) -> Vec<usize> {
        local_maxima(&self.values)
    }
}

/// Indices of interior local maxima; a flat top counts once (at its first index).
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = values.len();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Samples the requested quantity on `grid`; the population-corrected forms
/// are used when `pops` is given.
pub fn synthesize_spectrum(
    p: &SystemParams,
    pops: Option<&Populations>,
    grid: &DetuningGrid,
    kind: SpectrumKind,
) -> Result<RealSpectrum> {
    p.validate()?;
    if let Some(pp) = pops {
        pp.validate()?;
    }
    let values = grid
        .points()
        .iter()
        .map(|&d| match kind {
            SpectrumKind::ImRho13 => {
                let r = match pops {
                    Some(pp) => corrected_rho13(p, pp, d)?,
                    None => steady_state_rho13(p, d)?,
                };
                Ok(-r.im)
            }
            SpectrumKind::AbsRho12 => {
                let r = match pops {
                    Some(pp) => corrected_rho12(p, pp, d)?,
                    None => steady_state_rho12(p, d)?,
                };
                Ok(r.norm())
            }
            SpectrumKind::QuantifierC => Err(Error::invalid(
                "kind",
                "QUANTIFIER_C spectra come from the dynamics module",
            )),
        })
        .collect::<Result<Vec<f64>>>()?;
    RealSpectrum::new(grid.points().to_vec(), values, kind)
}

/// Which coherence a complex spectrum holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coherence {
    Rho12,
    Rho13,
}

pub fn synthesize_complex(
    p: &SystemParams,
    pops: Option<&Populations>,
    grid: &DetuningGrid,
    which: Coherence,
) -> Result<ComplexSpectrum> {
    let values = grid
        .points()
        .iter()
        .map(|&d| match (which, pops) {
            (Coherence::Rho12, None) => steady_state_rho12(p, d),
            (Coherence::Rho12, Some(pp)) => corrected_rho12(p, pp, d),
            (Coherence::Rho13, None) => steady_state_rho13(p, d),
            (Coherence::Rho13, Some(pp)) => corrected_rho13(p, pp, d),
        })
        .collect::<Result<Vec<_>>>()?;
    ComplexSpectrum::new(grid.points().to_vec(), values)
}
