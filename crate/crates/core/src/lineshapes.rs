//! Candidate lineshapes for the EIT/ATS comparison.
//!
//! | kind    | θ                  | model                                              |
//! |---------|--------------------|----------------------------------------------------|
//! | `A_EIT` | (S+, S−, γ+, γ−)   | S+²/(δ²+γ+²) − S−²/(δ²+γ−²)                         |
//! | `A_ATS` | (S, δ0, γ)         | S²[1/((δ−δ0)²+γ²) + 1/((δ+δ0)²+γ²)]                 |
//! | `B_EIT` | (P1, γ+, γ−)       | P1(γ+−γ−)/√((δ²+γ+²)(δ²+γ−²))                        |
//! | `B_ATS` | (P2, Ω, γ)         | P2·Ω/√(δ⁴ + 2δ²(γ²−Ω²) + (γ²+Ω²)²)                   |
//!
//! The θ ordering is part of the serialized format and must not change.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::RealSpectrum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "A_EIT")]
    AEit,
    #[serde(rename = "A_ATS")]
    AAts,
    #[serde(rename = "B_EIT")]
    BEit,
    #[serde(rename = "B_ATS")]
    BAts,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::AEit, ModelKind::AAts, ModelKind::BEit, ModelKind::BAts];

    /// Number of free model parameters K.
    pub fn parameter_count(self) -> usize {
        match self {
            ModelKind::AEit => 4,
            ModelKind::AAts | ModelKind::BEit | ModelKind::BAts => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::AEit => "A_EIT",
            ModelKind::AAts => "A_ATS",
            ModelKind::BEit => "B_EIT",
            ModelKind::BAts => "B_ATS",
        }
    }

    /// Evaluates the model for an ordered θ without validation.
    #[inline]
    pub fn eval(self, theta: &[f64], delta: f64) -> f64 {
        let d2 = delta * delta;
        match self {
            ModelKind::AEit => {
                let (sp, sm, gp, gm) = (theta[0], theta[1], theta[2], theta[3]);
                sp * sp / (d2 + gp * gp) - sm * sm / (d2 + gm * gm)
            }
            ModelKind::AAts => {
                let (s, d0, g) = (theta[0], theta[1], theta[2]);
                let g2 = g * g;
                let a = delta - d0;
                let b = delta + d0;
                s * s * (1.0 / (a * a + g2) + 1.0 / (b * b + g2))
            }
            ModelKind::BEit => {
                let (p1, gp, gm) = (theta[0], theta[1], theta[2]);
                p1 * (gp - gm) / ((d2 + gp * gp) * (d2 + gm * gm)).sqrt()
            }
            ModelKind::BAts => {
                let (p2, om, g) = (theta[0], theta[1], theta[2]);
                let g2 = g * g;
                let o2 = om * om;
                let s = g2 + o2;
                p2 * om / (d2 * d2 + 2.0 * d2 * (g2 - o2) + s * s).sqrt()
            }
        }
    }

    /// Maps θ to the unconstrained coordinates the optimiser works in.
    ///
    /// Widths enter through their logarithm. The B models are carried by their
    /// overall amplitude (P1(γ+−γ−) and P2·Ω), which stays finite on the
    /// boundaries γ+ → γ− and Ω → 0 that the wrong-regime fits approach.
    pub(crate) fn to_internal(self, theta: &[f64]) -> Vec<f64> {
        match self {
            ModelKind::AEit => vec![theta[0], theta[1], theta[2].ln(), theta[3].ln()],
            ModelKind::AAts => vec![theta[0], theta[1], theta[2].ln()],
            ModelKind::BEit => {
                let (p1, gp, gm) = (theta[0], theta[1], theta[2]);
                vec![(p1 * (gp - gm)).ln(), gm.ln(), (gp - gm).ln()]
            }
            ModelKind::BAts => {
                let (p2, om, g) = (theta[0], theta[1], theta[2]);
                vec![(p2 * om).ln(), om.ln(), g.ln()]
            }
        }
    }

    /// Inverse of [`ModelKind::to_internal`], written into `theta`.
    #[inline]
    pub(crate) fn theta_from_internal(self, u: &[f64], theta: &mut [f64]) {
        match self {
            ModelKind::AEit => {
                theta[0] = u[0];
                theta[1] = u[1];
                theta[2] = u[2].exp();
                theta[3] = u[3].exp();
            }
            ModelKind::AAts => {
                theta[0] = u[0];
                theta[1] = u[1];
                theta[2] = u[2].exp();
            }
            ModelKind::BEit => {
                let gm = u[1].exp();
                let gap = u[2].exp();
                theta[0] = u[0].exp() / gap;
                theta[1] = gm + gap;
                theta[2] = gm;
            }
            ModelKind::BAts => {
                let om = u[1].exp();
                theta[0] = u[0].exp() / om;
                theta[1] = om;
                theta[2] = u[2].exp();
            }
        }
    }

    /// Folds sign symmetries of the model into the documented ranges
    /// (amplitudes and δ0 nonnegative). Never changes the model values.
    pub(crate) fn canonicalize(self, theta: &mut [f64]) {
        match self {
            ModelKind::AEit => {
                theta[0] = theta[0].abs();
                theta[1] = theta[1].abs();
            }
            ModelKind::AAts => {
                theta[0] = theta[0].abs();
                theta[1] = theta[1].abs();
            }
            ModelKind::BEit | ModelKind::BAts => {}
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A model together with its ordered parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub theta: Vec<f64>,
}

impl ModelParams {
    pub fn new(kind: ModelKind, theta: Vec<f64>) -> Result<Self> {
        let mp = ModelParams { kind, theta };
        mp.validate()?;
        Ok(mp)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.theta;
        if t.len() != self.kind.parameter_count() {
            return Err(Error::invalid(
                "theta",
                format!("{} expects {} parameters, got {}", self.kind, self.kind.parameter_count(), t.len()),
            ));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta", "parameters must be finite"));
        }
        let widths: &[f64] = match self.kind {
            ModelKind::AEit => &t[2..4],
            ModelKind::AAts => &t[2..3],
            ModelKind::BEit => &t[1..3],
            ModelKind::BAts => &t[2..3],
        };
        if widths.iter().any(|g| *g <= 0.0) {
            return Err(Error::invalid("theta", "widths must be > 0"));
        }
        let nonneg: &[f64] = match self.kind {
            ModelKind::AEit => &t[0..2],
            ModelKind::AAts => &t[0..2],
            ModelKind::BEit => &t[0..1],
            ModelKind::BAts => &t[0..2],
        };
        if nonneg.iter().any(|v| *v < 0.0) {
            return Err(Error::invalid("theta", "amplitudes and offsets must be >= 0"));
        }
        if self.kind == ModelKind::BEit && t[1] <= t[2] {
            return Err(Error::invalid("theta", "B_EIT requires γ+ > γ−"));
        }
        Ok(())
    }

    pub fn eval(&self, delta: f64) -> f64 {
        self.kind.eval(&self.theta, delta)
    }
}

/// Evaluates a validated model at `delta`.
pub fn eval_model(mp: &ModelParams, delta: f64) -> Result<f64> {
    mp.validate()?;
    Ok(mp.eval(delta))
}

/// Shape features of a measured profile used to seed the fits.
#[derive(Debug, Clone)]
struct Features {
    y_max: f64,
    y_center: f64,
    /// Half of the distance between the outermost half-maximum crossings.
    hwhm_outer: f64,
    /// Half separation of the two dominant peaks, if the profile is split.
    peak_offset: Option<f64>,
    /// Height of the dominant side peak when split.
    y_peak: f64,
    half_span: f64,
    /// Outermost sample, for the δ⁻² tail of the B models.
    tail: (f64, f64),
}

fn moving_average(y: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return y.to_vec();
    }
    let n = y.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in y {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Robust noise estimate from second differences (MAD scaled to σ).
fn noise_level(y: &[f64]) -> f64 {
    let mut d: Vec<f64> = y.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    1.4826 * *m / 6f64.sqrt()
}

fn features(data: &RealSpectrum) -> Result<Features> {
    let n = data.len();
    if n < 8 {
        return Err(Error::DegenerateData(format!("need at least 8 points, got {n}")));
    }
    let raw_max = data.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw_min = data.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if raw_max.partial_cmp(&raw_min) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateData("data is constant".into()));
    }
    if raw_max <= 0.0 {
        return Err(Error::DegenerateData("data has no positive feature".into()));
    }
    let x = &data.delta;
    let sigma = noise_level(&data.values);
    let half = if sigma > 1e-3 * raw_max { (n / 100).max(1) } else { 0 };
    let y = moving_average(&data.values, half);

    let (imax, &y_max) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let half_max = 0.5 * y_max;
    let left = y.iter().position(|v| *v >= half_max).unwrap_or(imax);
    let right = y.iter().rposition(|v| *v >= half_max).unwrap_or(imax);
    let spacing = (x[n - 1] - x[0]) / (n - 1) as f64;
    let hwhm_outer = (0.5 * (x[right] - x[left])).max(spacing);
    let half_span = 0.5 * (x[n - 1] - x[0]);

    let icenter = x
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap();
    let y_center = y[icenter];

    let mut peaks: Vec<usize> = crate::spectra::local_maxima(&y)
        .into_iter()
        .filter(|&i| y[i] >= 0.3 * y_max)
        .collect();
    peaks.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    let min_offset = 3.0 * spacing.max(half as f64 * spacing);
    let peak_offset = match peaks.as_slice() {
        [] => None,
        [p] => Some(x[*p].abs()).filter(|d| *d > min_offset),
        [p, rest @ ..] => {
            let other = rest.iter().find(|&&q| x[q].signum() != x[*p].signum() && x[q].abs() > min_offset);
            match other {
                Some(&q) => Some(0.5 * (x[*p] - x[q]).abs()),
                None => Some(x[*p].abs()).filter(|d| *d > min_offset),
            }
        }
    };
    let y_peak = peaks.first().map(|&p| y[p]).unwrap_or(y_max);
    let tail = if x[0].abs() > x[n - 1].abs() { (x[0], y[0]) } else { (x[n - 1], y[n - 1]) };
    Ok(Features {
        y_max,
        y_center,
        hwhm_outer,
        peak_offset,
        y_peak,
        half_span,
        tail,
    })
}

/// Heuristic starting point for fitting `kind` to `data`.
pub fn initial_guess(kind: ModelKind, data: &RealSpectrum) -> Result<ModelParams> {
    let f = features(data)?;
    let w = f.hwhm_outer;
    let theta = match kind {
        ModelKind::AEit => {
            let gp = w;
            let mut gm = f.peak_offset.unwrap_or(0.1 * gp);
            if gm >= gp {
                gm = 0.5 * gp;
            }
            let envelope = f.y_max;
            let sp = envelope.sqrt() * gp;
            let dip = (envelope - f.y_center).max(0.05 * envelope);
            let sm = dip.sqrt() * gm;
            vec![sp, sm, gp, gm]
        }
        ModelKind::AAts => {
            let d0 = f.peak_offset.unwrap_or(0.1 * f.half_span);
            let g = (w - d0).max(0.3 * w);
            let s = f.y_max.sqrt() * g;
            vec![s, d0, g]
        }
        ModelKind::BEit => {
            let (gp, gm) = b_eit_widths(&f);
            let p1 = f.y_center.max(0.1 * f.y_max) * gp * gm / (gp - gm);
            vec![p1, gp, gm]
        }
        ModelKind::BAts => match f.peak_offset {
            Some(p) => {
                let r = (f.y_center / f.y_peak).clamp(0.01, 0.99);
                let t = (1.0 - (1.0 - r * r).sqrt()) / r;
                let om = p / (1.0 - t * t).sqrt();
                let g = t * om;
                vec![2.0 * g * f.y_peak, om, g]
            }
            None => {
                let g = w;
                let om = (0.1 * f.half_span).min(0.5 * g);
                vec![f.y_max * (g * g + om * om) / om, om, g]
            }
        },
    };
    let mut mp = ModelParams { kind, theta };
    kind.canonicalize(&mut mp.theta);
    mp.validate()
        .map_err(|e| Error::DegenerateData(format!("could not seed {kind}: {e}")))?;
    Ok(mp)
}

/// Solves γ+γ− = tail/center and the half-maximum condition for B_EIT widths.
fn b_eit_widths(f: &Features) -> (f64, f64) {
    let w = f.hwhm_outer;
    let fallback = (2.0 * w, 0.5 * w);
    let yc = f.y_center;
    let (xf, yf) = f.tail;
    if !(yc > 0.0 && yf > 0.0) {
        return fallback;
    }
    let (mut gp, mut gm) = fallback;
    for _ in 0..4 {
        let amp = yf * ((xf * xf + gp * gp) * (xf * xf + gm * gm)).sqrt();
        let g = amp / yc;
        let s = (3.0 * g * g - w.powi(4)) / (w * w);
        let disc = s * s - 4.0 * g * g;
        if !(s > 0.0 && disc > 0.0) {
            return fallback;
        }
        let a = 0.5 * (s + disc.sqrt());
        let b = 0.5 * (s - disc.sqrt());
        gp = a.sqrt();
        gm = b.sqrt();
    }
    if gp.is_finite() && gm.is_finite() && gm > 0.0 && gp > 1.01 * gm {
        (gp, gm)
    } else {
        fallback
    }
}
