//! Objective discrimination of electromagnetically induced transparency (EIT)
//! from Autler-Townes splitting (ATS) in a three-level Λ system.
//!
//! The crate is organised as a pipeline:
//!
//! - [`spectra`]: closed-form steady-state coherences ρ12, ρ13 (ideal and
//!   population-corrected) and their dressed-pole/residue decomposition.
//! - [`lineshapes`]: the four candidate fit models (A_EIT, A_ATS for the probe
//!   absorption, B_EIT, B_ATS for the ground-state coherence).
//! - [`fitting`]: damped least squares, AIC values and Akaike weights.
//! - [`scan`]: control-field sweeps, seeded noise and transition location.
//! - [`dynamics`]: time-domain optical Bloch equations for a pulsed control,
//!   h-level extraction and the coherence quantifier C(δ).
//! - [`io`]: CSV/JSON formats shared by the command-line front end.
//!
//! All rates and detunings are in MHz (angular, i.e. rad/µs) and all times in µs.

pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod io;
pub mod lineshapes;
pub mod par;
pub mod scan;
pub mod spectra;

pub use error::{Error, Result};
pub use fitting::{ComparisonResult, FitOptions, FitResult, ModelFamily};
pub use lineshapes::{ModelKind, ModelParams};
pub use scan::{ScanConfig, ScanResult};

pub use spectra::{
    ComplexSpectrum, DetuningGrid, PoleDecomposition, Populations, RealSpectrum, SpectrumKind,
    SystemParams,
};
