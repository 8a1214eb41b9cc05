mod common;

use common::*;
use eitats::spectra::residues;
use eitats::Error;
use proptest::prelude::*;

fn unit4() -> impl Strategy<Value = [f64; 4]> {
    [0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn residue_sums(u in unit4()) {
        let p = system_from_unit(u);
        prop_assume!(well_separated(&p));
        check_residue_sums(&p).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn pole_sum_matches_closed_form(u in unit4(), x in -1.0..=1.0f64) {
        let p = system_from_unit(u);
        prop_assume!(well_separated(&p));
        check_pole_sum(&p, 10.0 * p.gamma13 * x).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn threshold_geometry(u in unit4()) {
        let p = system_from_unit(u).with_omega_c(0.0);
        let p = eitats::SystemParams { delta_c: 0.0, ..p };
        // Half the cases straddle the threshold closely.
        let omega_c = p.threshold_omega_c() * if u[3] < 0.5 { 0.9 + 0.2 * u[2] } else { 5.0 * u[2] };
        check_threshold_geometry(&p.with_omega_c(omega_c)).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn spectra_are_even_without_control_detuning(u in unit4(), x in 0.0..=1.0f64) {
        let p = eitats::SystemParams { delta_c: 0.0, ..system_from_unit(u) };
        check_evenness(&p, 10.0 * p.gamma13 * x).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coherence_splits_above_threshold(g13 in 0.1..=10.0f64, r in 0.0..=PEAK_COUNT_MAX_GAMMA12_RATIO) {
        check_peak_counts(g13, r * g13).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn exact_threshold_is_degenerate() {
    for (g13, g12) in [(3.0, 0.01), (1.0, 0.0), (7.5, 2.5)] {
        let p = system(g13, g12, 0.5 * (g13 - g12), 0.0);
        assert!(matches!(residues(&p), Err(Error::DegeneratePoles { .. })), "{p:?}");
    }
}

#[test]
fn coherence_stays_single_peaked_well_past_threshold_for_large_dephasing() {
    // γ12/γ13 = 0.4 is above the splitting bound at twice threshold.
    let p = system(3.0, 1.2, 0.0, 0.0);
    assert_eq!(abs_rho12_maxima(&p.with_omega_c(2.0 * p.threshold_omega_c())), 1);
}
