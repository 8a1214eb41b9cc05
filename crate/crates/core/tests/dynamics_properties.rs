use eitats::dynamics::{
    extract_levels, integrate_obe, pulsed_reference, simulate, ObeSettings, PulseSchedule, DEFAULT_SETTLE_FRACTION,
    GAMMA3_REFERENCE, THERMAL_RHO11,
};
use eitats::spectra::corrected_rho13;
use eitats::SystemParams;

/// Drive of the pulsed measurement: Ωc = 0.23 γ3, 10 µs pulse in a 50 µs record.
fn reference_drive() -> (SystemParams, PulseSchedule) {
    let p = pulsed_reference(0.05).with_omega_c(0.23 * GAMMA3_REFERENCE);
    (p, PulseSchedule::new(10.0, 10.0, 50.0).unwrap())
}

fn settings(dt: f64, alpha: f64) -> ObeSettings {
    ObeSettings { dt, alpha, rho11_i: THERMAL_RHO11 }
}

#[test]
fn integration_stays_physical() {
    let (p, sched) = reference_drive();
    for delta in [0.0, 0.3 * p.gamma13, -2.0 * p.gamma13] {
        let r = simulate(&p, &sched, delta, &settings(0.005, 1.0)).unwrap().report;
        assert!(r.max_trace_error < 1e-8, "{r:?}");
        assert!(r.max_hermiticity_error < 1e-10, "{r:?}");
        assert!(r.max_negativity < 1e-6, "{r:?}");
        assert!(r.steps >= 10_000);
    }
}

#[test]
fn halving_the_step_changes_the_trace_by_less_than_1e_6() {
    let (p, sched) = reference_drive();
    for delta in [0.0, 0.5 * p.gamma13] {
        let coarse = integrate_obe(&p, &sched, delta, 0.005, 1.0).unwrap();
        let fine = integrate_obe(&p, &sched, delta, 0.0025, 1.0).unwrap();
        let mut compared = 0;
        for (t, v) in coarse.times.iter().zip(&coarse.transmission) {
            let j = fine.times.partition_point(|x| x < t);
            if j < fine.times.len() && (fine.times[j] - t).abs() < 1e-9 {
                assert!((fine.transmission[j] - v).abs() < 1e-6, "t = {t}: {v} vs {}", fine.transmission[j]);
                compared += 1;
            }
        }
        assert!(compared * 10 > coarse.times.len() * 9, "only {compared} common samples");
    }
}

#[test]
fn doubling_alpha_doubles_log_levels() {
    let (p, sched) = reference_drive();
    for delta in [0.0, 0.25 * p.gamma13, 1.0 * p.gamma13] {
        let one = integrate_obe(&p, &sched, delta, 0.005, 1.0).unwrap();
        let two = integrate_obe(&p, &sched, delta, 0.005, 2.0).unwrap();
        for (a, b) in one.transmission.iter().zip(&two.transmission) {
            assert!((2.0 * a.ln() - b.ln()).abs() <= 1e-12 * b.ln().abs().max(1e-300));
        }
        let l1 = extract_levels(&one, DEFAULT_SETTLE_FRACTION).unwrap();
        let l2 = extract_levels(&two, DEFAULT_SETTLE_FRACTION).unwrap();
        let ratio = |l: &eitats::dynamics::LevelExtraction| (l.h_s.ln() - l.h_f.ln()).abs() / l.h_i.ln().abs();
        for (name, h1, h2) in [("h_i", l1.h_i, l2.h_i), ("h_s", l1.h_s, l2.h_s), ("h_f", l1.h_f, l2.h_f)] {
            let doubled = h2.ln() / h1.ln();
            assert!((doubled - 2.0).abs() < 1e-10, "δ = {delta}: {name} log ratio {doubled}");
        }
        let (r1, r2) = (ratio(&l1), ratio(&l2));
        assert!((r1 - r2).abs() <= 1e-10 * r1, "δ = {delta}: {r1} vs {r2}");
    }
}

#[test]
fn control_on_plateau_matches_the_corrected_steady_state() {
    let (p, sched) = reference_drive();
    let delta = 0.2 * p.gamma13;
    let sim = simulate(&p, &sched, delta, &settings(0.005, 1.0)).unwrap();
    let pops = sim.populations_at_pulse_end();
    let analytic = corrected_rho13(&p, &pops, delta).unwrap();
    let idx = sim.trace.times.partition_point(|&t| t < sched.t_end() - 1e-9) - 1;
    let numeric = sim.rho13[idx];
    let rel = (numeric.im - analytic.im).abs() / analytic.im.abs();
    println!("plateau Im rho13 {:e} vs {:e} (rel {rel:e})", numeric.im, analytic.im);
    assert!(rel < 1e-3);
}
