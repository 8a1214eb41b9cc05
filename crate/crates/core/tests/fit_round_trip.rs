//! Noiseless data generated from each model must give back its parameters.

mod common;

use common::{recovery_rate, REQUIRED_RATE};
use eitats::ModelKind;

#[test]
fn every_model_recovers_its_parameters() {
    for (i, kind) in [ModelKind::AEit, ModelKind::AAts, ModelKind::BEit, ModelKind::BAts]
        .into_iter()
        .enumerate()
    {
        let (rate, worst_rss) = recovery_rate(kind, 1000 + i as u64);
        println!("{kind}: recovered {:.1}% (worst rss {worst_rss:.2e})", rate * 100.0);
        assert!(rate >= REQUIRED_RATE, "{kind}: only {:.1}% recovered", rate * 100.0);
        // The data are exact model values, so the global minimum of the rss is zero.
        assert!(worst_rss < 1e-6, "{kind}: a fit stalled at rss {worst_rss:e}");
    }
}
