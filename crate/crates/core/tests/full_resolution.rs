//! Industrial case at full resolution (10⁶ cells). Slow; run with
//! `cargo test --release --test full_resolution -- --ignored`.

use moldflux::alifanov::CostMode;
use moldflux::benchmarks::{relative_error_norms, run_noise_study, Estimator, IndustrialCase, Method};
use moldflux::rbf_param::Regularization;

#[test]
#[ignore]
fn full_resolution_industrial_stays_within_two_percent() {
    let setup = IndustrialCase::full().inverse_setup(None).unwrap();
    let est = Estimator::prepare(&setup, &Method::Param { eta: 0.3, reg: Regularization::Lu }).unwrap();
    let g = est.estimate(&setup, &setup.clean, &CostMode::J1, 0.0).unwrap();
    let (clean, _) = relative_error_norms(setup.case.grid(), &g, &setup.reference).unwrap();
    println!("clean lu L2 {clean:.3e}");
    assert!(clean <= 0.02);
    for alpha in [5, 7] {
        let s = run_noise_study(&setup, &est.with_regularization(Regularization::Tsvd(alpha)), &CostMode::J1, &[0.5], 20, 20240611)
            .unwrap()[0];
        println!("tsvd:{alpha} mean L2 {:.3e} q95 {:.3e}", s.mean_l2, s.q95_l2);
        assert!(s.mean_l2 <= 0.02);
    }
}
