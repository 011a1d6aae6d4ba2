use gflm_core::dataset::{load_dataset, save_dataset, DatasetPaths};
use gflm_core::estimators::EstimatorKind;
use gflm_core::gp::CovarianceSpec;
use gflm_core::mecov::{estimate_error_cov, ErrorCovariance};
use gflm_core::montecarlo::{generate_dataset, run_study, SimScenario};
use gflm_core::pipeline::{fit_dataset, EstimatorSpec};
use gflm_core::rng::stream_rng;
use gflm_core::simex::SimexConfig;

fn scenario() -> SimScenario {
    SimScenario { n: 800, t_points: 30, n_replications: 1, simex_s: 20, ..Default::default() }
}

#[test]
fn error_free_data_collapses_every_estimator() {
    let sc = SimScenario {
        cov_u1: CovarianceSpec::squared_exponential(0.0, 0.15),
        sigma_u2: 0.0,
        ..scenario()
    };
    let ds = generate_dataset(&sc, &mut stream_rng(1, 0)).unwrap();
    let ctx = sc.fit_context().unwrap();
    let oracle = fit_dataset(&ds, &ctx, &EstimatorSpec::new(EstimatorKind::Oracle)).unwrap().fit;
    for kind in EstimatorKind::ALL {
        let out = fit_dataset(&ds, &ctx, &EstimatorSpec::new(kind)).unwrap();
        for (a, b) in out.fit.coefficients.iter().zip(oracle.coefficients.iter()) {
            assert!((a - b).abs() < 1e-6, "{kind}: {a} vs {b}");
        }
        if let Some(trace) = out.simex_trace {
            for row in trace.means.rows() {
                for (a, b) in row.iter().zip(trace.means.row(0).iter()) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn files_round_trip_into_identical_fits() {
    let sc = scenario();
    let ds = generate_dataset(&sc, &mut stream_rng(2, 0)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = DatasetPaths::in_dir(dir.path(), true);
    save_dataset(&ds, &paths).unwrap();
    let back = load_dataset(&paths, None, sc.family).unwrap();
    assert_eq!(back, ds);
    let ctx = sc.fit_context().unwrap();
    let mut spec = EstimatorSpec::new(EstimatorKind::Simex);
    spec.simex = SimexConfig { n_sim: 10, seed: 3, ..Default::default() };
    assert_eq!(fit_dataset(&ds, &ctx, &spec).unwrap(), fit_dataset(&back, &ctx, &spec).unwrap());
}

#[test]
fn corrections_reduce_scalar_attenuation() {
    let sc = SimScenario { n: 2000, t_points: 30, n_replications: 4, simex_s: 40, ..Default::default() };
    let study = run_study(&sc).unwrap();
    let mean = |k| {
        let e = study.runs(k).successes();
        e.iter().map(|e| e.beta2).sum::<f64>() / e.len() as f64
    };
    let naive = mean(EstimatorKind::Naive);
    let average = mean(EstimatorKind::Average);
    let rc = mean(EstimatorKind::Rc);
    let simex = mean(EstimatorKind::Simex);
    assert!(naive < average && average < rc && average < simex, "{naive} {average} {rc} {simex}");
    assert!((simex - 1.0).abs() < (average - 1.0).abs());
    assert!(naive < 0.6);
}

#[test]
fn known_covariance_matches_estimated_route() {
    let sc = scenario();
    let ds = generate_dataset(&sc, &mut stream_rng(4, 0)).unwrap();
    let ctx = sc.fit_context().unwrap();
    let est = estimate_error_cov(&ds.w1, &ds.w2).unwrap();
    let mut spec = EstimatorSpec::new(EstimatorKind::Simex);
    spec.simex = SimexConfig { n_sim: 10, seed: 1, ..Default::default() };
    let implicit = fit_dataset(&ds, &ctx, &spec).unwrap();
    spec.known_cov = Some(ErrorCovariance::new(est.functional.clone(), est.scalar_var).unwrap());
    let explicit = fit_dataset(&ds, &ctx, &spec).unwrap();
    assert_eq!(implicit.fit, explicit.fit);
}

#[test]
fn grid_mismatch_is_rejected() {
    let sc = scenario();
    let ds = generate_dataset(&sc, &mut stream_rng(5, 0)).unwrap();
    let other = SimScenario { t_points: 31, ..scenario() }.fit_context().unwrap();
    let err = fit_dataset(&ds, &other, &EstimatorSpec::new(EstimatorKind::Average)).unwrap_err();
    assert_eq!(err.kind(), "shape");
}
