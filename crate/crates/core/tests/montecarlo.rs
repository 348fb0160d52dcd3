use nalgebra::DVector;
use proxkit::linalg::max_abs;
use proxkit::montecarlo::*;
use proxkit::prox::plse_solve;
use proxkit::{Penalty, ProxOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(kind: DesignKind, n_grid: Vec<usize>, reps: usize) -> McConfig {
    McConfig {
        design: DesignSpec::new(kind),
        n_grid,
        reps,
        lambda_exponents: vec![0.75],
        ..McConfig::default()
    }
}

#[test]
fn sample_gram_follows_population_design() {
    let b0 = DVector::from_column_slice(&STUDY_BETA0);
    for (k, kind) in [
        DesignKind::Regular,
        DesignKind::Singular,
        DesignKind::NearlySingular,
    ]
    .into_iter()
    .enumerate()
    {
        let spec = DesignSpec::new(kind);
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let d = generate_sample(&spec, n, &b0, STUDY_SIGMA2, &mut rng).unwrap();
        let diff = d.gram().as_matrix() - spec.population(n).unwrap().as_matrix();
        assert!(max_abs(&diff) < 0.02, "{kind:?}: {}", max_abs(&diff));
    }
}

#[test]
fn bernoulli_detection_rate_within_three_se() {
    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    let cfg = small(DesignKind::Regular, vec![10], 5000);
    let records = (0..5000)
        .map(|rep| {
            let hit = rng.random_bool(0.5);
            Record {
                estimator: EstimatorKind::Mrlal,
                n: 10,
                alpha: Some(0.75),
                rep,
                sq_err: 0.0,
                norm_sq_err: 0.0,
                detect: hit,
                include: hit,
                beta: vec![],
            }
        })
        .collect();
    let report = McReport {
        metadata: Metadata {
            config_hash: cfg.hash(),
            seed: 5000,
            version: "test".into(),
        },
        config: cfg,
        beta0_plus: STUDY_BETA0.to_vec(),
        active_set: vec![0, 1, 4],
        records,
        replications: vec![],
        failures: vec![],
    };
    let row = summarize(&report).unwrap().rows[0].clone();
    assert!((row.p_detect - 0.5).abs() < 3.0 * row.se_detect);
}

#[test]
fn reports_are_reproducible_across_runs_and_workers() {
    let cfg = small(DesignKind::NearlySingular, vec![60, 80], 3);
    let a = run_experiment_with_workers(&cfg, Some(1)).unwrap();
    let b = run_experiment_with_workers(&cfg, Some(4)).unwrap();
    let c = run_experiment_with_workers(&cfg, Some(1)).unwrap();
    let json = |r: &McReport| serde_json::to_vec(r).unwrap();
    assert_eq!(json(&a), json(&b));
    assert_eq!(json(&a), json(&c));
    assert_eq!(
        a.records.iter().map(|r| &r.beta).collect::<Vec<_>>(),
        b.records.iter().map(|r| &r.beta).collect::<Vec<_>>()
    );
}

#[test]
fn single_replication_is_byte_identical() {
    let cfg = small(DesignKind::Regular, vec![50], 1);
    let a = serde_json::to_vec(&run_experiment(&cfg).unwrap()).unwrap();
    let b = serde_json::to_vec(&run_experiment(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn regular_design_rlal_and_mrlal_coincide_without_thresholding() {
    let cfg = small(DesignKind::Regular, vec![100, 200], 40);
    let report = run_experiment(&cfg).unwrap();
    let mut compared = 0;
    for info in report.replications.iter().filter(|i| i.rank_q_check == 8) {
        let find = |e| {
            report
                .records
                .iter()
                .find(|r| r.estimator == e && r.n == info.n && r.rep == info.rep)
                .unwrap()
        };
        let (a, b) = (find(EstimatorKind::Rlal), find(EstimatorKind::Mrlal));
        let diff = a
            .beta
            .iter()
            .zip(&b.beta)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8, "n={} rep={} diff={diff}", info.n, info.rep);
        compared += 1;
    }
    assert!(compared > 60);
}

#[test]
fn rlal_under_regular_design_is_the_adaptive_lasso_plse() {
    let spec = DesignSpec::new(DesignKind::Regular);
    let b0 = DVector::from_column_slice(&STUDY_BETA0);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let d = generate_sample(&spec, 150, &b0, STUDY_SIGMA2, &mut rng).unwrap();
    let rl = proxkit::estimators::ridgeless(&d, 1e-10).unwrap();
    let w = proxkit::estimators::regularized_weight(&d.gram(), 1e-10).unwrap();
    let f = Penalty::adaptive_from(&rl);
    let lambda = 150f64.powf(-0.75);
    let opts = ProxOptions::default();
    let est = proxkit::estimators::proximal_estimate(&rl, &w, &f, lambda, &opts).unwrap();
    let plse = plse_solve(d.x(), d.y(), &f, lambda, &opts).unwrap();
    assert!((est.beta - plse.point).amax() < 1e-6);
}

#[test]
fn solver_failures_are_recorded_not_fatal() {
    let mut cfg = small(DesignKind::Regular, vec![50], 4);
    cfg.solver.max_iters = 1;
    cfg.solver.kkt_tol = 1e-300;
    let report = run_experiment(&cfg).unwrap();
    assert!(!report.failures.is_empty());
    assert_eq!(
        report
            .records
            .iter()
            .filter(|r| !r.estimator.is_proximal())
            .count(),
        8
    );
    let s = summarize(&report).unwrap();
    assert_eq!(s.failure_count, report.failures.len());
}

#[test]
fn detection_implies_inclusion_everywhere() {
    let cfg = small(DesignKind::Singular, vec![100], 30);
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.active_set, vec![0, 1, 2, 4]);
    for r in &report.records {
        assert!(!r.detect || r.include);
    }
    for row in summarize(&report).unwrap().rows {
        assert!((0.0..=1.0).contains(&row.p_detect));
        assert!((0.0..=1.0).contains(&row.p_include));
    }
}

#[test]
fn nearly_singular_ridgeless_error_grows_while_modified_stabilizes() {
    let mut cfg = small(DesignKind::NearlySingular, vec![100, 1000], 100);
    cfg.estimators = vec![EstimatorKind::Rl, EstimatorKind::Mrl];
    let s = summarize(&run_experiment(&cfg).unwrap()).unwrap();
    let med = |e, n| s.row(e, n, None).unwrap().norm_sq_err_quartiles[1];
    assert!(med(EstimatorKind::Rl, 1000) > 2.0 * med(EstimatorKind::Rl, 100));
    let ratio = med(EstimatorKind::Mrl, 1000) / med(EstimatorKind::Mrl, 100);
    assert!(ratio < 1.5 && ratio > 1.0 / 1.5, "ratio {ratio}");
}
