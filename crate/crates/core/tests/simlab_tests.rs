//! Integration tests for the simulation lab: sampling frequencies against
//! exact probabilities, thread-count invariance of experiment reports,
//! conservative coverage on overlapped environments, and vanishing
//! suboptimality on easy instances.

use riskpess_core::{
    coverage_experiment, minimax_family, rate_curve, sample_dataset, true_risk, BehaviorSpec,
    BoundConfig, CoverageTarget, DiscreteDist, Environment, EstimatorKind, Flavor, Policy,
    RiskFunctional, SupportInterval,
};

fn mixed_env() -> Environment {
    Environment::new(
        vec![0.3, 0.7],
        vec![
            vec![DiscreteDist::bernoulli(0.5), DiscreteDist::point_mass(0.25)],
            vec![DiscreteDist::bernoulli(0.8), DiscreteDist::bernoulli(0.1)],
        ],
        2,
        SupportInterval::new(1.0).unwrap(),
    )
    .unwrap()
}

fn mixed_behavior() -> BehaviorSpec {
    BehaviorSpec {
        propensities: vec![vec![0.4, 0.6], vec![0.9, 0.1]],
    }
}

#[test]
fn sampled_frequencies_match_the_environment_within_four_sigma() {
    let env = mixed_env();
    let behavior = mixed_behavior();
    let n = 100_000usize;
    let data = sample_dataset(&env, &behavior, n, 17).unwrap();
    let nf = n as f64;
    let check = |observed: f64, p: f64| {
        let se = (p * (1.0 - p) / nf).sqrt();
        assert!(
            (observed - p).abs() <= 4.0 * se,
            "observed {observed} expected {p} (se {se})"
        );
    };
    let ctx0 = data.samples().iter().filter(|s| s.context == 0).count() as f64 / nf;
    check(ctx0, 0.3);
    let a0_in_ctx0 = data
        .samples()
        .iter()
        .filter(|s| s.context == 0 && s.action == 0)
        .count() as f64
        / nf;
    check(a0_in_ctx0, 0.3 * 0.4);
    let ones_in_ctx1_a0 = data
        .samples()
        .iter()
        .filter(|s| s.context == 1 && s.action == 0 && s.reward == 1.0)
        .count() as f64
        / nf;
    check(ones_in_ctx1_a0, 0.7 * 0.9 * 0.8);
    let fixed_reward = data
        .samples()
        .iter()
        .filter(|s| s.context == 0 && s.action == 1)
        .all(|s| s.reward == 0.25);
    assert!(fixed_reward);
}

#[test]
fn experiment_reports_are_identical_across_thread_counts() {
    let env = mixed_env();
    let behavior = mixed_behavior();
    let class = riskpess_core::PolicyClass::new(
        vec![
            Policy::new(vec![0, 0], 2).unwrap(),
            Policy::new(vec![0, 1], 2).unwrap(),
            Policy::new(vec![1, 0], 2).unwrap(),
        ],
        1,
    )
    .unwrap();
    let config = BoundConfig {
        delta: 0.2,
        flavor: Flavor::Hoeffding,
        estimator: EstimatorKind::ClippedIs,
        dr_bias: None,
    };
    let family = minimax_family(1, 2, 0.5, Some(0.2), None).unwrap();
    let run = || {
        let coverage = coverage_experiment(
            &env,
            &behavior,
            &CoverageTarget::Class(class.clone()),
            EstimatorKind::ClippedIs,
            &config,
            80,
            100,
            23,
            None,
        )
        .unwrap();
        let rate = rate_curve(
            &family,
            &RiskFunctional::Mean,
            EstimatorKind::ClippedIs,
            0.2,
            &[40, 80, 120, 160],
            6,
            29,
        )
        .unwrap();
        (coverage, rate)
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let quad = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(single.0, quad.0);
    assert_eq!(single.1, quad.1);
    assert_eq!(
        serde_json::to_string(&single.1).unwrap(),
        serde_json::to_string(&quad.1).unwrap()
    );
}

#[test]
fn uniform_coverage_stays_conservative_on_small_samples() {
    let env = mixed_env();
    let behavior = mixed_behavior();
    let class = riskpess_core::PolicyClass::new(
        vec![
            Policy::new(vec![0, 0], 2).unwrap(),
            Policy::new(vec![1, 1], 2).unwrap(),
        ],
        1,
    )
    .unwrap();
    for estimator in [EstimatorKind::ClippedIs, EstimatorKind::Wis] {
        let config = BoundConfig {
            delta: 0.2,
            flavor: Flavor::Hoeffding,
            estimator,
            dr_bias: None,
        };
        let report = coverage_experiment(
            &env,
            &behavior,
            &CoverageTarget::Class(class.clone()),
            estimator,
            &config,
            60,
            150,
            5,
            None,
        )
        .unwrap();
        assert_eq!(report.mode, "uniform");
        assert_eq!(report.violations, 0, "{estimator:?} violated");
        assert!(report.within_threshold);
    }
}

#[test]
fn easy_instances_drive_the_suboptimality_gap_to_zero() {
    let family = minimax_family(1, 2, 0.5, Some(0.2), None).unwrap();
    let report = rate_curve(
        &family,
        &RiskFunctional::Mean,
        EstimatorKind::ClippedIs,
        0.1,
        &[100, 400, 900, 1600],
        10,
        41,
    )
    .unwrap();
    let last = report.points.last().unwrap();
    assert_eq!(last.mean_gap, 0.0, "gap at n=1600 should vanish");
    assert_eq!(last.mean_w1, 0.0);
    assert!(report.points[0].mean_gap >= last.mean_gap);
    for point in &report.points {
        assert!(point.se >= 0.0);
        assert!(point.mean_gap >= 0.0);
    }
}

#[test]
fn minimax_star_maximizes_every_monotone_risk() {
    for inst in minimax_family(2, 3, 0.3, Some(0.15), None).unwrap() {
        for rho in [
            RiskFunctional::Mean,
            RiskFunctional::Cvar { alpha: 0.4 },
            RiskFunctional::Entropic { alpha: -1.0 },
        ] {
            let star = true_risk(&inst.env, &inst.class.policies()[inst.star_index], &rho)
                .unwrap();
            for pi in inst.class.policies() {
                let other = true_risk(&inst.env, pi, &rho).unwrap();
                assert!(other <= star + 1e-12);
            }
        }
    }
}
