//! Shipping gate for the workspace: one test per release criterion.
//!
//! Every test prints a single `criterion NN (...): PASS` line once its
//! assertions hold, so a full run reads as a checklist. A failing test is
//! the corresponding FAIL line. Seeds are frozen; each statistical check
//! was sized so that its pass margin is large under the pinned streams.

use std::process::Command;

use rayon::prelude::*;

use riskpess_core::rng::{row_rng, unit_f64};
use riskpess_core::{
    clipped_is_estimate, corollary_rate, coverage_experiment, diagnostics, evaluate_risk,
    is_cdf_estimate, lipschitz_constant, pessimistic_select, pointwise_bound, rate_curve,
    sample_dataset, sign_family, suboptimality_certificate, true_policy_cdf, true_risk,
    uniform_is_radius, wasserstein1, BehaviorSpec, BoundConfig,
    ConditionalCdfModel, CoverageTarget, Dataset, DiscreteDist, DistortionFn, Environment,
    EstimatorKind, Flavor, LoggedSample, Policy, PolicyClass, RiskFunctional, StepFn,
    SupportInterval, TableModel, UtilityFn,
};

fn shared_env() -> Environment {
    Environment::new(
        vec![0.4, 0.35, 0.25],
        vec![
            vec![DiscreteDist::bernoulli(0.7), DiscreteDist::point_mass(0.5)],
            vec![
                DiscreteDist::bernoulli(0.4),
                DiscreteDist {
                    atoms: vec![(0.25, 0.5), (0.75, 0.5)],
                },
            ],
            vec![DiscreteDist::bernoulli(0.55), DiscreteDist::point_mass(1.0)],
        ],
        2,
        SupportInterval::new(1.0).unwrap(),
    )
    .unwrap()
}

fn shared_behavior() -> BehaviorSpec {
    BehaviorSpec {
        propensities: vec![vec![0.6, 0.4], vec![0.35, 0.65], vec![1.0, 0.0]],
    }
}

fn sign_class() -> PolicyClass {
    let policies: Vec<Policy> = (0..8usize)
        .map(|b| Policy::new(vec![b & 1, (b >> 1) & 1, (b >> 2) & 1], 2).unwrap())
        .collect();
    PolicyClass::with_bruteforce_dim(policies, 3).unwrap()
}

fn random_sub_cdf(seed: u64, stream: u64, upper: f64) -> StepFn {
    let mut rng = row_rng(seed, stream);
    let n_atoms = 1 + (unit_f64(&mut rng) * 6.0) as usize;
    let mut breakpoints: Vec<f64> = (0..n_atoms).map(|_| unit_f64(&mut rng) * upper).collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let mut values: Vec<f64> = (0..breakpoints.len())
        .map(|_| unit_f64(&mut rng))
        .collect();
    values.sort_by(f64::total_cmp);
    if unit_f64(&mut rng) < 0.5 {
        *values.last_mut().unwrap() = 1.0;
    }
    StepFn::new(0.0, breakpoints, values).unwrap()
}

fn random_proper_cdf(seed: u64, stream: u64, upper: f64) -> StepFn {
    let mut f = random_sub_cdf(seed, stream, upper);
    *f.values.last_mut().unwrap() = 1.0;
    f
}

fn random_rough_step(seed: u64, stream: u64, upper: f64) -> StepFn {
    let mut rng = row_rng(seed, stream);
    let n_atoms = 1 + (unit_f64(&mut rng) * 6.0) as usize;
    let mut breakpoints: Vec<f64> = (0..n_atoms).map(|_| unit_f64(&mut rng) * upper).collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();
    let values: Vec<f64> = (0..breakpoints.len())
        .map(|_| unit_f64(&mut rng) * 1.5 - 0.25)
        .collect();
    let base = unit_f64(&mut rng) * 0.5 - 0.25;
    StepFn::new(base, breakpoints, values).unwrap()
}

/// Atom positions with integer multiplicities, so cumulative masses are
/// exact count ratios and the terminal value is exactly one.
fn random_atoms(seed: u64, stream: u64, upper: f64, max_atoms: usize) -> Vec<(f64, usize)> {
    let mut rng = row_rng(seed, stream);
    let n_atoms = 1 + (unit_f64(&mut rng) * (max_atoms as f64 - 1.0)) as usize;
    let mut positions: Vec<f64> = (0..n_atoms).map(|_| unit_f64(&mut rng) * upper).collect();
    positions.sort_by(f64::total_cmp);
    positions.dedup();
    positions
        .into_iter()
        .map(|y| (y, 1 + (unit_f64(&mut rng) * 4.0) as usize))
        .collect()
}

fn atoms_to_cdf(atoms: &[(f64, usize)]) -> StepFn {
    let total: usize = atoms.iter().map(|&(_, c)| c).sum();
    let mut acc = 0usize;
    let mut breakpoints = Vec::with_capacity(atoms.len());
    let mut values = Vec::with_capacity(atoms.len());
    for &(y, c) in atoms {
        acc += c;
        breakpoints.push(y);
        values.push(acc as f64 / total as f64);
    }
    StepFn::new(0.0, breakpoints, values).unwrap()
}

fn atom_mean(atoms: &[(f64, usize)]) -> f64 {
    let total: usize = atoms.iter().map(|&(_, c)| c).sum();
    atoms
        .iter()
        .map(|&(y, c)| y * c as f64)
        .sum::<f64>()
        / total as f64
}

#[test]
fn criterion_01_pointwise_coverage_stays_within_threshold() {
    let env = shared_env();
    let behavior = shared_behavior();
    let pi = Policy::new(vec![0, 1, 1], 2).unwrap();
    let n = 800;
    let trials = 2000;
    for delta in [0.05, 0.1, 0.2] {
        for flavor in [Flavor::Hoeffding, Flavor::Bernstein] {
            let config = BoundConfig {
                delta,
                flavor,
                estimator: EstimatorKind::ClippedIs,
                dr_bias: None,
            };
            let report = coverage_experiment(
                &env,
                &behavior,
                &CoverageTarget::Policy(pi.clone()),
                EstimatorKind::ClippedIs,
                &config,
                n,
                trials,
                31,
                None,
            )
            .unwrap();
            let slack = 3.0 * (delta * (1.0 - delta) / trials as f64).sqrt();
            assert!((report.threshold - (delta + slack)).abs() < 1e-12);
            assert!(
                report.within_threshold,
                "pointwise rate {} above {} at delta {delta} {flavor:?}",
                report.violation_rate, report.threshold
            );
        }
    }
    let probe = sample_dataset(&env, &behavior, n, 31).unwrap();
    let radius = pointwise_bound(&diagnostics(&probe, &pi), n, 0.2, Flavor::Hoeffding);
    assert!(radius.value < 1.0, "probe radius saturated: {}", radius.value);
    println!("criterion 01 (pointwise coverage): PASS");
}

#[test]
fn criterion_02_uniform_coverage_holds_for_all_three_estimators() {
    let env = shared_env();
    let behavior = shared_behavior();
    let class = sign_class();
    assert!(class.len() <= 16);
    assert_eq!(class.natarajan_dim(), 3);
    let wrong_model = TableModel {
        cdfs: vec![
            vec![StepFn::constant(1.0), StepFn::constant(1.0)],
            vec![StepFn::constant(1.0), StepFn::constant(1.0)],
            vec![StepFn::constant(1.0), StepFn::constant(1.0)],
        ],
    };
    let runs: [(EstimatorKind, usize, Option<&(dyn ConditionalCdfModel + Sync)>); 3] = [
        (EstimatorKind::ClippedIs, 5000, None),
        (EstimatorKind::Wis, 5000, None),
        (EstimatorKind::Drc, 16000, Some(&wrong_model)),
    ];
    for (estimator, n, model) in runs {
        for delta in [0.05, 0.1, 0.2] {
            let config = BoundConfig {
                delta,
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
                n,
                2000,
                77,
                model,
            )
            .unwrap();
            assert!(
                report.within_threshold,
                "uniform rate {} above {} for {estimator:?} at delta {delta}",
                report.violation_rate, report.threshold
            );
        }
    }
    let probe = sample_dataset(&env, &behavior, 5000, 77).unwrap();
    let full_overlap = Policy::new(vec![0, 0, 0], 2).unwrap();
    let radius = uniform_is_radius(&diagnostics(&probe, &full_overlap), 5000, 2, 3, 0.2);
    assert!(radius.value < 1.0, "probe radius saturated: {}", radius.value);
    println!("criterion 02 (uniform coverage): PASS");
}

#[test]
fn criterion_03_every_functional_is_lipschitz_at_its_stated_constant() {
    for upper in [1.0, 2.0] {
        let support = SupportInterval::new(upper).unwrap();
        let functionals = vec![
            RiskFunctional::Mean,
            RiskFunctional::Variance,
            RiskFunctional::MeanVariance { alpha: 0.5 },
            RiskFunctional::MeanVariance { alpha: 2.0 },
            RiskFunctional::Entropic { alpha: -2.0 },
            RiskFunctional::Entropic { alpha: 0.7 },
            RiskFunctional::Cvar { alpha: 0.5 },
            RiskFunctional::Cvar { alpha: 0.9 },
            RiskFunctional::Distorted {
                g: DistortionFn::new(vec![(0.0, 0.0), (0.3, 0.85), (1.0, 1.0)]).unwrap(),
            },
            RiskFunctional::Cpt {
                u_plus: UtilityFn::new(vec![
                    (0.0, 0.0),
                    (0.3 * upper, 0.55),
                    (upper, 1.1),
                ])
                .unwrap(),
                w_plus: DistortionFn::new(vec![(0.0, 0.0), (0.35, 0.8), (1.0, 1.0)]).unwrap(),
            },
        ];
        for (which, rho) in functionals.iter().enumerate() {
            let l = lipschitz_constant(rho, support).unwrap();
            for pair in 0..200u64 {
                let stream = (which as u64) * 1000 + pair;
                let f = random_sub_cdf(90, 2 * stream, upper);
                let g = random_sub_cdf(90, 2 * stream + 1, upper);
                let dist = f.sup_norm_distance(&g);
                let gap = (evaluate_risk(rho, &f, support).unwrap()
                    - evaluate_risk(rho, &g, support).unwrap())
                .abs();
                assert!(
                    gap <= l * dist + 1e-9,
                    "{rho:?} moved {gap} over distance {dist} with constant {l}"
                );
            }
        }
    }
    let var = RiskFunctional::ValueAtRisk { alpha: 0.5 };
    assert!(lipschitz_constant(&var, SupportInterval::new(1.0).unwrap()).is_err());
    println!("criterion 03 (Lipschitz suite): PASS");
}

#[test]
fn criterion_04_risk_values_match_closed_form_oracles() {
    let support = SupportInterval::new(1.0).unwrap();
    for case in 0..500u64 {
        let atoms = random_atoms(41, case, 1.0, 8);
        let f = atoms_to_cdf(&atoms);
        let total: usize = atoms.iter().map(|&(_, c)| c).sum();
        let mean = atom_mean(&atoms);

        let cvar_alphas = [0.1, 0.25, 0.5, 0.75, 0.9];
        for &alpha in &cvar_alphas {
            let cvar =
                evaluate_risk(&RiskFunctional::Cvar { alpha }, &f, support).unwrap();
            let dual = |xi: f64| {
                let tail: f64 = atoms
                    .iter()
                    .map(|&(y, c)| (y - xi).max(0.0) * c as f64)
                    .sum::<f64>()
                    / total as f64;
                xi + tail / (1.0 - alpha)
            };
            let var = evaluate_risk(&RiskFunctional::ValueAtRisk { alpha }, &f, support)
                .unwrap();
            assert!((cvar - dual(var)).abs() <= 1e-9, "dual gap at the quantile");
            for &(y, _) in &atoms {
                assert!(cvar <= dual(y) + 1e-9, "dual undercut at an atom");
            }
            let kink = RiskFunctional::Distorted {
                g: DistortionFn::new(vec![(0.0, 0.0), (1.0 - alpha, 1.0), (1.0, 1.0)])
                    .unwrap(),
            };
            let distorted = evaluate_risk(&kink, &f, support).unwrap();
            assert!((distorted - cvar).abs() <= 1e-9, "kink distortion vs cvar");
        }

        let identity = RiskFunctional::Distorted {
            g: DistortionFn::identity(),
        };
        let identity_value = evaluate_risk(&identity, &f, support).unwrap();
        assert!((identity_value - mean).abs() <= 1e-9);
        let plain_mean = evaluate_risk(&RiskFunctional::Mean, &f, support).unwrap();
        assert!((plain_mean - mean).abs() <= 1e-9);

        for alpha in [-1.5, 2.0] {
            let entropic =
                evaluate_risk(&RiskFunctional::Entropic { alpha }, &f, support).unwrap();
            let lse = (atoms
                .iter()
                .map(|&(y, c)| c as f64 / total as f64 * (alpha * y).exp())
                .sum::<f64>())
            .ln()
                / alpha;
            assert!((entropic - lse).abs() <= 1e-9);
        }

        let second: f64 = atoms
            .iter()
            .map(|&(y, c)| y * y * c as f64)
            .sum::<f64>()
            / total as f64;
        let variance = evaluate_risk(&RiskFunctional::Variance, &f, support).unwrap();
        assert!((variance - (second - mean * mean)).abs() <= 1e-9);
    }

    for case in 0..500u64 {
        let mut rng = row_rng(43, case);
        let m = 1 + (unit_f64(&mut rng) * 5.0) as usize;
        let mut xs: Vec<f64> = (0..m).map(|_| unit_f64(&mut rng)).collect();
        let mut ys: Vec<f64> = (0..m).map(|_| unit_f64(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let unit = |points: &[f64]| {
            let atoms: Vec<(f64, usize)> = {
                let mut dedup: Vec<(f64, usize)> = Vec::new();
                for &p in points {
                    match dedup.last_mut() {
                        Some(last) if last.0 == p => last.1 += 1,
                        _ => dedup.push((p, 1)),
                    }
                }
                dedup
            };
            atoms_to_cdf(&atoms)
        };
        let transport: f64 =
            xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).sum::<f64>() / m as f64;
        let w1 = wasserstein1(&unit(&xs), &unit(&ys), support).unwrap();
        assert!((w1 - transport).abs() <= 1e-9, "transport {transport} vs {w1}");
    }
    println!("criterion 04 (oracle equivalences): PASS");
}

#[test]
fn criterion_05_contraction_lemmas_hold_exactly() {
    for case in 0..2000u64 {
        let target = random_proper_cdf(51, 2 * case, 1.0);
        let rough = random_rough_step(51, 2 * case + 1, 1.0);
        let projected = rough.monotonize_clip();
        assert!(
            projected.sup_norm_distance(&target) <= rough.sup_norm_distance(&target),
            "projection moved away from a proper CDF"
        );
    }
    for case in 0..2000u64 {
        let f = random_proper_cdf(53, case, 1.0);
        let m = 1 + (case % 50) as usize;
        let approx = f.quantile_step_approx(m).unwrap();
        assert!(
            f.sup_norm_distance(&approx) <= 0.5 / m as f64,
            "quantile coarsening at m {m} exceeded its bound"
        );
    }
    println!("criterion 05 (contraction lemmas): PASS");
}

#[test]
fn criterion_06_certificate_bounds_the_gap_whenever_coverage_holds() {
    let env = shared_env();
    let behavior = shared_behavior();
    let class = sign_class();
    let rho = RiskFunctional::Mean;
    let support = env.support();
    let l = lipschitz_constant(&rho, support).unwrap();
    let truths: Vec<StepFn> = class
        .policies()
        .iter()
        .map(|pi| true_policy_cdf(&env, pi))
        .collect();
    let true_risks: Vec<f64> = class
        .policies()
        .iter()
        .map(|pi| true_risk(&env, pi, &rho).unwrap())
        .collect();
    let star = (0..class.len())
        .max_by(|&a, &b| true_risks[a].total_cmp(&true_risks[b]))
        .unwrap();
    let config = BoundConfig {
        delta: 0.2,
        flavor: Flavor::Hoeffding,
        estimator: EstimatorKind::ClippedIs,
        dr_bias: None,
    };
    let trials: Vec<Option<(f64, f64, bool)>> = (0..2000u64)
        .into_par_iter()
        .map(|trial| {
            let data = sample_dataset(&env, &behavior, 16_000, 600_000 + trial).unwrap();
            let result = pessimistic_select(&data, &class, &rho, &config, None).unwrap();
            let covered = class.policies().iter().enumerate().all(|(i, pi)| {
                clipped_is_estimate(&data, pi).sup_norm_distance(&truths[i])
                    <= result.reports[i].radius
            });
            if !covered {
                return None;
            }
            let certificate = suboptimality_certificate(&result, star, l).unwrap();
            let gap = true_risks[star] - true_risks[result.selected];
            Some((gap, certificate.bound, certificate.vacuous))
        })
        .collect();
    let mut covered_trials = 0usize;
    for outcome in trials.into_iter().flatten() {
        covered_trials += 1;
        let (gap, bound, vacuous) = outcome;
        assert!(
            gap <= bound + 1e-12,
            "gap {gap} above certified bound {bound} on a covered trial"
        );
        assert!(!vacuous, "certificate saturated mid-experiment");
    }
    assert!(covered_trials >= 1900, "coverage event too rare: {covered_trials}");
    println!("criterion 06 (suboptimality certificate): PASS");
}

#[test]
fn criterion_07_learning_rate_tracks_the_envelope() {
    let family = sign_family(2, 2, 0.5, 0.03, 0.15).unwrap();
    let grid = [500usize, 1000, 2000, 4000, 8000, 16000];
    for rho in [RiskFunctional::Mean, RiskFunctional::Cvar { alpha: 0.75 }] {
        let report = rate_curve(
            &family,
            &rho,
            EstimatorKind::ClippedIs,
            0.1,
            &grid,
            200,
            20260815,
        )
        .unwrap();
        let slope = report.slope.expect("no positive points in the curve");
        assert!(
            (-0.75..=-0.25).contains(&slope),
            "log-log slope {slope} outside [-0.75, -0.25] for {rho:?}"
        );
        assert!(report.points.iter().all(|p| p.mean_gap > 0.0));
        let envelope: Vec<f64> = report
            .points
            .iter()
            .map(|p| corollary_rate(p.n, 2, 2, 0.1, 0.5, 1.0).value)
            .collect();
        let log_ratios: Vec<f64> = report
            .points
            .iter()
            .zip(&envelope)
            .map(|(p, e)| (p.mean_gap / e).ln())
            .collect();
        let fitted = log_ratios.iter().sum::<f64>() / log_ratios.len() as f64;
        for (point, ratio) in report.points.iter().zip(&log_ratios) {
            assert!(
                ratio - fitted <= 1.5f64.ln(),
                "n {} sits {}x above the fitted envelope",
                point.n,
                (ratio - fitted).exp()
            );
        }
    }
    println!("criterion 07 (minimax rate check): PASS");
}

#[test]
fn criterion_08_is_estimates_are_unbiased_at_every_true_breakpoint() {
    let env = Environment::new(
        vec![0.5, 0.5],
        vec![
            vec![
                DiscreteDist {
                    atoms: vec![(0.2, 0.3), (0.6, 0.4), (1.0, 0.3)],
                },
                DiscreteDist::point_mass(0.5),
            ],
            vec![
                DiscreteDist::point_mass(0.1),
                DiscreteDist {
                    atoms: vec![(0.4, 0.5), (0.8, 0.5)],
                },
            ],
        ],
        2,
        SupportInterval::new(1.0).unwrap(),
    )
    .unwrap();
    let pi = Policy::new(vec![0, 1], 2).unwrap();
    let designs: [(&str, BehaviorSpec, bool); 2] = [
        (
            "clipped IS on deterministic logging",
            BehaviorSpec {
                propensities: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            true,
        ),
        (
            "raw IS on mixed logging",
            BehaviorSpec {
                propensities: vec![vec![0.6, 0.4], vec![0.3, 0.7]],
            },
            false,
        ),
    ];
    let trials = 10_000usize;
    let n = 200usize;
    for (label, behavior, clipped) in designs {
        let truth = true_policy_cdf(&env, &pi);
        let mut sums = vec![0.0f64; truth.breakpoints.len()];
        let mut squares = vec![0.0f64; truth.breakpoints.len()];
        for trial in 0..trials as u64 {
            let data = sample_dataset(&env, &behavior, n, 400_000 + trial).unwrap();
            let estimate = if clipped {
                clipped_is_estimate(&data, &pi)
            } else {
                is_cdf_estimate(&data, &pi)
            };
            for (j, &t) in truth.breakpoints.iter().enumerate() {
                let v = estimate.eval(t);
                sums[j] += v;
                squares[j] += v * v;
            }
        }
        let t = trials as f64;
        for (j, &bp) in truth.breakpoints.iter().enumerate() {
            let mc_mean = sums[j] / t;
            let variance = ((squares[j] / t - mc_mean * mc_mean) * t / (t - 1.0)).max(0.0);
            let se = (variance / t).sqrt();
            let deviation = (mc_mean - truth.eval(bp)).abs();
            if se == 0.0 {
                assert_eq!(deviation, 0.0, "{label}: exact design drifted at {bp}");
            } else {
                assert!(
                    deviation <= 4.0 * se,
                    "{label}: bias {deviation} above 4 se {se} at breakpoint {bp}"
                );
            }
        }
    }
    println!("criterion 08 (unbiasedness): PASS");
}

#[test]
fn criterion_09_no_overlap_instances_match_the_hand_enumeration() {
    let row = |context: usize, reward: f64, propensities: Vec<f64>, action: usize| LoggedSample {
        context,
        action,
        reward,
        propensities,
    };
    let samples = vec![
        row(0, 0.2, vec![1.0, 0.0], 0),
        row(0, 0.4, vec![1.0, 0.0], 0),
        row(0, 0.6, vec![1.0, 0.0], 0),
        row(1, 0.1, vec![0.0, 1.0], 1),
        row(1, 0.5, vec![0.0, 1.0], 1),
        row(1, 0.9, vec![0.0, 1.0], 1),
    ];
    let data = Dataset::new(samples, 2, SupportInterval::new(1.0).unwrap(), 2).unwrap();
    let class = PolicyClass::with_bruteforce_dim(
        vec![
            Policy::new(vec![0, 0], 2).unwrap(),
            Policy::new(vec![1, 1], 2).unwrap(),
            Policy::new(vec![1, 0], 2).unwrap(),
        ],
        2,
    )
    .unwrap();
    assert_eq!(class.natarajan_dim(), 1);
    let config = BoundConfig {
        delta: 0.2,
        flavor: Flavor::Hoeffding,
        estimator: EstimatorKind::ClippedIs,
        dr_bias: None,
    };
    let result = pessimistic_select(&data, &class, &RiskFunctional::Mean, &config, None).unwrap();

    // Half the rows are uninformative for each of the first two policies, so
    // their estimates start from completion mass 1/2 and add three 1/6 jumps:
    // mean(pi0) = 0.2 * (1/2 + 1/3 + 1/6) = 1/5 and mean(pi1) =
    // 0.05 + 0.4 * (1/3 + 1/6) = 1/4. The third policy never sees an
    // informative row, its estimate is the constant 1, and every radius
    // saturates at 1, leaving lcbs of -0.8, -0.75, and -1.
    assert!((result.reports[0].rho_hat - 0.2).abs() <= 1e-12);
    assert!((result.reports[1].rho_hat - 0.25).abs() <= 1e-12);
    assert_eq!(result.reports[2].rho_hat, 0.0);
    for report in &result.reports {
        assert_eq!(report.radius, 1.0);
        assert!(report.lcb.is_finite());
    }
    assert!((result.reports[0].lcb + 0.8).abs() <= 1e-12);
    assert!((result.reports[1].lcb + 0.75).abs() <= 1e-12);
    assert!((result.reports[2].lcb + 1.0).abs() <= 1e-12);
    assert_eq!(result.selected, 1);
    assert_eq!(result.reports[0].diagnostics.r, 0.5);
    assert_eq!(result.reports[2].diagnostics.r, 1.0);
    println!("criterion 09 (no-overlap fixture): PASS");
}

#[test]
fn criterion_10_experiment_commands_are_byte_identical_across_threads() {
    let bin = env!("CARGO_BIN_EXE_riskpess");
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let run = |args: &[&str]| {
        let output = Command::new(bin)
            .args(args)
            .env_remove("RISKPESS_THREADS")
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "command {:?} failed: {}",
            args,
            String::from_utf8_lossy(&output.stderr)
        );
        output.stdout
    };
    let read = |name: &str| std::fs::read(path(&name.to_string())).unwrap();

    std::fs::write(
        path("env.json"),
        serde_json::to_string_pretty(&shared_env()).unwrap(),
    )
    .unwrap();
    std::fs::write(
        path("behavior.json"),
        serde_json::to_string_pretty(&shared_behavior()).unwrap(),
    )
    .unwrap();
    std::fs::write(
        path("class.json"),
        r#"{"policies": [{"actions": [0, 0, 0]}, {"actions": [0, 1, 1]}, {"actions": [1, 1, 1]}]}"#,
    )
    .unwrap();
    std::fs::write(path("policy.json"), r#"{"actions": [0, 1, 1]}"#).unwrap();

    let gen_args = [
        "gen-data",
        "--env",
        &path("env.json"),
        "--behavior",
        &path("behavior.json"),
        "--n",
        "400",
        "--seed",
        "5",
        "--out",
        &path("data.jsonl"),
    ];
    let gen_stdout = run(&gen_args);
    let data_bytes = read("data.jsonl");
    assert_eq!(run(&gen_args), gen_stdout);
    assert_eq!(read("data.jsonl"), data_bytes);

    let eval_args = [
        "evaluate",
        "--data",
        &path("data.jsonl"),
        "--policy",
        &path("policy.json"),
        "--estimator",
        "wis",
        "--risk",
        r#"{"kind": "cvar", "alpha": 0.8}"#,
        "--delta",
        "0.1",
    ];
    let eval_stdout = run(&eval_args);
    let mut eval_threaded = vec!["--threads", "4"];
    eval_threaded.splice(0..0, eval_args);
    assert_eq!(run(&eval_threaded), eval_stdout);

    let learn = |out: &str, threads: Option<&str>| {
        let out_path = path(out);
        let mut args = vec![
            "learn",
            "--data",
            &path("data.jsonl"),
            "--class",
            &path("class.json"),
            "--risk",
            r#"{"kind": "mean"}"#,
            "--estimator",
            "is",
            "--delta",
            "0.2",
            "--out",
            &out_path,
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        if let Some(t) = threads {
            args.push("--threads".to_string());
            args.push(t.to_string());
        }
        let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run(&arg_refs)
    };
    let learn_stdout = learn("fit", None);
    let fit_json = read("fit.json");
    let fit_csv = read("fit.csv");
    assert_eq!(learn("fit", Some("4")), learn_stdout);
    assert_eq!(read("fit.json"), fit_json);
    assert_eq!(read("fit.csv"), fit_csv);

    std::fs::write(
        path("coverage.json"),
        serde_json::json!({
            "env_path": path("env.json"),
            "behavior_path": path("behavior.json"),
            "policy": {"actions": [0, 1, 1]},
            "estimator": "is",
            "flavor": "hoeffding",
            "delta": 0.2,
            "n": 50,
            "trials": 100,
            "seed": 9,
        })
        .to_string(),
    )
    .unwrap();
    let coverage_args = [
        "coverage",
        "--config",
        &path("coverage.json"),
        "--out",
        &path("cov"),
    ];
    let coverage_stdout = run(&coverage_args);
    let cov_json = read("cov.json");
    let cov_csv = read("cov.csv");
    let mut coverage_threaded = vec!["--threads", "4"];
    coverage_threaded.splice(0..0, coverage_args);
    assert_eq!(run(&coverage_threaded), coverage_stdout);
    assert_eq!(read("cov.json"), cov_json);
    assert_eq!(read("cov.csv"), cov_csv);

    std::fs::write(
        path("rate.json"),
        serde_json::json!({
            "family": {"d": 1, "k": 2, "beta_inf": 0.5, "delta_gap": 0.2},
            "risk": {"kind": "mean"},
            "estimator": "is",
            "delta": 0.1,
            "n_grid": [50, 100, 150, 200],
            "trials_per_n": 5,
            "seed": 3,
        })
        .to_string(),
    )
    .unwrap();
    let rate_args = [
        "rate-curve",
        "--config",
        &path("rate.json"),
        "--out",
        &path("rate_out"),
    ];
    let rate_stdout = run(&rate_args);
    let rate_json = read("rate_out.json");
    let rate_csv = read("rate_out.csv");
    let mut rate_threaded = vec!["--threads", "4"];
    rate_threaded.splice(0..0, rate_args);
    assert_eq!(run(&rate_threaded), rate_stdout);
    assert_eq!(read("rate_out.json"), rate_json);
    assert_eq!(read("rate_out.csv"), rate_csv);
    println!("criterion 10 (byte-level determinism): PASS");
}
