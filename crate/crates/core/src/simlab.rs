//! Synthetic bandit environments with exact oracles and the Monte Carlo
//! experiments used to validate coverage and learning rates.
//!
//! Environments carry finite context distributions and discrete reward
//! atoms, so true policy CDFs, true risks, and the DR bias term are all
//! available in closed form. Dataset sampling is counter-based: every row
//! draws from its own seeded stream, making results independent of thread
//! scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bounds::{
    pointwise_bound, uniform_dr_radius, uniform_is_radius, uniform_wis_radius, BoundConfig,
    Flavor, PolicyClass,
};
use crate::error::Error;
use crate::estimators::{
    clipped_is_estimate, diagnostics, drc_cdf_estimate, wis_cdf_estimate, ConditionalCdfModel,
    Dataset, EstimatorKind, LoggedSample, Policy,
};
use crate::learner::{pessimistic_select, pessimistic_select_with};
use crate::risk::{evaluate_risk, RiskFunctional};
use crate::rng::{categorical, mix, row_rng};
use crate::step::{wasserstein1, StepFn, SupportInterval};

const PROB_SUM_TOL: f64 = 1e-12;

/// Discrete reward distribution as a list of `(value, probability)` atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteDist {
    pub atoms: Vec<(f64, f64)>,
}

impl DiscreteDist {
    #[must_use]
    pub fn point_mass(y: f64) -> Self {
        Self {
            atoms: vec![(y, 1.0)],
        }
    }

    /// Bernoulli on `{0, 1}` with success probability `p`.
    #[must_use]
    pub fn bernoulli(p: f64) -> Self {
        if p <= 0.0 {
            Self::point_mass(0.0)
        } else if p >= 1.0 {
            Self::point_mass(1.0)
        } else {
            Self {
                atoms: vec![(0.0, 1.0 - p), (1.0, p)],
            }
        }
    }

    fn validate(&self, support: SupportInterval) -> Result<(), Error> {
        if self.atoms.is_empty() {
            return Err(Error::InvalidEnvironment {
                reason: "reward distribution has no atoms".to_string(),
            });
        }
        for &(y, p) in &self.atoms {
            if !y.is_finite() || !support.contains(y) {
                return Err(Error::InvalidEnvironment {
                    reason: format!("atom {y} outside [0, {}]", support.upper),
                });
            }
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidEnvironment {
                    reason: format!("atom probability {p} is negative"),
                });
            }
        }
        let total: f64 = self.atoms.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidEnvironment {
                reason: format!("atom probabilities sum to {total}, not 1"),
            });
        }
        Ok(())
    }

    fn sample<R: rand_core::RngCore>(&self, rng: &mut R) -> f64 {
        let weights: Vec<f64> = self.atoms.iter().map(|&(_, p)| p).collect();
        self.atoms[categorical(rng, &weights)].0
    }
}

/// Ground-truth contextual bandit environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    context_probs: Vec<f64>,
    reward_dists: Vec<Vec<DiscreteDist>>,
    k: usize,
    support: SupportInterval,
}

impl Environment {
    pub fn new(
        context_probs: Vec<f64>,
        reward_dists: Vec<Vec<DiscreteDist>>,
        k: usize,
        support: SupportInterval,
    ) -> Result<Self, Error> {
        if context_probs.is_empty() || k == 0 {
            return Err(Error::InvalidEnvironment {
                reason: "environment needs at least one context and one action".to_string(),
            });
        }
        if context_probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidEnvironment {
                reason: "context probabilities must be finite and nonnegative".to_string(),
            });
        }
        let total: f64 = context_probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidEnvironment {
                reason: format!("context probabilities sum to {total}, not 1"),
            });
        }
        if reward_dists.len() != context_probs.len() {
            return Err(Error::InvalidEnvironment {
                reason: format!(
                    "{} reward rows for {} contexts",
                    reward_dists.len(),
                    context_probs.len()
                ),
            });
        }
        for (x, row) in reward_dists.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidEnvironment {
                    reason: format!("context {x} covers {} actions, expected {k}", row.len()),
                });
            }
            for dist in row {
                dist.validate(support)?;
            }
        }
        Ok(Self {
            context_probs,
            reward_dists,
            k,
            support,
        })
    }

    #[must_use]
    pub fn n_contexts(&self) -> usize {
        self.context_probs.len()
    }

    #[must_use]
    pub fn k(&self) -> usize {
        self.k
    }

    #[must_use]
    pub fn support(&self) -> SupportInterval {
        self.support
    }

    #[must_use]
    pub fn context_probs(&self) -> &[f64] {
        &self.context_probs
    }

    #[must_use]
    pub fn reward_dist(&self, x: usize, a: usize) -> &DiscreteDist {
        &self.reward_dists[x][a]
    }

    /// Exact conditional reward CDF at `(context, action)` with the
    /// terminal value pinned to exactly 1.
    #[must_use]
    pub fn conditional_cdf(&self, x: usize, a: usize) -> StepFn {
        atoms_to_cdf(
            self.reward_dists[x][a]
                .atoms
                .iter()
                .copied()
                .filter(|&(_, p)| p > 0.0)
                .collect(),
        )
    }
}

fn atoms_to_cdf(atoms: Vec<(f64, f64)>) -> StepFn {
    let raw = StepFn::from_jumps(0.0, atoms);
    assert!(
        (raw.terminal() - 1.0).abs() <= 1e-9,
        "atom masses sum to {}, not 1",
        raw.terminal()
    );
    let mut values: Vec<f64> = raw.values.iter().map(|v| v.min(1.0)).collect();
    *values.last_mut().expect("at least one atom") = 1.0;
    StepFn {
        base: 0.0,
        breakpoints: raw.breakpoints,
        values,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvironmentSpec {
    context_probs: Vec<f64>,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D")]
    d: f64,
    reward_dists: Vec<Vec<DiscreteDist>>,
}

impl Serialize for Environment {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        EnvironmentSpec {
            context_probs: self.context_probs.clone(),
            k: self.k,
            d: self.support.upper,
            reward_dists: self.reward_dists.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Environment {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let spec = EnvironmentSpec::deserialize(deserializer)?;
        let support = SupportInterval::new(spec.d).map_err(D::Error::custom)?;
        Environment::new(spec.context_probs, spec.reward_dists, spec.k, support)
            .map_err(D::Error::custom)
    }
}

/// Behavior policy propensities, one length-K vector per context. Exact
/// zeros are allowed and mark actions the logger never takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorSpec {
    pub propensities: Vec<Vec<f64>>,
}

impl BehaviorSpec {
    pub fn validate_for(&self, k: usize, n_contexts: usize) -> Result<(), Error> {
        if self.propensities.len() != n_contexts {
            return Err(Error::InvalidBehavior {
                reason: format!(
                    "{} propensity rows for {n_contexts} contexts",
                    self.propensities.len()
                ),
            });
        }
        for (x, row) in self.propensities.iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidBehavior {
                    reason: format!("context {x} row has length {}, expected {k}", row.len()),
                });
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidBehavior {
                    reason: format!("context {x} has a negative or non-finite propensity"),
                });
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidBehavior {
                    reason: format!("context {x} propensities sum to {total}, not 1"),
                });
            }
        }
        Ok(())
    }
}

/// Exact marginal reward CDF of a policy: the context mixture of its
/// conditional CDFs, with the terminal value pinned to exactly 1.
#[must_use]
pub fn true_policy_cdf(env: &Environment, pi: &Policy) -> StepFn {
    assert!(
        pi.n_contexts() >= env.n_contexts(),
        "policy covers {} contexts but the environment has {}",
        pi.n_contexts(),
        env.n_contexts()
    );
    let mut jumps = Vec::new();
    for (x, &px) in env.context_probs.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for &(y, p) in &env.reward_dists[x][pi.action(x)].atoms {
            if p > 0.0 {
                jumps.push((y, px * p));
            }
        }
    }
    atoms_to_cdf(jumps)
}

/// True risk of a policy: the functional evaluated on the exact CDF.
pub fn true_risk(env: &Environment, pi: &Policy, rho: &RiskFunctional) -> Result<f64, Error> {
    evaluate_risk(rho, &true_policy_cdf(env, pi), env.support)
}

/// Draws `n` logged rows (context, behavior action, reward, propensities).
/// Row `i` uses its own stream keyed by `(seed, i)`, so the dataset is
/// byte-identical across runs and thread counts.
pub fn sample_dataset(
    env: &Environment,
    behavior: &BehaviorSpec,
    n: usize,
    seed: u64,
) -> Result<Dataset, Error> {
    behavior.validate_for(env.k, env.n_contexts())?;
    if n == 0 {
        return Err(Error::InvalidExperiment {
            reason: "dataset size must be at least 1".to_string(),
        });
    }
    let samples: Vec<LoggedSample> = (0..n)
        .map(|row| {
            let mut rng = row_rng(seed, row as u64);
            let x = categorical(&mut rng, &env.context_probs);
            let a = categorical(&mut rng, &behavior.propensities[x]);
            let y = env.reward_dists[x][a].sample(&mut rng);
            LoggedSample {
                context: x,
                action: a,
                reward: y,
                propensities: behavior.propensities[x].clone(),
            }
        })
        .collect();
    Dataset::new(samples, env.k, env.support, env.n_contexts())
}

/// Perfect conditional CDF model backed by the true environment.
#[derive(Debug, Clone, Copy)]
pub struct OracleModel<'a> {
    env: &'a Environment,
}

impl<'a> OracleModel<'a> {
    #[must_use]
    pub fn new(env: &'a Environment) -> Self {
        Self { env }
    }
}

impl ConditionalCdfModel for OracleModel<'_> {
    fn model_cdf(&self, context: usize, action: usize) -> StepFn {
        self.env.conditional_cdf(context, action)
    }
}

/// Exact DR bias term: the sup norm of the average model error over the
/// uninformative rows. Zero under full overlap or a perfect model.
pub fn oracle_dr_bias<M: ConditionalCdfModel + ?Sized>(
    env: &Environment,
    model: &M,
    data: &Dataset,
    pi: &Policy,
) -> f64 {
    let n = data.n() as f64;
    let mut counts = vec![0usize; data.n_contexts()];
    let mut any = false;
    for s in data.samples() {
        if s.propensities[pi.action(s.context)] == 0.0 {
            counts[s.context] += 1;
            any = true;
        }
    }
    if !any {
        return 0.0;
    }
    let mut coefs = Vec::new();
    let mut model_cdfs = Vec::new();
    let mut true_cdfs = Vec::new();
    for (x, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        coefs.push(count as f64 / n);
        model_cdfs.push(model.model_cdf(x, pi.action(x)));
        true_cdfs.push(env.conditional_cdf(x, pi.action(x)));
    }
    let model_avg = StepFn::linear_combination(
        &coefs
            .iter()
            .copied()
            .zip(model_cdfs.iter())
            .collect::<Vec<_>>(),
    );
    let true_avg = StepFn::linear_combination(
        &coefs
            .iter()
            .copied()
            .zip(true_cdfs.iter())
            .collect::<Vec<_>>(),
    );
    model_avg.sup_norm_distance(&true_avg)
}

/// One member of the sign-vector hard-instance family.
#[derive(Debug, Clone)]
pub struct MinimaxInstance {
    pub theta: Vec<i8>,
    pub delta_gap: f64,
    pub beta_inf: f64,
    pub base_prob: f64,
    pub env: Environment,
    pub behavior: BehaviorSpec,
    pub class: PolicyClass,
    pub star_index: usize,
}

/// All `2^d` sign instances: `d` uniform contexts, first-action rewards
/// `Bern(1/2 + theta_i * delta)`, second-action rewards `Bern(1/2)`, all
/// other actions `Bern(0)`. The behavior assigns `beta_inf` to both
/// distinguished actions (at `K = 2` the second takes the remaining mass).
/// The policy class is all sign policies and `pi_theta` is marked optimal.
pub fn minimax_family(
    d: usize,
    k: usize,
    beta_inf: f64,
    delta_gap: Option<f64>,
    n_for_default: Option<usize>,
) -> Result<Vec<MinimaxInstance>, Error> {
    let delta = match delta_gap {
        Some(v) => v,
        None => {
            let n = n_for_default.ok_or_else(|| Error::InvalidFamily {
                reason: "either delta_gap or n_for_default must be given".to_string(),
            })?;
            (d as f64 / (24.0 * n as f64 * beta_inf)).sqrt().min(0.24)
        }
    };
    sign_family(d, k, beta_inf, delta, 0.5)
}

/// Generalization of [`minimax_family`] with a configurable base success
/// probability: first-action rewards `Bern(p0 + theta_i * delta)` against
/// second-action `Bern(p0)`. Useful for rate experiments with risks that
/// degenerate at `p0 = 1/2`.
pub fn sign_family(
    d: usize,
    k: usize,
    beta_inf: f64,
    delta_gap: f64,
    base_prob: f64,
) -> Result<Vec<MinimaxInstance>, Error> {
    if d == 0 || d > 12 {
        return Err(Error::InvalidFamily {
            reason: format!("context count must lie in 1..=12, got {d}"),
        });
    }
    if k < 2 {
        return Err(Error::InvalidFamily {
            reason: format!("need at least two actions, got {k}"),
        });
    }
    if !(beta_inf > 0.0 && beta_inf <= 0.5) {
        return Err(Error::InvalidFamily {
            reason: format!("beta_inf must lie in (0, 1/2], got {beta_inf}"),
        });
    }
    if !(delta_gap > 0.0 && delta_gap < 0.25) {
        return Err(Error::InvalidFamily {
            reason: format!("delta_gap must lie in (0, 1/4), got {delta_gap}"),
        });
    }
    if base_prob - delta_gap < 0.0 || base_prob + delta_gap > 1.0 {
        return Err(Error::InvalidFamily {
            reason: format!(
                "base probability {base_prob} with gap {delta_gap} leaves [0, 1]"
            ),
        });
    }
    let support = SupportInterval::new(1.0)?;
    let mut row = vec![beta_inf; 2.min(k)];
    if k == 2 {
        row[1] = 1.0 - beta_inf;
    } else {
        row.extend(std::iter::repeat((1.0 - 2.0 * beta_inf) / (k - 2) as f64).take(k - 2));
    }
    let behavior = BehaviorSpec {
        propensities: vec![row; d],
    };
    let n_policies = 1usize << d;
    let policies: Vec<Policy> = (0..n_policies)
        .map(|b| {
            Policy::new((0..d).map(|i| (b >> i) & 1).collect(), k)
                .expect("sign policies are valid by construction")
        })
        .collect();
    let class = PolicyClass::new(policies, d)?;
    let context_probs = vec![1.0 / d as f64; d];
    let mut family = Vec::with_capacity(n_policies);
    for s in 0..n_policies {
        let theta: Vec<i8> = (0..d)
            .map(|i| if (s >> i) & 1 == 0 { 1 } else { -1 })
            .collect();
        let reward_dists: Vec<Vec<DiscreteDist>> = (0..d)
            .map(|i| {
                let mut dists = Vec::with_capacity(k);
                dists.push(DiscreteDist::bernoulli(
                    base_prob + f64::from(theta[i]) * delta_gap,
                ));
                dists.push(DiscreteDist::bernoulli(base_prob));
                for _ in 2..k {
                    dists.push(DiscreteDist::point_mass(0.0));
                }
                dists
            })
            .collect();
        let env = Environment::new(context_probs.clone(), reward_dists, k, support)?;
        family.push(MinimaxInstance {
            theta,
            delta_gap,
            beta_inf,
            base_prob,
            env,
            behavior: behavior.clone(),
            class: class.clone(),
            star_index: s,
        });
    }
    Ok(family)
}

/// What a coverage run checks: one fixed policy against the pointwise
/// bound, or a whole class against the uniform bounds.
#[derive(Debug, Clone)]
pub enum CoverageTarget {
    Policy(Policy),
    Class(PolicyClass),
}

/// Outcome of a Monte Carlo coverage run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub schema_version: u32,
    pub mode: &'static str,
    pub estimator: EstimatorKind,
    pub flavor: Flavor,
    pub delta: f64,
    pub n: usize,
    pub trials: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub threshold: f64,
    pub within_threshold: bool,
}

impl CoverageReport {
    /// One-row CSV in the shared experiment schema; gap columns stay empty.
    #[must_use]
    pub fn to_csv_string(&self) -> String {
        format!(
            "n,mean_gap,se,mean_w1,violation_rate\n{},,,,{}\n",
            self.n, self.violation_rate
        )
    }
}

/// Repeatedly draws datasets and counts trials where an estimate leaves
/// its confidence band. In class mode the violation event is "any policy
/// violates"; DR radii use the exact oracle bias for each drawn dataset.
#[allow(clippy::too_many_arguments)]
pub fn coverage_experiment(
    env: &Environment,
    behavior: &BehaviorSpec,
    target: &CoverageTarget,
    estimator: EstimatorKind,
    config: &BoundConfig,
    n: usize,
    trials: usize,
    seed: u64,
    model: Option<&(dyn ConditionalCdfModel + Sync)>,
) -> Result<CoverageReport, Error> {
    config.validate()?;
    behavior.validate_for(env.k, env.n_contexts())?;
    if trials < 100 {
        return Err(Error::InvalidExperiment {
            reason: format!("coverage needs at least 100 trials, got {trials}"),
        });
    }
    let mode = match target {
        CoverageTarget::Policy(_) => {
            if estimator != EstimatorKind::ClippedIs {
                return Err(Error::InvalidExperiment {
                    reason: "the pointwise bound covers the clipped IS estimator only"
                        .to_string(),
                });
            }
            "pointwise"
        }
        CoverageTarget::Class(_) => {
            if estimator == EstimatorKind::Drc && model.is_none() {
                return Err(Error::MissingModel);
            }
            "uniform"
        }
    };
    let truths: Vec<StepFn> = match target {
        CoverageTarget::Policy(pi) => vec![true_policy_cdf(env, pi)],
        CoverageTarget::Class(class) => class
            .policies()
            .iter()
            .map(|pi| true_policy_cdf(env, pi))
            .collect(),
    };
    let flags: Vec<Result<bool, Error>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let data = sample_dataset(env, behavior, n, mix(seed, trial as u64))?;
            match target {
                CoverageTarget::Policy(pi) => {
                    let estimate = clipped_is_estimate(&data, pi);
                    let diag = diagnostics(&data, pi);
                    let radius = pointwise_bound(&diag, n, config.delta, config.flavor);
                    Ok(estimate.sup_norm_distance(&truths[0]) > radius.value)
                }
                CoverageTarget::Class(class) => {
                    let d_pi = class.natarajan_dim();
                    for (idx, pi) in class.policies().iter().enumerate() {
                        let diag = diagnostics(&data, pi);
                        let (estimate, radius) = match estimator {
                            EstimatorKind::ClippedIs => (
                                clipped_is_estimate(&data, pi),
                                uniform_is_radius(&diag, n, data.k(), d_pi, config.delta),
                            ),
                            EstimatorKind::Wis => (
                                wis_cdf_estimate(&data, pi),
                                uniform_wis_radius(&diag, n, data.k(), d_pi, config.delta),
                            ),
                            EstimatorKind::Drc => {
                                let model = model.expect("checked above");
                                let r_bar = oracle_dr_bias(env, model, &data, pi);
                                (
                                    drc_cdf_estimate(&data, pi, model)?,
                                    uniform_dr_radius(
                                        &diag,
                                        n,
                                        data.k(),
                                        d_pi,
                                        config.delta,
                                        r_bar,
                                    ),
                                )
                            }
                        };
                        if estimate.sup_norm_distance(&truths[idx]) > radius.value {
                            return Ok(true);
                        }
                    }
                    Ok(false)
                }
            }
        })
        .collect();
    let mut violations = 0usize;
    for flag in flags {
        if flag? {
            violations += 1;
        }
    }
    let violation_rate = violations as f64 / trials as f64;
    let threshold = config.delta
        + 3.0 * (config.delta * (1.0 - config.delta) / trials as f64).sqrt();
    Ok(CoverageReport {
        schema_version: crate::SCHEMA_VERSION,
        mode,
        estimator,
        flavor: config.flavor,
        delta: config.delta,
        n,
        trials,
        violations,
        violation_rate,
        threshold,
        within_threshold: violation_rate <= threshold,
    })
}

/// Mean suboptimality and distributional distance at one dataset size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub n: usize,
    pub mean_gap: f64,
    pub se: f64,
    pub mean_w1: f64,
}

/// Suboptimality curve over a dataset-size grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub schema_version: u32,
    pub estimator: EstimatorKind,
    pub delta: f64,
    pub trials_per_n: usize,
    pub points: Vec<RatePoint>,
    pub slope: Option<f64>,
}

impl RateReport {
    /// CSV in the shared experiment schema; the violation column stays
    /// empty.
    #[must_use]
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("n,mean_gap,se,mean_w1,violation_rate\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{},\n", p.n, p.mean_gap, p.se, p.mean_w1));
        }
        out
    }
}

/// Runs pessimistic learning across a grid of dataset sizes, cycling
/// through the instance family, and reports the mean oracle suboptimality
/// `rho(pi_star) - rho(pi_tilde)`, its standard error, the mean
/// 1-Wasserstein distance between the selected and optimal reward CDFs,
/// and the least-squares slope of `log(mean gap)` against `log(n)`.
#[allow(clippy::too_many_arguments)]
pub fn rate_curve(
    family: &[MinimaxInstance],
    rho: &RiskFunctional,
    estimator: EstimatorKind,
    delta: f64,
    n_grid: &[usize],
    trials_per_n: usize,
    seed: u64,
) -> Result<RateReport, Error> {
    if family.is_empty() {
        return Err(Error::InvalidFamily {
            reason: "rate curve needs at least one instance".to_string(),
        });
    }
    if n_grid.len() < 4 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidExperiment {
            reason: "n_grid must be strictly increasing with at least 4 points".to_string(),
        });
    }
    if trials_per_n == 0 {
        return Err(Error::InvalidExperiment {
            reason: "trials_per_n must be at least 1".to_string(),
        });
    }
    let config = BoundConfig {
        delta,
        flavor: Flavor::Hoeffding,
        estimator,
        dr_bias: None,
    };
    config.validate()?;
    struct InstanceOracle {
        true_risks: Vec<f64>,
        true_cdfs: Vec<StepFn>,
        star: usize,
    }
    let oracles: Vec<InstanceOracle> = family
        .iter()
        .map(|inst| {
            let true_cdfs: Vec<StepFn> = inst
                .class
                .policies()
                .iter()
                .map(|pi| true_policy_cdf(&inst.env, pi))
                .collect();
            let true_risks = true_cdfs
                .iter()
                .map(|f| evaluate_risk(rho, f, inst.env.support()))
                .collect::<Result<Vec<f64>, Error>>()?;
            let mut star = 0;
            for (i, &v) in true_risks.iter().enumerate().skip(1) {
                if v > true_risks[star] {
                    star = i;
                }
            }
            Ok(InstanceOracle {
                true_risks,
                true_cdfs,
                star,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut points = Vec::with_capacity(n_grid.len());
    for (grid_index, &n) in n_grid.iter().enumerate() {
        let outcomes: Vec<Result<(f64, f64), Error>> = (0..trials_per_n)
            .into_par_iter()
            .map(|trial| {
                let inst = &family[trial % family.len()];
                let oracle = &oracles[trial % family.len()];
                let stream = (grid_index * trials_per_n + trial) as u64;
                let data = sample_dataset(&inst.env, &inst.behavior, n, mix(seed, stream))?;
                let result = if estimator == EstimatorKind::Drc {
                    let model = OracleModel::new(&inst.env);
                    let biases: Vec<f64> = inst
                        .class
                        .policies()
                        .iter()
                        .map(|pi| oracle_dr_bias(&inst.env, &model, &data, pi))
                        .collect();
                    pessimistic_select_with(
                        &data,
                        &inst.class,
                        rho,
                        &config,
                        Some(&model),
                        Some(&biases),
                    )?
                } else {
                    pessimistic_select(&data, &inst.class, rho, &config, None)?
                };
                let gap = oracle.true_risks[oracle.star] - oracle.true_risks[result.selected];
                let w1 = wasserstein1(
                    &oracle.true_cdfs[oracle.star],
                    &oracle.true_cdfs[result.selected],
                    inst.env.support(),
                )?;
                Ok((gap, w1))
            })
            .collect();
        let mut gaps = Vec::with_capacity(trials_per_n);
        let mut w1s = Vec::with_capacity(trials_per_n);
        for outcome in outcomes {
            let (gap, w1) = outcome?;
            gaps.push(gap);
            w1s.push(w1);
        }
        let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let mean_w1 = w1s.iter().sum::<f64>() / w1s.len() as f64;
        let se = if gaps.len() < 2 {
            0.0
        } else {
            let var = gaps
                .iter()
                .map(|g| (g - mean_gap).powi(2))
                .sum::<f64>()
                / (gaps.len() - 1) as f64;
            (var / gaps.len() as f64).sqrt()
        };
        points.push(RatePoint {
            n,
            mean_gap,
            se,
            mean_w1,
        });
    }
    Ok(RateReport {
        schema_version: crate::SCHEMA_VERSION,
        estimator,
        delta,
        trials_per_n,
        slope: log_log_slope(&points),
        points,
    })
}

fn log_log_slope(points: &[RatePoint]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mean_gap > 0.0)
        .map(|p| ((p.n as f64).ln(), p.mean_gap.ln()))
        .collect();
    if pairs.len() < 2 {
        return None;
    }
    let len = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / len;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pairs
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    Some(sxy / sxx)
}
