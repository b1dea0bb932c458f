//! Risk-aware offline policy learning for contextual bandits.
//!
//! The crate is organized around exact step-function arithmetic:
//!
//! - [`step`]: piecewise-constant right-continuous functions, sup-norm and
//!   1-Wasserstein distances, clipping, monotonization, quantile coarsening.
//! - [`risk`]: Lipschitz risk functionals (mean, variance, mean-variance,
//!   entropic, VaR, CVaR, distorted, CPT) evaluated in closed form on step
//!   CDFs, with per-functional Lipschitz constants and monotonicity flags.
//! - [`estimators`]: off-policy CDF estimators (IS, clipped IS, WIS, DR,
//!   clipped+monotonized DR) over logged bandit data, plus the per-policy
//!   overlap diagnostics that feed the confidence bounds.
//! - [`bounds`]: data-dependent sup-norm confidence radii, pointwise and
//!   uniform over a finite policy class, the rate envelope, and a brute-force
//!   Natarajan dimension checker.
//! - [`learner`]: pessimistic (LCB-maximizing) and greedy policy selection
//!   with per-policy reports and a suboptimality certificate.
//! - [`simlab`]: synthetic ground-truth environments, seeded dataset
//!   generation, a minimax instance family, and the Monte Carlo coverage and
//!   rate experiments.
//!
//! All randomness is counter-keyed so experiment outputs are byte-identical
//! across reruns and thread counts.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod learner;
pub mod risk;
pub mod rng;
pub mod simlab;
pub mod step;

pub use bounds::{
    corollary_rate, natarajan_dim_bruteforce, pointwise_bound, uniform_dr_radius,
    uniform_is_radius, uniform_wis_radius, BoundConfig, ConfidenceRadius, CorollaryRate, Flavor,
    PolicyClass, RadiusComponents,
};
pub use error::Error;
pub use estimators::{
    clipped_is_estimate, clipped_is_estimate_with, diagnostics, dr_cdf_estimate,
    drc_cdf_estimate, informative_set, is_cdf_estimate, is_cdf_estimate_with, wis_cdf_estimate,
    wis_cdf_estimate_with, Completion, ConditionalCdfModel, Dataset, Diagnostics, EstimatorKind,
    LoggedSample, Policy, TableModel,
};
pub use learner::{
    estimator_cdf, greedy_select, pessimistic_select, pessimistic_select_with, plug_in_risk,
    suboptimality_certificate, LearnResult, PolicyReport, SuboptimalityCertificate,
};
pub use risk::{
    evaluate_risk, is_monotone_risk, lipschitz_constant, DistortionFn, RiskFunctional, UtilityFn,
};
pub use simlab::{
    coverage_experiment, minimax_family, oracle_dr_bias, rate_curve, sample_dataset, sign_family,
    true_policy_cdf, true_risk, BehaviorSpec, CoverageReport, CoverageTarget, DiscreteDist,
    Environment, MinimaxInstance, OracleModel, RatePoint, RateReport,
};
pub use step::{wasserstein1, StepFn, SupportInterval};

/// Version stamped into every JSON artifact the crate emits.
pub const SCHEMA_VERSION: u32 = 1;
