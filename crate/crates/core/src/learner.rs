//! Pessimistic policy selection over a finite class.
//!
//! Each candidate policy gets a plug-in risk estimate and a uniform
//! confidence radius; the learner returns the policy maximizing the lower
//! confidence bound `rho_hat - L * R(pi)`, where `L` is the risk
//! functional's Lipschitz constant. A greedy baseline that ignores the
//! radius is included for comparison, along with the suboptimality
//! certificate `2 L R(pi_star)` valid on the uniform-coverage event.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    uniform_dr_radius, uniform_is_radius, uniform_wis_radius, BoundConfig, PolicyClass,
};
use crate::error::Error;
use crate::estimators::{
    clipped_is_estimate, diagnostics, drc_cdf_estimate, wis_cdf_estimate, ConditionalCdfModel,
    Dataset, Diagnostics, EstimatorKind, Policy,
};
use crate::risk::{evaluate_risk, lipschitz_constant, RiskFunctional};
use crate::step::StepFn;

/// Builds the learner-facing CDF estimate of the given kind.
pub fn estimator_cdf(
    data: &Dataset,
    pi: &Policy,
    kind: EstimatorKind,
    model: Option<&(dyn ConditionalCdfModel + Sync)>,
) -> Result<StepFn, Error> {
    match kind {
        EstimatorKind::ClippedIs => Ok(clipped_is_estimate(data, pi)),
        EstimatorKind::Wis => Ok(wis_cdf_estimate(data, pi)),
        EstimatorKind::Drc => {
            let model = model.ok_or(Error::MissingModel)?;
            drc_cdf_estimate(data, pi, model)
        }
    }
}

/// Plug-in risk of one policy: the risk functional applied to the
/// estimated CDF. Rejects non-Lipschitz functionals up front.
pub fn plug_in_risk(
    data: &Dataset,
    pi: &Policy,
    rho: &RiskFunctional,
    kind: EstimatorKind,
    model: Option<&(dyn ConditionalCdfModel + Sync)>,
) -> Result<f64, Error> {
    lipschitz_constant(rho, data.support())?;
    let cdf = estimator_cdf(data, pi, kind, model)?;
    evaluate_risk(rho, &cdf, data.support())
}

/// Everything computed for one candidate policy.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyReport {
    pub policy_index: usize,
    pub rho_hat: f64,
    pub radius: f64,
    pub lcb: f64,
    pub diagnostics: Diagnostics,
}

/// Outcome of a selection run over the whole class.
#[derive(Debug, Clone, Serialize)]
pub struct LearnResult {
    pub schema_version: u32,
    pub mode: &'static str,
    pub selected: usize,
    pub risk: RiskFunctional,
    pub lipschitz: f64,
    pub estimator: EstimatorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<BoundConfig>,
    pub reports: Vec<PolicyReport>,
}

impl LearnResult {
    /// Frozen-column CSV table of the per-policy reports.
    #[must_use]
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("policy_index,rho_hat,radius,lcb,r_pi,sigma_pi\n");
        for r in &self.reports {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.policy_index, r.rho_hat, r.radius, r.lcb, r.diagnostics.r, r.diagnostics.sigma
            ));
        }
        out
    }
}

fn argmax_lcb(reports: &[PolicyReport]) -> usize {
    let mut best = 0;
    for (i, r) in reports.iter().enumerate().skip(1) {
        if r.lcb > reports[best].lcb {
            best = i;
        }
    }
    best
}

/// Selects the policy maximizing the lower confidence bound
/// `rho_hat - L * R(pi)` with the uniform radius matching the configured
/// estimator. Ties break to the smallest index.
pub fn pessimistic_select(
    data: &Dataset,
    class: &PolicyClass,
    rho: &RiskFunctional,
    config: &BoundConfig,
    model: Option<&(dyn ConditionalCdfModel + Sync)>,
) -> Result<LearnResult, Error> {
    pessimistic_select_with(data, class, rho, config, model, None)
}

/// As [`pessimistic_select`], with optional per-policy DR bias bounds
/// overriding the single value in the config (needed when an oracle
/// supplies a different `r_bar` for each policy).
pub fn pessimistic_select_with(
    data: &Dataset,
    class: &PolicyClass,
    rho: &RiskFunctional,
    config: &BoundConfig,
    model: Option<&(dyn ConditionalCdfModel + Sync)>,
    dr_biases: Option<&[f64]>,
) -> Result<LearnResult, Error> {
    config.validate()?;
    let l = lipschitz_constant(rho, data.support())?;
    if let Some(biases) = dr_biases {
        if biases.len() != class.len() {
            return Err(Error::InvalidBoundConfig {
                reason: format!(
                    "{} per-policy bias bounds supplied for {} policies",
                    biases.len(),
                    class.len()
                ),
            });
        }
    }
    let n = data.n();
    let k = data.k();
    let d_pi = class.natarajan_dim();
    let reports: Vec<Result<PolicyReport, Error>> = class
        .policies()
        .par_iter()
        .enumerate()
        .map(|(policy_index, pi)| {
            let diag = diagnostics(data, pi);
            let cdf = estimator_cdf(data, pi, config.estimator, model)?;
            let rho_hat = evaluate_risk(rho, &cdf, data.support())?;
            let radius = match config.estimator {
                EstimatorKind::ClippedIs => {
                    uniform_is_radius(&diag, n, k, d_pi, config.delta)
                }
                EstimatorKind::Wis => uniform_wis_radius(&diag, n, k, d_pi, config.delta),
                EstimatorKind::Drc => {
                    let r_bar = dr_biases
                        .map(|b| b[policy_index])
                        .or(config.dr_bias)
                        .ok_or(Error::MissingDrBias)?;
                    uniform_dr_radius(&diag, n, k, d_pi, config.delta, r_bar)
                }
            };
            Ok(PolicyReport {
                policy_index,
                rho_hat,
                radius: radius.value,
                lcb: rho_hat - l * radius.value,
                diagnostics: diag,
            })
        })
        .collect();
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(LearnResult {
        schema_version: crate::SCHEMA_VERSION,
        mode: "pessimistic",
        selected: argmax_lcb(&reports),
        risk: rho.clone(),
        lipschitz: l,
        estimator: config.estimator,
        config: Some(config.clone()),
        reports,
    })
}

/// Baseline that maximizes the plug-in risk alone (radius reported as 0).
pub fn greedy_select(
    data: &Dataset,
    class: &PolicyClass,
    rho: &RiskFunctional,
    kind: EstimatorKind,
    model: Option<&(dyn ConditionalCdfModel + Sync)>,
) -> Result<LearnResult, Error> {
    let l = lipschitz_constant(rho, data.support())?;
    let reports: Vec<Result<PolicyReport, Error>> = class
        .policies()
        .par_iter()
        .enumerate()
        .map(|(policy_index, pi)| {
            let diag = diagnostics(data, pi);
            let cdf = estimator_cdf(data, pi, kind, model)?;
            let rho_hat = evaluate_risk(rho, &cdf, data.support())?;
            Ok(PolicyReport {
                policy_index,
                rho_hat,
                radius: 0.0,
                lcb: rho_hat,
                diagnostics: diag,
            })
        })
        .collect();
    let reports = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(LearnResult {
        schema_version: crate::SCHEMA_VERSION,
        mode: "greedy",
        selected: argmax_lcb(&reports),
        risk: rho.clone(),
        lipschitz: l,
        estimator: kind,
        config: None,
        reports,
    })
}

/// Suboptimality bound `2 L R(pi_star)` from a stored selection run, valid
/// whenever the uniform coverage event holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuboptimalityCertificate {
    pub bound: f64,
    pub vacuous: bool,
}

pub fn suboptimality_certificate(
    result: &LearnResult,
    star_index: usize,
    l: f64,
) -> Result<SuboptimalityCertificate, Error> {
    let report = result
        .reports
        .get(star_index)
        .ok_or(Error::PolicyIndexOutOfRange {
            index: star_index,
            len: result.reports.len(),
        })?;
    Ok(SuboptimalityCertificate {
        bound: 2.0 * l * report.radius,
        vacuous: report.radius >= 1.0,
    })
}
