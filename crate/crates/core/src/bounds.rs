//! Data-dependent confidence radii on the sup-norm CDF error.
//!
//! The pointwise bounds hold for one fixed policy; the uniform bounds hold
//! simultaneously over a finite policy class and pay a complexity term
//! `d log(n K^2)` driven by the class's Natarajan dimension, which can be
//! computed exactly by exhaustive search for small universes. All radii are
//! clamped to 1: the sup-norm distance between functions into `[0, 1]`
//! can never exceed it.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::estimators::{Diagnostics, EstimatorKind, Policy};

/// Concentration flavor for the pointwise bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Hoeffding,
    Bernstein,
}

/// Configuration shared by bound computations and the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub delta: f64,
    pub flavor: Flavor,
    pub estimator: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dr_bias: Option<f64>,
}

impl BoundConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidDelta { delta: self.delta });
        }
        if let Some(b) = self.dr_bias {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::InvalidBoundConfig {
                    reason: format!("dr_bias must be a nonnegative real, got {b}"),
                });
            }
        }
        Ok(())
    }
}

/// Deviation and bias parts of a radius, reported unclamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusComponents {
    pub deviation: f64,
    pub bias: f64,
}

/// High-probability sup-norm radius, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceRadius {
    pub value: f64,
    pub components: RadiusComponents,
}

impl ConfidenceRadius {
    fn from_parts(deviation: f64, bias: f64) -> Self {
        Self {
            value: (deviation + bias).min(1.0),
            components: RadiusComponents { deviation, bias },
        }
    }

    fn saturated() -> Self {
        Self::from_parts(0.0, 1.0)
    }
}

fn check_delta(delta: f64) {
    assert!(
        delta > 0.0 && delta < 1.0,
        "delta must lie in (0, 1), got {delta}"
    );
}

/// Single-policy radius for the clipped IS estimator, either flavor.
#[must_use]
pub fn pointwise_bound(
    diag: &Diagnostics,
    n: usize,
    delta: f64,
    flavor: Flavor,
) -> ConfidenceRadius {
    check_delta(delta);
    let log_term = (8.0 / delta).ln();
    let scale = (8.0 / n as f64 * log_term).sqrt();
    match flavor {
        Flavor::Hoeffding => ConfidenceRadius::from_parts((diag.sigma + 1.0) * scale, diag.r),
        Flavor::Bernstein => {
            let Some(beta_min) = diag.beta_min else {
                return ConfidenceRadius::saturated();
            };
            let deviation = (diag.sigma_prime + 1.0) * scale
                + 2.0 * log_term / (3.0 * n as f64 * beta_min);
            ConfidenceRadius::from_parts(deviation, diag.r)
        }
    }
}

fn class_log_term(n: usize, k: usize, d_pi: usize, delta_fraction: f64) -> f64 {
    delta_fraction.ln() + d_pi as f64 * ((n * k * k) as f64).ln()
}

/// Uniform radius for the clipped IS estimator over a class of Natarajan
/// dimension `d_pi`.
#[must_use]
pub fn uniform_is_radius(
    diag: &Diagnostics,
    n: usize,
    k: usize,
    d_pi: usize,
    delta: f64,
) -> ConfidenceRadius {
    check_delta(delta);
    let log_term = class_log_term(n, k, d_pi, 20.0 / delta);
    let deviation = (diag.sigma + 2.0) * (8.0 / n as f64 * log_term).sqrt();
    ConfidenceRadius::from_parts(deviation, diag.r)
}

/// Uniform radius for the WIS estimator. The self-normalization factor
/// `eta` must stay below 1 for the expansion to hold; otherwise the radius
/// saturates.
#[must_use]
pub fn uniform_wis_radius(
    diag: &Diagnostics,
    n: usize,
    k: usize,
    d_pi: usize,
    delta: f64,
) -> ConfidenceRadius {
    check_delta(delta);
    let n_inf = diag.informative.len();
    if n_inf == 0 {
        return ConfidenceRadius::saturated();
    }
    let eta_log = class_log_term(n, k, d_pi, 8.0 / delta);
    let eta =
        diag.sigma * (n as f64 / (2.0 * (n_inf as f64).powi(2)) * eta_log).sqrt();
    if eta >= 1.0 {
        return ConfidenceRadius::saturated();
    }
    let xi_log = class_log_term(n, k, d_pi, 20.0 / delta);
    let deviation =
        (diag.sigma / (1.0 - eta) + 2.0) * (8.0 / n as f64 * xi_log).sqrt();
    let bias = n_inf as f64 / n as f64 * (eta / (1.0 - eta)) + diag.r;
    ConfidenceRadius::from_parts(deviation, bias)
}

/// Uniform radius for the clipped-and-monotonized DR estimator. The bias
/// bound `r_bar` involves the unknown true conditional CDFs and must be
/// supplied (oracle-computed in simulation, asserted otherwise).
#[must_use]
pub fn uniform_dr_radius(
    diag: &Diagnostics,
    n: usize,
    k: usize,
    d_pi: usize,
    delta: f64,
    r_bar: f64,
) -> ConfidenceRadius {
    check_delta(delta);
    assert!(
        r_bar.is_finite() && r_bar >= 0.0,
        "dr bias bound must be a nonnegative real, got {r_bar}"
    );
    let log_term = class_log_term(n, k, d_pi, 20.0 / delta);
    let deviation = 2.0 * (diag.sigma + 1.0) * (8.0 / n as f64 * log_term).sqrt();
    ConfidenceRadius::from_parts(deviation, r_bar)
}

/// Theoretical suboptimality envelope, without the risk-specific `c * L`
/// factor, plus whether the sample-size precondition holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorollaryRate {
    pub value: f64,
    pub precondition_ok: bool,
}

/// Rate envelope `sqrt(d log(n K^2) log(20/delta) / (n beta_inf))` with the
/// precondition `log(20/delta) + d log(n K^2) <= c0 n beta_inf` flagged.
#[must_use]
pub fn corollary_rate(
    n: usize,
    k: usize,
    d_pi: usize,
    delta: f64,
    beta_inf: f64,
    c0: f64,
) -> CorollaryRate {
    check_delta(delta);
    assert!(
        beta_inf > 0.0 && beta_inf <= 1.0,
        "beta_inf must lie in (0, 1], got {beta_inf}"
    );
    let class_log = ((n * k * k) as f64).ln();
    let conf_log = (20.0 / delta).ln();
    let value = (d_pi as f64 * class_log * conf_log / (n as f64 * beta_inf)).sqrt();
    let precondition_ok =
        conf_log + d_pi as f64 * class_log <= c0 * n as f64 * beta_inf;
    CorollaryRate {
        value,
        precondition_ok,
    }
}

/// Finite policy class with its Natarajan dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyClass {
    policies: Vec<Policy>,
    natarajan_dim: usize,
}

impl PolicyClass {
    /// Builds a class with a caller-declared dimension.
    pub fn new(policies: Vec<Policy>, natarajan_dim: usize) -> Result<Self, Error> {
        if policies.is_empty() {
            return Err(Error::InvalidPolicyClass {
                reason: "class must contain at least one policy".to_string(),
            });
        }
        if natarajan_dim == 0 {
            return Err(Error::InvalidPolicyClass {
                reason: "natarajan dimension must be at least 1".to_string(),
            });
        }
        let universe = policies[0].n_contexts();
        if policies.iter().any(|p| p.n_contexts() != universe) {
            return Err(Error::InvalidPolicyClass {
                reason: "all policies must cover the same context universe".to_string(),
            });
        }
        Ok(Self {
            policies,
            natarajan_dim,
        })
    }

    /// Builds a class with the dimension computed exhaustively; a brute
    /// force of 0 (degenerate single-behavior class) is reported as 1 so
    /// the bound's complexity term stays valid.
    pub fn with_bruteforce_dim(policies: Vec<Policy>, n_contexts: usize) -> Result<Self, Error> {
        let dim = natarajan_dim_bruteforce(&policies, n_contexts)?;
        Self::new(policies, dim.max(1))
    }

    #[must_use]
    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    #[must_use]
    pub fn natarajan_dim(&self) -> usize {
        self.natarajan_dim
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.policies.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }
}

/// Exhaustive Natarajan dimension: the size of the largest context subset
/// shattered by the class via two everywhere-different witness maps.
///
/// Guarded to 12 contexts and 4096 policies; beyond that the subset and
/// witness enumeration explodes combinatorially.
pub fn natarajan_dim_bruteforce(policies: &[Policy], n_contexts: usize) -> Result<usize, Error> {
    if policies.is_empty() {
        return Err(Error::InvalidPolicyClass {
            reason: "class must contain at least one policy".to_string(),
        });
    }
    if n_contexts > 12 || policies.len() > 4096 {
        return Err(Error::NatarajanGuard {
            n_contexts,
            n_policies: policies.len(),
        });
    }
    if let Some(p) = policies.iter().find(|p| p.n_contexts() < n_contexts) {
        return Err(Error::InvalidPolicyClass {
            reason: format!(
                "policy covers {} contexts but the universe has {n_contexts}",
                p.n_contexts()
            ),
        });
    }
    let patterns: Vec<Vec<usize>> = {
        let mut set: Vec<Vec<usize>> = policies
            .iter()
            .map(|p| (0..n_contexts).map(|x| p.action(x)).collect())
            .collect();
        set.sort();
        set.dedup();
        set
    };
    for m in (1..=n_contexts).rev() {
        let mut subset = Vec::with_capacity(m);
        if any_subset_shattered(&patterns, n_contexts, m, 0, &mut subset) {
            return Ok(m);
        }
    }
    Ok(0)
}

fn any_subset_shattered(
    patterns: &[Vec<usize>],
    n_contexts: usize,
    m: usize,
    start: usize,
    subset: &mut Vec<usize>,
) -> bool {
    if subset.len() == m {
        return subset_shattered(patterns, subset);
    }
    let remaining = m - subset.len();
    for x in start..=n_contexts.saturating_sub(remaining) {
        subset.push(x);
        if any_subset_shattered(patterns, n_contexts, m, x + 1, subset) {
            subset.pop();
            return true;
        }
        subset.pop();
    }
    false
}

fn subset_shattered(patterns: &[Vec<usize>], subset: &[usize]) -> bool {
    let restrictions: Vec<Vec<usize>> = {
        let mut set: Vec<Vec<usize>> = patterns
            .iter()
            .map(|p| subset.iter().map(|&x| p[x]).collect())
            .collect();
        set.sort();
        set.dedup();
        set
    };
    let lookup: HashSet<&[usize]> = restrictions.iter().map(Vec::as_slice).collect();
    let m = subset.len();
    for (i, f1) in restrictions.iter().enumerate() {
        for f2 in &restrictions[i + 1..] {
            if f1.iter().zip(f2).any(|(a, b)| a == b) {
                continue;
            }
            if all_mixtures_realized(f1, f2, &lookup, m) {
                return true;
            }
        }
    }
    false
}

fn all_mixtures_realized(
    f1: &[usize],
    f2: &[usize],
    lookup: &HashSet<&[usize]>,
    m: usize,
) -> bool {
    let mut mixture = vec![0usize; m];
    for mask in 0u64..(1u64 << m) {
        for (j, slot) in mixture.iter_mut().enumerate() {
            *slot = if mask & (1 << j) != 0 { f1[j] } else { f2[j] };
        }
        if !lookup.contains(mixture.as_slice()) {
            return false;
        }
    }
    true
}
