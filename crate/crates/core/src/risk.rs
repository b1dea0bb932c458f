//! Risk functionals on step (sub-)CDFs over `[0, D]`.
//!
//! Every functional is evaluated in closed form from its tail-integral
//! representation; the integrands are piecewise constant or piecewise
//! exponential on the constant segments of the CDF, so no quadrature is
//! involved. A terminal value below 1 is treated as mass sitting at `D`,
//! which is exactly what the integral representations imply.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;
use crate::step::{StepFn, SupportInterval};

/// Piecewise-linear nondecreasing distortion `g: [0,1] -> [0,1]` with
/// `g(0) = 0` and `g(1) = 1`, stored as knots `(u_k, g_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionFn {
    knots: Vec<(f64, f64)>,
}

impl DistortionFn {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, Error> {
        validate_knots(&knots, "distortion")?;
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if first != (0.0, 0.0) || last != (1.0, 1.0) {
            return Err(Error::InvalidDistortion {
                reason: "knots must run from (0, 0) to (1, 1)".to_string(),
            });
        }
        Ok(Self { knots })
    }

    /// The identity distortion; `Distorted(identity)` equals the mean.
    #[must_use]
    pub fn identity() -> Self {
        Self {
            knots: vec![(0.0, 0.0), (1.0, 1.0)],
        }
    }

    /// The CVaR kink `g(x) = min(x / (1 - alpha), 1)`.
    pub fn cvar_kink(alpha: f64) -> Result<Self, Error> {
        if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
            return Err(Error::InvalidRiskParameter {
                reason: format!("cvar level must lie in (0, 1), got {alpha}"),
            });
        }
        Self::new(vec![(0.0, 0.0), (1.0 - alpha, 1.0), (1.0, 1.0)])
    }

    #[must_use]
    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// Linear interpolation between knots.
    #[must_use]
    pub fn eval(&self, x: f64) -> f64 {
        piecewise_eval(&self.knots, x)
    }

    /// Largest segment slope; the distorted risk on `[0, D]` is
    /// `D * max_slope`-Lipschitz.
    #[must_use]
    pub fn max_slope(&self) -> f64 {
        max_slope(&self.knots)
    }
}

/// Piecewise-linear nondecreasing gain utility `u+: [0, D] -> [0, u+(D)]`
/// with `u+(0) = 0`. The knot domain must end exactly at the reward support's
/// upper end.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityFn {
    knots: Vec<(f64, f64)>,
}

impl UtilityFn {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self, Error> {
        validate_knots(&knots, "utility")?;
        if knots[0] != (0.0, 0.0) {
            return Err(Error::InvalidRiskParameter {
                reason: "utility must start at (0, 0)".to_string(),
            });
        }
        if knots[knots.len() - 1].1 <= 0.0 {
            return Err(Error::InvalidRiskParameter {
                reason: "utility must be positive at the support's upper end".to_string(),
            });
        }
        Ok(Self { knots })
    }

    #[must_use]
    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    #[must_use]
    pub fn eval(&self, y: f64) -> f64 {
        piecewise_eval(&self.knots, y)
    }

    /// Domain end (must equal `D` when used against a support).
    #[must_use]
    pub fn domain_end(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    /// Value at the domain end, i.e. `u+(D)`.
    #[must_use]
    pub fn terminal(&self) -> f64 {
        self.knots[self.knots.len() - 1].1
    }
}

fn validate_knots(knots: &[(f64, f64)], what: &str) -> Result<(), Error> {
    if knots.len() < 2 {
        return Err(Error::InvalidDistortion {
            reason: format!("{what} needs at least two knots"),
        });
    }
    if knots
        .iter()
        .any(|(x, y)| !x.is_finite() || !y.is_finite())
    {
        return Err(Error::InvalidDistortion {
            reason: format!("{what} knots must be finite"),
        });
    }
    if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::InvalidDistortion {
            reason: format!("{what} knot positions must be strictly increasing"),
        });
    }
    if knots.windows(2).any(|w| w[0].1 > w[1].1) {
        return Err(Error::InvalidDistortion {
            reason: format!("{what} values must be nondecreasing"),
        });
    }
    Ok(())
}

fn piecewise_eval(knots: &[(f64, f64)], x: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let idx = knots.partition_point(|&(u, _)| u <= x);
    let (u0, g0) = knots[idx - 1];
    let (u1, g1) = knots[idx];
    g0 + (g1 - g0) * (x - u0) / (u1 - u0)
}

fn max_slope(knots: &[(f64, f64)]) -> f64 {
    knots
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .fold(0.0, f64::max)
}

/// Tagged risk criterion with an exact evaluator and a Lipschitz constant.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskFunctional {
    /// `E[X]`.
    Mean,
    /// `Var(X)`.
    Variance,
    /// `E[X] + alpha * Var(X)`.
    MeanVariance { alpha: f64 },
    /// `(1/alpha) * log E[exp(alpha X)]`, `alpha != 0`.
    Entropic { alpha: f64 },
    /// `inf { xi : P(X <= xi) >= alpha }`. Evaluable, but admits no finite
    /// sup-norm Lipschitz constant, so it is rejected by learning.
    ValueAtRisk { alpha: f64 },
    /// Expected reward in the upper `1 - alpha` tail.
    Cvar { alpha: f64 },
    /// `int_0^D g(1 - F(t)) dt`.
    Distorted { g: DistortionFn },
    /// Cumulative prospect value of the gains `u+(X)` weighted by `w+`. On
    /// nonnegative supports the loss side is identically zero, so only the
    /// gain side is carried.
    Cpt { u_plus: UtilityFn, w_plus: DistortionFn },
}

impl RiskFunctional {
    /// Validates variant parameters (levels in range, nonzero entropic
    /// coefficient, finite values).
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            Self::Mean | Self::Variance | Self::Distorted { .. } | Self::Cpt { .. } => Ok(()),
            Self::MeanVariance { alpha } => {
                if alpha.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidRiskParameter {
                        reason: "mean-variance weight must be finite".to_string(),
                    })
                }
            }
            Self::Entropic { alpha } => {
                if alpha.is_finite() && *alpha != 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidRiskParameter {
                        reason: "entropic coefficient must be finite and nonzero".to_string(),
                    })
                }
            }
            Self::ValueAtRisk { alpha } | Self::Cvar { alpha } => {
                if *alpha > 0.0 && *alpha < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidRiskParameter {
                        reason: format!("level must lie in (0, 1), got {alpha}"),
                    })
                }
            }
        }
    }
}

/// Constant segments of `f` over `[0, D]`: triples `(a, b, value)` with
/// `a < b` covering the interval.
fn segments(f: &StepFn, upper: f64) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(f.breakpoints.len() + 1);
    let mut pos = 0.0;
    let mut val = f.base;
    for (&t, &v) in f.breakpoints.iter().zip(&f.values) {
        if t >= upper {
            break;
        }
        if t > pos {
            out.push((pos, t, val));
            pos = t;
        }
        val = v;
    }
    if pos < upper {
        out.push((pos, upper, val));
    }
    out
}

fn check_cdf_input(f: &StepFn, support: SupportInterval) -> Result<(), Error> {
    f.validate()?;
    if !f.is_cdf() {
        return Err(Error::NotACdf {
            reason: "values leave [0, 1] or decrease; monotonize and clip first",
        });
    }
    if let Some(&t) = f.breakpoints.iter().find(|&&t| !support.contains(t)) {
        return Err(Error::OutsideSupport {
            t,
            upper: support.upper,
        });
    }
    Ok(())
}

fn mean_from_segments(segs: &[(f64, f64, f64)]) -> f64 {
    segs.iter().map(|&(a, b, v)| (1.0 - v) * (b - a)).sum()
}

/// Exact value of the risk functional on a valid (sub-)CDF.
///
/// Missing terminal mass is implicitly located at `D`, which is what the
/// tail-integral forms compute; callers that want a different completion must
/// adjust the CDF before evaluating.
pub fn evaluate_risk(
    rho: &RiskFunctional,
    f: &StepFn,
    support: SupportInterval,
) -> Result<f64, Error> {
    rho.validate()?;
    check_cdf_input(f, support)?;
    let d = support.upper;
    let segs = segments(f, d);
    let value = match rho {
        RiskFunctional::Mean => mean_from_segments(&segs),
        RiskFunctional::Variance => variance_from_segments(&segs),
        RiskFunctional::MeanVariance { alpha } => {
            mean_from_segments(&segs) + alpha * variance_from_segments(&segs)
        }
        RiskFunctional::Entropic { alpha } => {
            let a = *alpha;
            let integral: f64 = segs
                .iter()
                .map(|&(lo, hi, v)| (1.0 - v) * ((a * hi).exp() - (a * lo).exp()) / a)
                .sum();
            (1.0 + a * integral).ln() / a
        }
        RiskFunctional::ValueAtRisk { alpha } => value_at_risk(f, *alpha, d),
        RiskFunctional::Cvar { alpha } => segs
            .iter()
            .map(|&(a, b, v)| ((1.0 - v) / (1.0 - alpha)).min(1.0) * (b - a))
            .sum(),
        RiskFunctional::Distorted { g } => segs
            .iter()
            .map(|&(a, b, v)| g.eval(1.0 - v) * (b - a))
            .sum(),
        RiskFunctional::Cpt { u_plus, w_plus } => {
            if u_plus.domain_end() != d {
                return Err(Error::InvalidRiskParameter {
                    reason: format!(
                        "utility domain ends at {} but the support ends at {d}",
                        u_plus.domain_end()
                    ),
                });
            }
            let pushed = pushforward_cdf(f, u_plus, d);
            let gain_support = SupportInterval::new(u_plus.terminal())?;
            evaluate_risk(
                &RiskFunctional::Distorted { g: w_plus.clone() },
                &pushed,
                gain_support,
            )?
        }
    };
    Ok(value)
}

fn variance_from_segments(segs: &[(f64, f64, f64)]) -> f64 {
    let mean = mean_from_segments(segs);
    let second: f64 = segs
        .iter()
        .map(|&(a, b, v)| (1.0 - v) * (b * b - a * a))
        .sum();
    second - mean * mean
}

fn value_at_risk(f: &StepFn, alpha: f64, d: f64) -> f64 {
    if f.base >= alpha {
        return 0.0;
    }
    let idx = f.values.partition_point(|&v| v < alpha);
    if idx == f.values.len() {
        d
    } else {
        f.breakpoints[idx]
    }
}

/// CDF of `u+(X)` for the (sub-)distribution carried by `f`; terminal deficit
/// mass is placed at `D` before mapping.
fn pushforward_cdf(f: &StepFn, u_plus: &UtilityFn, d: f64) -> StepFn {
    let mut atoms = f.jump_masses();
    let deficit = 1.0 - f.terminal();
    if deficit > 0.0 {
        atoms.push((d, deficit));
    }
    let jumps = atoms
        .into_iter()
        .map(|(y, p)| (u_plus.eval(y), p))
        .collect();
    let pushed = StepFn::from_jumps(0.0, jumps);
    // Pin the terminal level: the masses sum to 1 by construction, but f64
    // accumulation can land a hair off and the distorted integral downstream
    // requires values inside [0, 1].
    StepFn {
        base: pushed.base,
        values: pushed.values.iter().map(|v| v.min(1.0)).collect(),
        breakpoints: pushed.breakpoints,
    }
}

/// Sup-norm Lipschitz constant of the functional on `[0, D]`.
pub fn lipschitz_constant(rho: &RiskFunctional, support: SupportInterval) -> Result<f64, Error> {
    rho.validate()?;
    let d = support.upper;
    match rho {
        RiskFunctional::Mean => Ok(d),
        RiskFunctional::Variance => Ok(3.0 * d * d),
        RiskFunctional::MeanVariance { alpha } => Ok(d + 3.0 * alpha.abs() * d * d),
        RiskFunctional::Entropic { alpha } => {
            let a = *alpha;
            if a > 0.0 {
                Ok(((a * d).exp() - 1.0) / a)
            } else {
                Ok(((a * d).exp() - 1.0) / (a * (a * d).exp()))
            }
        }
        RiskFunctional::ValueAtRisk { .. } => Err(Error::NotLipschitz),
        RiskFunctional::Cvar { alpha } => Ok(d / (1.0 - alpha)),
        RiskFunctional::Distorted { g } => Ok(d * g.max_slope()),
        RiskFunctional::Cpt { u_plus, w_plus } => {
            if u_plus.domain_end() != d {
                return Err(Error::InvalidRiskParameter {
                    reason: format!(
                        "utility domain ends at {} but the support ends at {d}",
                        u_plus.domain_end()
                    ),
                });
            }
            Ok(u_plus.terminal() * w_plus.max_slope())
        }
    }
}

/// Whether the functional respects first-order stochastic dominance
/// (`F1 <= F2` pointwise implies `rho(F1) >= rho(F2)`).
#[must_use]
pub fn is_monotone_risk(rho: &RiskFunctional) -> bool {
    match rho {
        RiskFunctional::Mean
        | RiskFunctional::Entropic { .. }
        | RiskFunctional::ValueAtRisk { .. }
        | RiskFunctional::Cvar { .. }
        | RiskFunctional::Distorted { .. }
        | RiskFunctional::Cpt { .. } => true,
        RiskFunctional::Variance => false,
        RiskFunctional::MeanVariance { alpha } => *alpha == 0.0,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KnotsSpec {
    knots: Vec<[f64; 2]>,
}

impl KnotsSpec {
    fn from_knots(knots: &[(f64, f64)]) -> Self {
        Self {
            knots: knots.iter().map(|&(x, y)| [x, y]).collect(),
        }
    }

    fn pairs(&self) -> Vec<(f64, f64)> {
        self.knots.iter().map(|k| (k[0], k[1])).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RiskSpec {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    g: Option<KnotsSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u_plus: Option<KnotsSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w_plus: Option<KnotsSpec>,
}

impl RiskSpec {
    fn bare(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            alpha: None,
            g: None,
            u_plus: None,
            w_plus: None,
        }
    }
}

impl Serialize for RiskFunctional {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let spec = match self {
            Self::Mean => RiskSpec::bare("mean"),
            Self::Variance => RiskSpec::bare("variance"),
            Self::MeanVariance { alpha } => RiskSpec {
                alpha: Some(*alpha),
                ..RiskSpec::bare("mean_variance")
            },
            Self::Entropic { alpha } => RiskSpec {
                alpha: Some(*alpha),
                ..RiskSpec::bare("entropic")
            },
            Self::ValueAtRisk { alpha } => RiskSpec {
                alpha: Some(*alpha),
                ..RiskSpec::bare("var")
            },
            Self::Cvar { alpha } => RiskSpec {
                alpha: Some(*alpha),
                ..RiskSpec::bare("cvar")
            },
            Self::Distorted { g } => RiskSpec {
                g: Some(KnotsSpec::from_knots(g.knots())),
                ..RiskSpec::bare("distorted")
            },
            Self::Cpt { u_plus, w_plus } => RiskSpec {
                u_plus: Some(KnotsSpec::from_knots(u_plus.knots())),
                w_plus: Some(KnotsSpec::from_knots(w_plus.knots())),
                ..RiskSpec::bare("cpt")
            },
        };
        spec.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RiskFunctional {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let spec = RiskSpec::deserialize(deserializer)?;
        risk_from_spec(spec).map_err(D::Error::custom)
    }
}

fn risk_from_spec(spec: RiskSpec) -> Result<RiskFunctional, Error> {
    let reject_params = |spec: &RiskSpec, allow_alpha: bool| -> Result<(), Error> {
        if spec.alpha.is_some() && !allow_alpha {
            return Err(Error::InvalidRiskParameter {
                reason: format!("'{}' takes no alpha", spec.kind),
            });
        }
        if spec.g.is_some() && spec.kind != "distorted" {
            return Err(Error::InvalidRiskParameter {
                reason: format!("'{}' takes no distortion", spec.kind),
            });
        }
        if (spec.u_plus.is_some() || spec.w_plus.is_some()) && spec.kind != "cpt" {
            return Err(Error::InvalidRiskParameter {
                reason: format!("'{}' takes no utility or weighting", spec.kind),
            });
        }
        Ok(())
    };
    let need_alpha = |spec: &RiskSpec| -> Result<f64, Error> {
        spec.alpha.ok_or_else(|| Error::InvalidRiskParameter {
            reason: format!("'{}' requires alpha", spec.kind),
        })
    };
    let rho = match spec.kind.as_str() {
        "mean" => {
            reject_params(&spec, false)?;
            RiskFunctional::Mean
        }
        "variance" => {
            reject_params(&spec, false)?;
            RiskFunctional::Variance
        }
        "mean_variance" => {
            reject_params(&spec, true)?;
            RiskFunctional::MeanVariance {
                alpha: need_alpha(&spec)?,
            }
        }
        "entropic" => {
            reject_params(&spec, true)?;
            RiskFunctional::Entropic {
                alpha: need_alpha(&spec)?,
            }
        }
        "var" => {
            reject_params(&spec, true)?;
            RiskFunctional::ValueAtRisk {
                alpha: need_alpha(&spec)?,
            }
        }
        "cvar" => {
            reject_params(&spec, true)?;
            RiskFunctional::Cvar {
                alpha: need_alpha(&spec)?,
            }
        }
        "distorted" => {
            reject_params(&spec, false)?;
            let g = spec.g.as_ref().ok_or_else(|| Error::InvalidRiskParameter {
                reason: "'distorted' requires g".to_string(),
            })?;
            RiskFunctional::Distorted {
                g: DistortionFn::new(g.pairs())?,
            }
        }
        "cpt" => {
            reject_params(&spec, false)?;
            let u = spec
                .u_plus
                .as_ref()
                .ok_or_else(|| Error::InvalidRiskParameter {
                    reason: "'cpt' requires u_plus".to_string(),
                })?;
            let w = spec
                .w_plus
                .as_ref()
                .ok_or_else(|| Error::InvalidRiskParameter {
                    reason: "'cpt' requires w_plus".to_string(),
                })?;
            RiskFunctional::Cpt {
                u_plus: UtilityFn::new(u.pairs())?,
                w_plus: DistortionFn::new(w.pairs())?,
            }
        }
        other => {
            return Err(Error::InvalidRiskParameter {
                reason: format!("unknown risk kind '{other}'"),
            })
        }
    };
    rho.validate()?;
    Ok(rho)
}
