//! Off-policy CDF estimators from logged bandit data.
//!
//! Given a dataset logged by a known behavior policy and a deterministic
//! target policy, these functions build step-function estimates of the
//! target's reward CDF: importance sampling, its clipped variant, weighted
//! importance sampling, doubly robust, and the clipped-and-monotonized
//! doubly robust estimator. Rows whose context gives the target's action
//! zero propensity are uninformative; they contribute a configurable
//! completion constant (1 by default, the pessimistic choice for monotone
//! risks) instead of a reweighted indicator.

use std::io::{Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::step::{StepFn, SupportInterval};

const PROPENSITY_SUM_TOL: f64 = 1e-9;
const MODEL_TERMINAL_TOL: f64 = 1e-9;

/// One logged interaction: context, action, reward, and the behavior
/// policy's full propensity vector at that context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggedSample {
    #[serde(rename = "x")]
    pub context: usize,
    #[serde(rename = "a")]
    pub action: usize,
    #[serde(rename = "y")]
    pub reward: f64,
    #[serde(rename = "beta")]
    pub propensities: Vec<f64>,
}

/// Immutable logged dataset with its action count, reward support, and
/// context universe size.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<LoggedSample>,
    k: usize,
    support: SupportInterval,
    n_contexts: usize,
}

impl Dataset {
    pub fn new(
        samples: Vec<LoggedSample>,
        k: usize,
        support: SupportInterval,
        n_contexts: usize,
    ) -> Result<Self, Error> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if k == 0 || n_contexts == 0 {
            return Err(Error::DatasetFormat {
                reason: "action and context counts must be positive".to_string(),
            });
        }
        for (index, s) in samples.iter().enumerate() {
            validate_sample(s, k, support, n_contexts)
                .map_err(|reason| Error::InvalidSample { index, reason })?;
        }
        Ok(Self {
            samples,
            k,
            support,
            n_contexts,
        })
    }

    #[must_use]
    pub fn samples(&self) -> &[LoggedSample] {
        &self.samples
    }

    #[must_use]
    pub fn n(&self) -> usize {
        self.samples.len()
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
    pub fn n_contexts(&self) -> usize {
        self.n_contexts
    }

    /// Serializes as JSONL: one header line, then one line per sample, in
    /// order. The float formatting round-trips bit-exactly.
    pub fn to_jsonl_string(&self) -> Result<String, Error> {
        let header = DatasetHeader {
            k: self.k,
            d: self.support.upper,
            n_contexts: self.n_contexts,
            schema_version: Some(crate::SCHEMA_VERSION),
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl_str(text: &str) -> Result<Self, Error> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header_line) = lines.next().ok_or(Error::DatasetFormat {
            reason: "missing header line".to_string(),
        })?;
        let header: DatasetHeader =
            serde_json::from_str(header_line).map_err(|e| Error::DatasetFormat {
                reason: format!("line 1: {e}"),
            })?;
        let support = SupportInterval::new(header.d)?;
        let mut samples = Vec::new();
        for (idx, line) in lines {
            let sample: LoggedSample =
                serde_json::from_str(line).map_err(|e| Error::DatasetFormat {
                    reason: format!("line {}: {e}", idx + 1),
                })?;
            samples.push(sample);
        }
        Self::new(samples, header.k, support, header.n_contexts)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), Error> {
        let text = self.to_jsonl_string()?;
        let mut file = std::fs::File::create(path)?;
        file.write_all(text.as_bytes())?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, Error> {
        let file = std::fs::File::open(path)?;
        let mut text = String::new();
        std::io::BufReader::new(file).read_to_string(&mut text)?;
        Self::from_jsonl_str(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D")]
    d: f64,
    n_contexts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    schema_version: Option<u32>,
}

fn validate_sample(
    s: &LoggedSample,
    k: usize,
    support: SupportInterval,
    n_contexts: usize,
) -> Result<(), String> {
    if s.context >= n_contexts {
        return Err(format!(
            "context {} outside universe of size {n_contexts}",
            s.context
        ));
    }
    if s.action >= k {
        return Err(format!("action {} outside [0, {k})", s.action));
    }
    if !s.reward.is_finite() || !support.contains(s.reward) {
        return Err(format!(
            "reward {} outside [0, {}]",
            s.reward, support.upper
        ));
    }
    if s.propensities.len() != k {
        return Err(format!(
            "propensity vector has length {} but K = {k}",
            s.propensities.len()
        ));
    }
    if s.propensities.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err("propensities must be finite and nonnegative".to_string());
    }
    let total: f64 = s.propensities.iter().sum();
    if (total - 1.0).abs() > PROPENSITY_SUM_TOL {
        return Err(format!("propensities sum to {total}, not 1"));
    }
    if s.propensities[s.action] <= 0.0 {
        return Err(format!(
            "logged action {} has zero propensity",
            s.action
        ));
    }
    Ok(())
}

/// Deterministic policy: a total map from context ids to action ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>, k: usize) -> Result<Self, Error> {
        if actions.is_empty() {
            return Err(Error::InvalidPolicy {
                reason: "policy table is empty".to_string(),
            });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= k) {
            return Err(Error::InvalidPolicy {
                reason: format!("action {a} outside [0, {k})"),
            });
        }
        Ok(Self { actions })
    }

    #[must_use]
    pub fn action(&self, context: usize) -> usize {
        self.actions[context]
    }

    #[must_use]
    pub fn n_contexts(&self) -> usize {
        self.actions.len()
    }
}

fn assert_policy_covers(data: &Dataset, pi: &Policy) {
    assert!(
        pi.n_contexts() >= data.n_contexts(),
        "policy covers {} contexts but the dataset universe has {}",
        pi.n_contexts(),
        data.n_contexts()
    );
}

/// Value assigned to uninformative samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Completion {
    Zero,
    #[default]
    One,
}

impl Completion {
    #[must_use]
    pub fn value(self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::One => 1.0,
        }
    }
}

/// Learner-facing estimator choices; the raw IS and DR estimates are
/// exposed separately because they need not be valid CDFs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    ClippedIs,
    Wis,
    Drc,
}

/// Indices of rows whose context assigns the target's action nonzero
/// propensity. The zero test is exact equality.
#[must_use]
pub fn informative_set(data: &Dataset, pi: &Policy) -> Vec<usize> {
    assert_policy_covers(data, pi);
    data.samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.propensities[pi.action(s.context)] != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Per-policy overlap diagnostics feeding the confidence radii.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub informative: Vec<usize>,
    pub n: usize,
    pub sigma: f64,
    pub sigma_prime: f64,
    pub r: f64,
    pub beta_min: Option<f64>,
    pub w_bar: Option<f64>,
}

impl Serialize for Diagnostics {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("Diagnostics", 7)?;
        st.serialize_field("n", &self.n)?;
        st.serialize_field("n_informative", &self.informative.len())?;
        st.serialize_field("sigma", &self.sigma)?;
        st.serialize_field("sigma_prime", &self.sigma_prime)?;
        st.serialize_field("r", &self.r)?;
        st.serialize_field("beta_min", &self.beta_min)?;
        st.serialize_field("w_bar", &self.w_bar)?;
        st.end()
    }
}

/// Computes the informative set and the overlap statistics sigma, sigma',
/// r, beta_min, and the mean importance weight.
#[must_use]
pub fn diagnostics(data: &Dataset, pi: &Policy) -> Diagnostics {
    assert_policy_covers(data, pi);
    let informative = informative_set(data, pi);
    let n = data.n();
    let mut inv_sq = 0.0;
    let mut inv = 0.0;
    let mut beta_min = f64::INFINITY;
    let mut w_sum = 0.0;
    for &i in &informative {
        let s = &data.samples()[i];
        let beta = s.propensities[pi.action(s.context)];
        inv_sq += beta.powi(-2);
        inv += beta.recip();
        beta_min = beta_min.min(beta);
        if s.action == pi.action(s.context) {
            w_sum += beta.recip();
        }
    }
    let (beta_min, w_bar) = if informative.is_empty() {
        (None, None)
    } else {
        (Some(beta_min), Some(w_sum / informative.len() as f64))
    };
    Diagnostics {
        r: (n - informative.len()) as f64 / n as f64,
        sigma: (inv_sq / n as f64).sqrt(),
        sigma_prime: (inv / n as f64).sqrt(),
        n,
        beta_min,
        w_bar,
        informative,
    }
}

fn matched_jumps(data: &Dataset, pi: &Policy) -> Vec<(f64, f64)> {
    data.samples()
        .iter()
        .filter(|s| {
            s.action == pi.action(s.context) && s.propensities[s.action] != 0.0
        })
        .map(|s| (s.reward, 1.0 / s.propensities[s.action]))
        .collect()
}

/// Raw importance-sampling CDF estimate. Not clipped: values can exceed 1.
#[must_use]
pub fn is_cdf_estimate(data: &Dataset, pi: &Policy) -> StepFn {
    is_cdf_estimate_with(data, pi, Completion::default())
}

#[must_use]
pub fn is_cdf_estimate_with(data: &Dataset, pi: &Policy, completion: Completion) -> StepFn {
    assert_policy_covers(data, pi);
    let n = data.n() as f64;
    let n_informative = informative_set(data, pi).len();
    let base = completion.value() * (data.n() - n_informative) as f64 / n;
    let jumps = matched_jumps(data, pi)
        .into_iter()
        .map(|(y, w)| (y, w / n))
        .collect();
    StepFn::from_jumps(base, jumps)
}

/// Importance sampling clipped into `[0, 1]`; always a valid (sub-)CDF.
#[must_use]
pub fn clipped_is_estimate(data: &Dataset, pi: &Policy) -> StepFn {
    clipped_is_estimate_with(data, pi, Completion::default())
}

#[must_use]
pub fn clipped_is_estimate_with(data: &Dataset, pi: &Policy, completion: Completion) -> StepFn {
    is_cdf_estimate_with(data, pi, completion).clip_unit()
}

/// Weighted importance sampling: matched weights are normalized by their
/// mean over the informative set, so the output always lies in `[0, 1]`.
///
/// Degenerate inputs fall back to the constant completion value: an empty
/// informative set leaves nothing to reweight, and an informative set with
/// no matched action makes the normalizer zero.
#[must_use]
pub fn wis_cdf_estimate(data: &Dataset, pi: &Policy) -> StepFn {
    wis_cdf_estimate_with(data, pi, Completion::default())
}

#[must_use]
pub fn wis_cdf_estimate_with(data: &Dataset, pi: &Policy, completion: Completion) -> StepFn {
    assert_policy_covers(data, pi);
    let informative = informative_set(data, pi);
    if informative.is_empty() {
        return StepFn::constant(completion.value());
    }
    let jumps = matched_jumps(data, pi);
    let w_bar: f64 = jumps.iter().map(|(_, w)| w).sum::<f64>() / informative.len() as f64;
    if w_bar == 0.0 {
        return StepFn::constant(completion.value());
    }
    let n = data.n() as f64;
    let base = completion.value() * (data.n() - informative.len()) as f64 / n;
    let scaled = jumps
        .into_iter()
        .map(|(y, w)| (y, w / (w_bar * n)))
        .collect();
    let raw = StepFn::from_jumps(base, scaled);
    StepFn {
        base: raw.base,
        values: raw.values.iter().map(|v| v.min(1.0)).collect(),
        breakpoints: raw.breakpoints,
    }
}

/// Supplier of conditional reward CDF models for the doubly robust
/// estimator.
pub trait ConditionalCdfModel {
    /// Model of the reward CDF at `(context, action)`; must be a proper CDF
    /// on the data's support.
    fn model_cdf(&self, context: usize, action: usize) -> StepFn;
}

/// Model backed by an explicit `(context, action)` table of CDFs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableModel {
    pub cdfs: Vec<Vec<StepFn>>,
}

impl ConditionalCdfModel for TableModel {
    fn model_cdf(&self, context: usize, action: usize) -> StepFn {
        self.cdfs[context][action].clone()
    }
}

fn check_model_cdf(f: &StepFn, support: SupportInterval) -> Result<(), Error> {
    f.validate()?;
    if !f.is_cdf() {
        return Err(Error::NotACdf {
            reason: "model CDF is not monotone within [0, 1]",
        });
    }
    if (f.terminal() - 1.0).abs() > MODEL_TERMINAL_TOL {
        return Err(Error::UnassignedMass {
            terminal: f.terminal(),
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

/// Raw doubly robust CDF estimate: model baseline plus importance-weighted
/// correction. May be non-monotone and leave `[0, 1]`.
pub fn dr_cdf_estimate(
    data: &Dataset,
    pi: &Policy,
    model: &dyn ConditionalCdfModel,
) -> Result<StepFn, Error> {
    assert_policy_covers(data, pi);
    let n = data.n() as f64;
    let n_contexts = data.n_contexts();
    let mut counts = vec![0usize; n_contexts];
    let mut matched_weight = vec![0.0f64; n_contexts];
    let mut jumps = Vec::new();
    for s in data.samples() {
        counts[s.context] += 1;
        let beta = s.propensities[pi.action(s.context)];
        if beta != 0.0 && s.action == pi.action(s.context) {
            let w = beta.recip();
            matched_weight[s.context] += w;
            jumps.push((s.reward, w / n));
        }
    }
    let correction = StepFn::from_jumps(0.0, jumps);
    let mut model_cdfs = Vec::new();
    let mut coefs = Vec::new();
    for x in 0..n_contexts {
        if counts[x] == 0 {
            continue;
        }
        let g = model.model_cdf(x, pi.action(x));
        check_model_cdf(&g, data.support())?;
        model_cdfs.push(g);
        coefs.push((counts[x] as f64 - matched_weight[x]) / n);
    }
    let mut terms: Vec<(f64, &StepFn)> = coefs
        .iter()
        .copied()
        .zip(model_cdfs.iter())
        .collect();
    terms.push((1.0, &correction));
    Ok(StepFn::linear_combination(&terms))
}

/// Doubly robust estimate made a valid (sub-)CDF by running max and
/// clipping; never increases the sup-norm error against a true CDF.
pub fn drc_cdf_estimate(
    data: &Dataset,
    pi: &Policy,
    model: &dyn ConditionalCdfModel,
) -> Result<StepFn, Error> {
    Ok(dr_cdf_estimate(data, pi, model)?.monotonize_clip())
}
