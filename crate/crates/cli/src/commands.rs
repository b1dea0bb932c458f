//! Command implementations: input loading with path-labeled validation
//! errors, the config file shapes, and the JSON/CSV writers. Reading or
//! validating an input maps to exit code 2; failing to produce an output
//! maps to exit code 3.

use std::fmt;
use std::fs;

use serde::Deserialize;
use serde_json::json;

use riskpess_core::{
    coverage_experiment, diagnostics, estimator_cdf, greedy_select, lipschitz_constant,
    minimax_family, pessimistic_select, plug_in_risk, pointwise_bound, sample_dataset,
    sign_family, BehaviorSpec, BoundConfig, ConditionalCdfModel, CoverageTarget, Dataset,
    Environment, EstimatorKind, Flavor, LearnResult, MinimaxInstance, OracleModel, Policy,
    PolicyClass, RateReport, RiskFunctional, TableModel, SCHEMA_VERSION,
};

use crate::{EstimatorArg, EvaluateArgs, ExperimentArgs, FlavorArg, GenDataArgs, LearnArgs};

pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(msg) | Self::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl From<riskpess_core::Error> for CliError {
    fn from(e: riskpess_core::Error) -> Self {
        Self::Validation(e.to_string())
    }
}

pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("RISKPESS_THREADS") {
            Ok(raw) => Some(raw.trim().parse::<usize>().map_err(|_| {
                CliError::Validation(format!(
                    "RISKPESS_THREADS must be a positive integer, got {raw:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    match requested {
        Some(0) => Err(CliError::Validation(
            "thread count must be at least 1".to_string(),
        )),
        other => Ok(other),
    }
}

fn read_file(path: &str) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {path}: {e}")))
}

fn parse_json<'a, T: Deserialize<'a>>(text: &'a str, what: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Validation(format!("{what}: {e}")))
}

fn load_json<T: for<'a> Deserialize<'a>>(path: &str) -> Result<T, CliError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{path}: {e}")))
}

fn write_file(path: &str, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {path}: {e}")))
}

fn write_json(path: &str, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot encode {path}: {e}")))?;
    write_file(path, &format!("{text}\n"))
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot encode output: {e}")))?;
    println!("{text}");
    Ok(())
}

impl EstimatorArg {
    fn kind(self) -> EstimatorKind {
        match self {
            Self::Is => EstimatorKind::ClippedIs,
            Self::Wis => EstimatorKind::Wis,
            Self::Dr => EstimatorKind::Drc,
        }
    }
}

impl FlavorArg {
    fn flavor(self) -> Flavor {
        match self {
            Self::Hoeffding => Flavor::Hoeffding,
            Self::Bernstein => Flavor::Bernstein,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicySpec {
    actions: Vec<usize>,
}

impl PolicySpec {
    fn resolve(self, k: usize, n_contexts: usize, what: &str) -> Result<Policy, CliError> {
        let pi = Policy::new(self.actions, k)?;
        if pi.n_contexts() < n_contexts {
            return Err(CliError::Validation(format!(
                "{what} covers {} contexts but {n_contexts} are needed",
                pi.n_contexts()
            )));
        }
        Ok(pi)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassSpec {
    policies: Vec<PolicySpec>,
    #[serde(default)]
    natarajan_dim: Option<usize>,
}

/// Resolved class plus where its dimension came from ("file" or
/// "bruteforce").
fn resolve_class(
    spec: ClassSpec,
    k: usize,
    n_contexts: usize,
) -> Result<(PolicyClass, &'static str), CliError> {
    let policies = spec
        .policies
        .into_iter()
        .map(|p| p.resolve(k, n_contexts, "a class policy"))
        .collect::<Result<Vec<Policy>, CliError>>()?;
    match spec.natarajan_dim {
        Some(dim) => Ok((PolicyClass::new(policies, dim)?, "file")),
        None => {
            let width = policies
                .first()
                .map(Policy::n_contexts)
                .unwrap_or(n_contexts);
            Ok((PolicyClass::with_bruteforce_dim(policies, width)?, "bruteforce"))
        }
    }
}

pub fn gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let env: Environment = load_json(&args.env)?;
    let behavior: BehaviorSpec = load_json(&args.behavior)?;
    let data = sample_dataset(&env, &behavior, args.n, args.seed)?;
    let text = data.to_jsonl_string()?;
    write_file(&args.out, &text)?;
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "path": args.out,
        "n": data.n(),
        "K": data.k(),
        "D": data.support().upper,
        "n_contexts": data.n_contexts(),
        "seed": args.seed,
    }))
}

fn load_dataset(path: &str) -> Result<Dataset, CliError> {
    let text = read_file(path)?;
    Dataset::from_jsonl_str(&text)
        .map_err(|e| CliError::Validation(format!("{path}: {e}")))
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let policy: PolicySpec = load_json(&args.policy)?;
    let pi = policy.resolve(data.k(), data.n_contexts(), &args.policy)?;
    let rho: RiskFunctional = parse_json(&args.risk, "--risk")?;
    let table: Option<TableModel> = match &args.model {
        Some(path) => Some(load_json(path)?),
        None => None,
    };
    let model = table
        .as_ref()
        .map(|m| m as &(dyn ConditionalCdfModel + Sync));
    let kind = args.estimator.kind();
    let lipschitz = lipschitz_constant(&rho, data.support())?;
    let rho_hat = plug_in_risk(&data, &pi, &rho, kind, model)?;
    let diag = diagnostics(&data, &pi);
    let radius = pointwise_bound(&diag, data.n(), args.delta, args.flavor.flavor());
    let lcb = rho_hat - lipschitz * radius.value;
    if let Some(path) = &args.dump_cdf {
        let cdf = estimator_cdf(&data, &pi, kind, model)?;
        write_json(path, &json!({ "schema_version": SCHEMA_VERSION, "cdf": cdf }))?;
    }
    print_json(&json!({
        "schema_version": SCHEMA_VERSION,
        "estimator": kind,
        "risk": rho,
        "lipschitz": lipschitz,
        "rho_hat": rho_hat,
        "pointwise_radius": radius,
        "lcb": lcb,
        "diagnostics": diag,
    }))
}

pub fn learn(args: &LearnArgs) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let spec: ClassSpec = load_json(&args.class)?;
    let (class, dim_source) = resolve_class(spec, data.k(), data.n_contexts())?;
    let rho: RiskFunctional = parse_json(&args.risk, "--risk")?;
    let table: Option<TableModel> = match &args.model {
        Some(path) => Some(load_json(path)?),
        None => None,
    };
    let model = table
        .as_ref()
        .map(|m| m as &(dyn ConditionalCdfModel + Sync));
    let kind = args.estimator.kind();
    let result = if args.greedy {
        greedy_select(&data, &class, &rho, kind, model)?
    } else {
        let config = BoundConfig {
            delta: args.delta,
            flavor: args.flavor.flavor(),
            estimator: kind,
            dr_bias: args.dr_bias,
        };
        pessimistic_select(&data, &class, &rho, &config, model)?
    };
    let json_path = format!("{}.json", args.out);
    let csv_path = format!("{}.csv", args.out);
    write_json(&json_path, &result)?;
    write_file(&csv_path, &result.to_csv_string())?;
    print_json(&learn_summary(
        &result,
        &class,
        dim_source,
        &json_path,
        &csv_path,
    ))
}

fn learn_summary(
    result: &LearnResult,
    class: &PolicyClass,
    dim_source: &str,
    json_path: &str,
    csv_path: &str,
) -> serde_json::Value {
    let selected = &result.reports[result.selected];
    let best_lcb = selected.lcb;
    let tied: Vec<usize> = result
        .reports
        .iter()
        .filter(|r| r.lcb == best_lcb)
        .map(|r| r.policy_index)
        .collect();
    let mut summary = json!({
        "schema_version": SCHEMA_VERSION,
        "mode": result.mode,
        "selected": result.selected,
        "actions": class.policies()[result.selected].actions,
        "rho_hat": selected.rho_hat,
        "radius": selected.radius,
        "lcb": selected.lcb,
        "natarajan_dim": class.natarajan_dim(),
        "natarajan_dim_source": dim_source,
        "out_json": json_path,
        "out_csv": csv_path,
    });
    if tied.len() > 1 {
        summary["tied_indices"] = json!(tied);
    }
    summary
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoverageConfig {
    env_path: String,
    behavior_path: String,
    #[serde(default)]
    policy: Option<PolicySpec>,
    #[serde(default)]
    class_path: Option<String>,
    estimator: EstimatorArg,
    flavor: FlavorArg,
    delta: f64,
    n: usize,
    trials: usize,
    seed: u64,
    #[serde(default)]
    model_path: Option<String>,
}

pub fn coverage(args: &ExperimentArgs) -> Result<(), CliError> {
    let config: CoverageConfig = load_json(&args.config)?;
    let env: Environment = load_json(&config.env_path)?;
    let behavior: BehaviorSpec = load_json(&config.behavior_path)?;
    let estimator = config.estimator.kind();
    let target = match (&config.policy, &config.class_path) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(CliError::Validation(
                "coverage config needs exactly one of \"policy\" or \"class_path\"".to_string(),
            ));
        }
        (Some(_), None) => {
            let spec = config.policy.expect("matched above");
            CoverageTarget::Policy(spec.resolve(env.k(), env.n_contexts(), "policy")?)
        }
        (None, Some(path)) => {
            let spec: ClassSpec = load_json(path)?;
            let (class, _) = resolve_class(spec, env.k(), env.n_contexts())?;
            CoverageTarget::Class(class)
        }
    };
    let table: Option<TableModel> = match &config.model_path {
        Some(path) => Some(load_json(path)?),
        None => None,
    };
    let oracle = OracleModel::new(&env);
    let model: Option<&(dyn ConditionalCdfModel + Sync)> = match (&table, estimator) {
        (Some(m), _) => Some(m),
        (None, EstimatorKind::Drc) => Some(&oracle),
        (None, _) => None,
    };
    let bound = BoundConfig {
        delta: config.delta,
        flavor: config.flavor.flavor(),
        estimator,
        dr_bias: None,
    };
    let report = coverage_experiment(
        &env,
        &behavior,
        &target,
        estimator,
        &bound,
        config.n,
        config.trials,
        config.seed,
        model,
    )?;
    write_json(&format!("{}.json", args.out), &report)?;
    write_file(&format!("{}.csv", args.out), &report.to_csv_string())?;
    print_json(&report)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyConfig {
    d: usize,
    k: usize,
    beta_inf: f64,
    #[serde(default)]
    delta_gap: Option<f64>,
    #[serde(default)]
    base_prob: Option<f64>,
    #[serde(default)]
    n_for_default: Option<usize>,
}

impl FamilyConfig {
    fn build(&self) -> Result<Vec<MinimaxInstance>, CliError> {
        match self.base_prob {
            Some(p) => {
                let gap = self.delta_gap.ok_or_else(|| {
                    CliError::Validation(
                        "family config with base_prob needs an explicit delta_gap".to_string(),
                    )
                })?;
                Ok(sign_family(self.d, self.k, self.beta_inf, gap, p)?)
            }
            None => Ok(minimax_family(
                self.d,
                self.k,
                self.beta_inf,
                self.delta_gap,
                self.n_for_default,
            )?),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateConfig {
    family: FamilyConfig,
    risk: RiskFunctional,
    estimator: EstimatorArg,
    delta: f64,
    n_grid: Vec<usize>,
    trials_per_n: usize,
    seed: u64,
}

pub fn rate_curve(args: &ExperimentArgs) -> Result<(), CliError> {
    let config: RateConfig = load_json(&args.config)?;
    let family = config.family.build()?;
    let report = riskpess_core::rate_curve(
        &family,
        &config.risk,
        config.estimator.kind(),
        config.delta,
        &config.n_grid,
        config.trials_per_n,
        config.seed,
    )?;
    write_json(&format!("{}.json", args.out), &report)?;
    write_file(&format!("{}.csv", args.out), &report.to_csv_string())?;
    let mut printed = serde_json::to_value(&report)
        .map_err(|e| CliError::Runtime(format!("cannot encode output: {e}")))?;
    let (se, ci) = slope_confidence(&report);
    printed["slope_se"] = json!(se);
    printed["slope_ci"] = json!(ci);
    print_json(&printed)
}

/// Standard error and approximate 95% interval for the fitted log-log
/// slope; null when fewer than three grid points have a positive mean gap.
fn slope_confidence(report: &RateReport) -> (Option<f64>, Option<[f64; 2]>) {
    let slope = match report.slope {
        Some(s) => s,
        None => return (None, None),
    };
    let pairs: Vec<(f64, f64)> = report
        .points
        .iter()
        .filter(|p| p.mean_gap > 0.0)
        .map(|p| ((p.n as f64).ln(), p.mean_gap.ln()))
        .collect();
    if pairs.len() < 3 {
        return (None, None);
    }
    let m = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    let intercept = mean_y - slope * mean_x;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let residual: f64 = pairs
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let se = (residual / (m - 2.0) / sxx).sqrt();
    (Some(se), Some([slope - 2.0 * se, slope + 2.0 * se]))
}
