//! riskpess: risk-aware offline policy learning from logged bandit data.
//!
//! Subcommands cover the full workflow: `gen-data` samples a logged dataset
//! from a synthetic environment, `evaluate` estimates one policy's risk
//! with a pointwise confidence radius, `learn` runs pessimistic (or
//! greedy) selection over a policy class, and `coverage` / `rate-curve`
//! drive the Monte Carlo experiments from config files.
//!
//! Exit codes: 0 on success, 2 for validation errors (bad flags, malformed
//! or missing inputs, infeasible requests), 3 for runtime errors (failed
//! writes). All outputs carry a schema version and are byte-deterministic
//! for fixed seeds, regardless of thread count.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use commands::CliError;

#[derive(Parser)]
#[command(name = "riskpess", version, about = "Risk-aware offline policy learning")]
struct Cli {
    /// Worker threads for experiment trials (fallback: RISKPESS_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a logged dataset from an environment and a behavior policy.
    GenData(GenDataArgs),
    /// Estimate one policy's risk with a pointwise confidence radius.
    Evaluate(EvaluateArgs),
    /// Select a policy from a class by maximizing the risk LCB.
    Learn(LearnArgs),
    /// Run a Monte Carlo coverage experiment from a config file.
    Coverage(ExperimentArgs),
    /// Trace the suboptimality rate curve from a config file.
    RateCurve(ExperimentArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Environment spec (JSON).
    #[arg(long)]
    env: String,
    /// Behavior policy spec (JSON).
    #[arg(long)]
    behavior: String,
    /// Number of logged rows to draw.
    #[arg(long)]
    n: usize,
    /// RNG seed; every row uses its own derived stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSONL path.
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Logged dataset (JSONL).
    #[arg(long)]
    data: String,
    /// Target policy file (JSON with an "actions" array).
    #[arg(long)]
    policy: String,
    /// Risk functional spec (inline JSON).
    #[arg(long, default_value = r#"{"kind":"mean"}"#)]
    risk: String,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Is)]
    estimator: EstimatorArg,
    /// Confidence level for the radius.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = FlavorArg::Hoeffding)]
    flavor: FlavorArg,
    /// Conditional CDF model file (JSON), required for --estimator dr.
    #[arg(long)]
    model: Option<String>,
    /// Also write the estimated CDF to this path.
    #[arg(long)]
    dump_cdf: Option<String>,
}

#[derive(Args)]
struct LearnArgs {
    /// Logged dataset (JSONL).
    #[arg(long)]
    data: String,
    /// Policy class file (JSON with "policies" and optional "natarajan_dim").
    #[arg(long)]
    class: String,
    /// Risk functional spec (inline JSON).
    #[arg(long, default_value = r#"{"kind":"mean"}"#)]
    risk: String,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Is)]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = FlavorArg::Hoeffding)]
    flavor: FlavorArg,
    /// Conditional CDF model file (JSON), required for --estimator dr.
    #[arg(long)]
    model: Option<String>,
    /// Bias allowance for the DR radius, shared across policies.
    #[arg(long)]
    dr_bias: Option<f64>,
    /// Maximize the plain estimate instead of the LCB.
    #[arg(long)]
    greedy: bool,
    /// Output stem; writes <stem>.json and <stem>.csv.
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file (JSON).
    #[arg(long)]
    config: String,
    /// Output stem; writes <stem>.json and <stem>.csv.
    #[arg(long)]
    out: String,
}

/// Estimator names as exposed on the command line and in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EstimatorArg {
    /// Clipped importance sampling.
    Is,
    /// Self-normalized importance sampling.
    Wis,
    /// Doubly robust, clipped and monotonized.
    Dr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum FlavorArg {
    Hoeffding,
    Bernstein,
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads;
    let run = || match cli.command {
        Command::GenData(args) => commands::gen_data(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Learn(args) => commands::learn(&args),
        Command::Coverage(args) => commands::coverage(&args),
        Command::RateCurve(args) => commands::rate_curve(&args),
    };
    let outcome = match commands::resolve_threads(threads) {
        Ok(Some(n)) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot build thread pool: {e}")))
            .and_then(|pool| pool.install(run)),
        Ok(None) => run(),
        Err(e) => Err(e),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
