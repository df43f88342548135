//! Runs a configured experiment and writes its output directory:
//!
//! * `regret.csv`: `policy_label,t,mean_regret,stderr,q05,q95`
//! * `pulls.csv`: `policy_label,arm,mean_final_pulls`
//! * `bounds.txt`: empirical regret next to the finite-time bound and the
//!   asymptotic constant
//! * `manifest.txt`: a config document that replays the run exactly

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bounds::{asymptotic_slope, theorem1_bound};
use crate::config::{serialize_config, ConfigError, ExperimentConfig};
use crate::sim::{run_batch, PolicyRuns, SimError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: io::Error },
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for output failures, 3 for
    /// invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Output { .. } => 2,
            ExperimentError::Invariant(_) => 3,
        }
    }
}

/// Everything [`run_experiment`] wrote, for callers that want to print it.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub results: Vec<PolicyRuns>,
    pub asymptotic_slope: f64,
    pub bounds_text: String,
    pub out: PathBuf,
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|source| ExperimentError::Output {
        path: path.to_path_buf(),
        source,
    })
}

pub fn regret_csv(results: &[PolicyRuns]) -> String {
    let mut s = String::from("policy_label,t,mean_regret,stderr,q05,q95\n");
    for r in results {
        for p in &r.aggregate.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.spec.label, p.t, p.mean, p.stderr, p.q05, p.q95
            );
        }
    }
    s
}

pub fn pulls_csv(results: &[PolicyRuns]) -> String {
    let mut s = String::from("policy_label,arm,mean_final_pulls\n");
    for r in results {
        for (arm, n) in r.aggregate.mean_final_pulls.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", r.spec.label, arm, n);
        }
    }
    s
}

pub fn manifest(config: &ExperimentConfig) -> String {
    format!(
        "# bandit-lab {VERSION} manifest\n# replay with: bandit-lab --config manifest.txt --out <dir>\n{}",
        serialize_config(config)
    )
}

fn bounds_report(
    config: &ExperimentConfig,
    results: &[PolicyRuns],
) -> Result<(String, f64), ConfigError> {
    let instance = config.instance()?;
    let slope = asymptotic_slope(&instance);
    let horizon = config.horizon as f64;
    let log_t = horizon.ln();
    let mut s = String::new();
    let _ = writeln!(s, "# bandit-lab {VERSION} regret summary");
    let _ = writeln!(s, "horizon = {}", config.horizon);
    let _ = writeln!(s, "runs = {}", config.runs);
    let _ = writeln!(s, "asymptotic_slope = {}", slope.value);
    if slope.degenerate {
        let _ = writeln!(s, "# mu* = 1: arms with d(mu_i, 1) = inf contribute 0");
    }
    let _ = writeln!(s, "slope_times_log_t = {}", slope.value * log_t);
    for r in results {
        let fin = r.aggregate.final_point();
        let _ = writeln!(s, "\n[policy {}]", r.spec.label);
        let _ = writeln!(s, "kind = {}", r.spec.kind);
        let _ = writeln!(s, "final_mean_regret = {}", fin.mean);
        let _ = writeln!(s, "final_stderr = {}", fin.stderr);
        let _ = writeln!(s, "final_regret_over_log_t = {}", fin.mean / log_t);
        let Some(alpha) = r.spec.kind.alpha() else {
            continue;
        };
        match theorem1_bound(&instance, config.epsilon, alpha, horizon) {
            Ok(report) => {
                let _ = writeln!(s, "{report}");
                let _ = writeln!(s, "bound_holds = {}", fin.mean <= report.total);
            }
            Err(e) => {
                let _ = writeln!(s, "bound = not applicable ({e})");
            }
        }
    }
    Ok((s, slope.value))
}

/// Validates `config`, runs every policy and writes the output directory.
///
/// `threads = None` uses the default worker pool. Nothing is written until
/// all runs have finished.
pub fn run_experiment(
    config: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<ExperimentOutcome, ExperimentError> {
    config.validate()?;
    let instance = config.instance()?;

    fs::create_dir_all(&config.out).map_err(|source| ExperimentError::Output {
        path: config.out.clone(),
        source,
    })?;

    let results = run_batch(
        &instance,
        &config.policies,
        config.horizon,
        config.runs,
        config.seed,
        threads,
    )
    .map_err(|e| match e {
        SimError::Invariant(msg) => ExperimentError::Invariant(msg),
        other => ExperimentError::Invariant(other.to_string()),
    })?;

    let regret = regret_csv(&results);
    if regret
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1))
        .any(|v| v.parse::<f64>().map_or(true, |x| !x.is_finite()))
    {
        return Err(ExperimentError::Invariant(
            "non-finite value in regret.csv".into(),
        ));
    }
    let (bounds_text, slope) = bounds_report(config, &results)?;

    write_file(&config.out.join("regret.csv"), &regret)?;
    write_file(&config.out.join("pulls.csv"), &pulls_csv(&results))?;
    write_file(&config.out.join("bounds.txt"), &bounds_text)?;
    write_file(&config.out.join("manifest.txt"), &manifest(config))?;

    Ok(ExperimentOutcome {
        results,
        asymptotic_slope: slope,
        bounds_text,
        out: config.out.clone(),
    })
}

/// One line per policy comparing final regret with the asymptotic constant.
pub fn summary_table(outcome: &ExperimentOutcome, horizon: u64) -> String {
    let log_t = (horizon as f64).ln();
    let mut s = format!(
        "{:<24} {:>14} {:>10} {:>12} {:>12}\n",
        "policy", "regret(T)", "stderr", "regret/logT", "lower slope"
    );
    for r in &outcome.results {
        let fin = r.aggregate.final_point();
        let _ = writeln!(
            s,
            "{:<24} {:>14.4} {:>10.4} {:>12.4} {:>12.4}",
            r.spec.label,
            fin.mean,
            fin.stderr,
            fin.mean / log_t,
            outcome.asymptotic_slope
        );
    }
    s
}
