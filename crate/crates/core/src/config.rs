//! Experiment configuration documents.
//!
//! The format is line based. Global `key = value` pairs come first, then
//! repeated `[arm]` and `[policy]` sections, each holding its own pairs.
//! Blank lines and lines starting with `#` are ignored.
//!
//! ```text
//! horizon = 10000
//! runs = 1000
//! seed = 7
//! epsilon = 0.025
//! out = results
//!
//! [arm]
//! model = bernoulli
//! p = 0.6
//!
//! [arm]
//! model = discrete
//! support = 0, 0.5, 1
//! probs = 0.25, 0.5, 0.25
//!
//! [arm]
//! model = beta
//! a = 2
//! b = 3
//!
//! [policy]
//! kind = kl_ucb_alpha
//! alpha = 1
//! label = KL-UCB+
//! ```
//!
//! `model` defaults to `bernoulli`. Policy kinds are `kl_ucb_alpha`,
//! `ucb1`, `thompson_bernoulli` and `imed`; `label` defaults to a name
//! derived from the kind.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::bounds::{theorem1_bound, BoundError};
use crate::env::{BanditInstance, RewardModel};
use crate::policy::{PolicyKind, PolicySpec};

pub const DEFAULT_RUNS: u64 = 1000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_OUT: &str = "bandit-lab-out";

/// A diagnostic tied to a line of the document (1-based; 0 means the
/// document as a whole).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config line {}: {}", self.line, self.message)
        }
    }
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        line,
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub arms: Vec<RewardModel>,
    pub policies: Vec<PolicySpec>,
    pub horizon: u64,
    pub runs: u64,
    pub seed: u64,
    /// Epsilon for the bound report; `None` lets the bounds module choose.
    pub epsilon: Option<f64>,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn instance(&self) -> Result<BanditInstance, ConfigError> {
        BanditInstance::new(self.arms.clone()).or_else(|e| err(0, e.to_string()))
    }

    /// Checks everything a run needs before any work starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let instance = self.instance()?;
        if self.policies.is_empty() {
            return err(0, "at least one [policy] section is required");
        }
        if self.horizon < instance.num_arms() as u64 {
            return err(
                0,
                format!(
                    "horizon {} is shorter than the {} initialization rounds",
                    self.horizon,
                    instance.num_arms()
                ),
            );
        }
        if self.horizon > 1 << 32 {
            return err(0, format!("horizon {} is above 2^32", self.horizon));
        }
        if self.runs == 0 {
            return err(0, "runs must be at least 1");
        }
        if let Some(eps) = self.epsilon {
            // Only the window matters here; alpha = 0 is always admissible.
            if let Err(e @ BoundError::EpsilonOutOfWindow { .. }) =
                theorem1_bound(&instance, Some(eps), 0.0, self.horizon as f64)
            {
                return err(0, e.to_string());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Global,
    Arm,
    Policy,
}

struct Entry {
    line: usize,
    value: String,
}

struct Block {
    kind: Section,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Block {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<Entry, ConfigError> {
        self.take(key).ok_or_else(|| ConfigError {
            line: self.line,
            message: format!("missing key `{key}`"),
        })
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().min_by_key(|(_, e)| e.line) {
            Some((key, e)) => err(e.line, format!("unknown key `{key}`")),
            None => Ok(()),
        }
    }
}

fn parse_f64(entry: &Entry, what: &str) -> Result<f64, ConfigError> {
    match entry.value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => err(
            entry.line,
            format!("{what} must be a finite number, got `{}`", entry.value),
        ),
    }
}

fn parse_u64(entry: &Entry, what: &str) -> Result<u64, ConfigError> {
    entry.value.parse::<u64>().or_else(|_| {
        err(
            entry.line,
            format!(
                "{what} must be a non-negative integer, got `{}`",
                entry.value
            ),
        )
    })
}

fn parse_list(entry: &Entry, what: &str) -> Result<Vec<f64>, ConfigError> {
    entry
        .value
        .split(',')
        .map(|s| {
            let item = Entry {
                line: entry.line,
                value: s.trim().to_string(),
            };
            parse_f64(&item, what)
        })
        .collect()
}

fn split_blocks(text: &str) -> Result<Vec<Block>, ConfigError> {
    let mut blocks = vec![Block {
        kind: Section::Global,
        line: 1,
        entries: BTreeMap::new(),
    }];
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('[') {
            let name = header
                .strip_suffix(']')
                .ok_or_else(|| ConfigError {
                    line,
                    message: format!("malformed section header `{trimmed}`"),
                })?
                .trim();
            let kind = match name {
                "arm" => Section::Arm,
                "policy" => Section::Policy,
                other => return err(line, format!("unknown section `[{other}]`")),
            };
            blocks.push(Block {
                kind,
                line,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError {
            line,
            message: format!("expected `key = value`, got `{trimmed}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return err(line, "empty key");
        }
        let block = blocks.last_mut().expect("global block always present");
        if let Some(prev) = block.entries.get(&key) {
            return err(
                line,
                format!("duplicate key `{key}` (first set on line {})", prev.line),
            );
        }
        block.entries.insert(key, Entry { line, value });
    }
    Ok(blocks)
}

fn parse_arm(block: &mut Block) -> Result<RewardModel, ConfigError> {
    let model = block.take("model");
    let name = model.as_ref().map_or("bernoulli", |e| e.value.as_str());
    let line = model.as_ref().map_or(block.line, |e| e.line);
    let built = match name {
        "bernoulli" => {
            let p = block.require("p")?;
            let value = parse_f64(&p, "p")?;
            if !(0.0..=1.0).contains(&value) {
                return err(p.line, format!("arm mean {value} outside [0, 1]"));
            }
            RewardModel::bernoulli(value)
        }
        "discrete" => {
            let support = block.require("support")?;
            let probs = block.require("probs")?;
            let s = parse_list(&support, "support point")?;
            let q = parse_list(&probs, "probability")?;
            RewardModel::discrete(s, q)
        }
        "beta" => {
            let a = block.require("a")?;
            let b = block.require("b")?;
            RewardModel::beta(parse_f64(&a, "a")?, parse_f64(&b, "b")?)
        }
        other => return err(line, format!("unknown arm model `{other}`")),
    };
    built.or_else(|e| err(line, e.to_string()))
}

fn parse_policy(block: &mut Block) -> Result<(PolicySpec, usize), ConfigError> {
    let kind_entry = block.require("kind")?;
    let kind = match kind_entry.value.as_str() {
        "kl_ucb_alpha" => {
            let a = block.require("alpha")?;
            let alpha = parse_f64(&a, "alpha")?;
            if alpha < 0.0 {
                return err(a.line, format!("alpha must be non-negative, got {alpha}"));
            }
            PolicyKind::KlUcb { alpha }
        }
        "ucb1" => PolicyKind::Ucb1,
        "thompson_bernoulli" => PolicyKind::Thompson,
        "imed" => PolicyKind::Imed,
        other => return err(kind_entry.line, format!("unknown policy kind `{other}`")),
    };
    let (label, line) = match block.take("label") {
        Some(e) => {
            if e.value.is_empty() {
                return err(e.line, "label must not be empty");
            }
            if e.value.contains([',', '"']) {
                return err(e.line, "label must not contain commas or quotes");
            }
            (e.value, e.line)
        }
        None => (kind.to_string(), block.line),
    };
    Ok((PolicySpec::new(kind, label), line))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut blocks = split_blocks(text)?.into_iter();
    let mut global = blocks.next().expect("global block always present");

    let horizon = parse_u64(&global.require("horizon")?, "horizon")?;
    let runs = match global.take("runs") {
        Some(e) => parse_u64(&e, "runs")?,
        None => DEFAULT_RUNS,
    };
    let seed = match global.take("seed") {
        Some(e) => parse_u64(&e, "seed")?,
        None => DEFAULT_SEED,
    };
    let epsilon = match global.take("epsilon") {
        Some(e) => {
            let v = parse_f64(&e, "epsilon")?;
            if v <= 0.0 {
                return err(e.line, format!("epsilon must be positive, got {v}"));
            }
            Some(v)
        }
        None => None,
    };
    let out = global
        .take("out")
        .map_or_else(|| PathBuf::from(DEFAULT_OUT), |e| PathBuf::from(e.value));
    global.finish()?;

    let mut arms = Vec::new();
    let mut policies: Vec<PolicySpec> = Vec::new();
    let mut label_lines: BTreeMap<String, usize> = BTreeMap::new();
    for mut block in blocks {
        match block.kind {
            Section::Arm => arms.push(parse_arm(&mut block)?),
            Section::Policy => {
                let (spec, line) = parse_policy(&mut block)?;
                if let Some(first) = label_lines.get(&spec.label) {
                    return err(
                        line,
                        format!(
                            "duplicate policy label `{}` (first used on line {first})",
                            spec.label
                        ),
                    );
                }
                label_lines.insert(spec.label.clone(), line);
                policies.push(spec);
            }
            Section::Global => unreachable!("only the first block is global"),
        }
        block.finish()?;
    }
    if arms.len() < 2 {
        return err(
            0,
            format!(
                "at least two [arm] sections are required, got {}",
                arms.len()
            ),
        );
    }

    let config = ExperimentConfig {
        arms,
        policies,
        horizon,
        runs,
        seed,
        epsilon,
        out,
    };
    config.validate()?;
    Ok(config)
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Renders a document that [`parse_config`] maps back to an equal config.
pub fn serialize_config(config: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "horizon = {}", config.horizon);
    let _ = writeln!(s, "runs = {}", config.runs);
    let _ = writeln!(s, "seed = {}", config.seed);
    if let Some(eps) = config.epsilon {
        let _ = writeln!(s, "epsilon = {eps}");
    }
    let _ = writeln!(s, "out = {}", config.out.display());
    for arm in &config.arms {
        let _ = writeln!(s, "\n[arm]");
        match arm {
            RewardModel::Bernoulli { p } => {
                let _ = writeln!(s, "model = bernoulli\np = {p}");
            }
            RewardModel::Discrete { support, probs, .. } => {
                let _ = writeln!(
                    s,
                    "model = discrete\nsupport = {}\nprobs = {}",
                    join(support),
                    join(probs)
                );
            }
            RewardModel::Beta { a, b, .. } => {
                let _ = writeln!(s, "model = beta\na = {a}\nb = {b}");
            }
        }
    }
    for policy in &config.policies {
        let _ = writeln!(s, "\n[policy]\nkind = {}", policy.kind.config_name());
        if let Some(alpha) = policy.kind.alpha() {
            let _ = writeln!(s, "alpha = {alpha}");
        }
        let _ = writeln!(s, "label = {}", policy.label);
    }
    s
}
