//! Seeded Monte Carlo driver.
//!
//! Run `r` of a batch always uses `SeedSpec(master_seed, r)`, whatever the
//! policy, so every policy meets the same rewards (common random numbers)
//! and a batch gives the same numbers on any number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::env::{BanditInstance, RewardModel, RewardStream, SeedSpec};
use crate::kl::kl_raw;
use crate::policy::{PolicyError, PolicySpec, PolicyState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("horizon {horizon} is shorter than the {arms} initialization rounds")]
    HorizonTooShort { horizon: u64, arms: usize },
    #[error("horizon {0} exceeds the 2^32 draws available per arm")]
    HorizonTooLong(u64),
    #[error("at least one run is required")]
    NoRuns,
    #[error("could not build a worker pool: {0}")]
    ThreadPool(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// Rounds at which a trace records cumulative regret: `round(10^(k/8))`
/// for `k = 0, 1, ...` below `horizon`, deduplicated, then `horizon`.
pub fn checkpoint_grid(horizon: u64) -> Vec<u64> {
    let mut grid = Vec::new();
    for k in 0.. {
        let t = 10f64.powf(k as f64 / 8.0).round() as u64;
        if t >= horizon {
            break;
        }
        if grid.last() != Some(&t) {
            grid.push(t);
        }
    }
    grid.push(horizon);
    grid
}

/// Cumulative pseudo-regret of one run at the checkpoint rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub label: String,
    pub run_index: u64,
    /// `(t, sum_{s <= t} (mu* - mu_{J(s)}))`.
    pub checkpoints: Vec<(u64, f64)>,
    /// `N_i(T)` per arm.
    pub pulls: Vec<u64>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.checkpoints.last().map_or(0.0, |&(_, r)| r)
    }

    /// Checks monotonicity, pull conservation and the worst-case regret cap.
    pub fn check(&self, instance: &BanditInstance, horizon: u64) -> Result<(), SimError> {
        let total: u64 = self.pulls.iter().sum();
        if total != horizon {
            return Err(SimError::Invariant(format!(
                "{} run {}: pulls sum to {total}, expected {horizon}",
                self.label, self.run_index
            )));
        }
        let max_gap = instance.gaps().into_iter().fold(0.0, f64::max);
        let mut prev = 0.0;
        for &(t, r) in &self.checkpoints {
            if !r.is_finite() || r < prev || r > max_gap * t as f64 * (1.0 + 1e-12) {
                return Err(SimError::Invariant(format!(
                    "{} run {}: regret {r} at t={t} breaks monotonicity or the cap",
                    self.label, self.run_index
                )));
            }
            prev = r;
        }
        Ok(())
    }
}

/// Plays one run of `spec` for `horizon` rounds.
///
/// The reward of an arm's `n`-th pull is draw `n` of that arm in the run's
/// reward stream. Regret is accounted with the true gaps.
pub fn run_single(
    instance: &BanditInstance,
    spec: &PolicySpec,
    horizon: u64,
    seed: SeedSpec,
) -> Result<RegretTrace, SimError> {
    let k = instance.num_arms();
    if horizon < k as u64 {
        return Err(SimError::HorizonTooShort { horizon, arms: k });
    }
    if horizon > 1 << 32 {
        return Err(SimError::HorizonTooLong(horizon));
    }
    let gaps = instance.gaps();
    let grid = checkpoint_grid(horizon);
    let mut next = grid.iter().copied().peekable();
    let mut stream = RewardStream::new(seed);
    let mut policy = PolicyState::new(spec.clone(), k, seed)?;
    let mut checkpoints = Vec::with_capacity(grid.len());

    for t in 1..=horizon {
        let arm = policy.select_arm();
        let draw = policy.arms()[arm].pulls;
        let reward = stream.sample(instance, arm, draw);
        policy.update(arm, reward)?;
        if next.peek() == Some(&t) {
            next.next();
            // Summing N_i * gap_i avoids drift from adding gaps round by round.
            let regret = policy
                .arms()
                .iter()
                .zip(&gaps)
                .map(|(a, g)| a.pulls as f64 * g)
                .sum();
            checkpoints.push((t, regret));
        }
    }

    Ok(RegretTrace {
        label: spec.label.clone(),
        run_index: seed.run_index,
        checkpoints,
        pulls: policy.arms().iter().map(|a| a.pulls).collect(),
    })
}

/// Statistics across runs at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointStats {
    pub t: u64,
    pub mean: f64,
    pub stderr: f64,
    pub q05: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub runs: usize,
    pub points: Vec<CheckpointStats>,
    pub mean_final_pulls: Vec<f64>,
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl AggregateResult {
    /// Aggregates traces of equal horizon. The result does not depend on the
    /// order of `traces`.
    pub fn from_traces(traces: &[RegretTrace]) -> Result<Self, SimError> {
        let first = traces.first().ok_or(SimError::NoRuns)?;
        let mut ordered: Vec<&RegretTrace> = traces.iter().collect();
        ordered.sort_by_key(|t| t.run_index);

        let mut points = Vec::with_capacity(first.checkpoints.len());
        let mut column = Vec::with_capacity(ordered.len());
        for (j, &(t, _)) in first.checkpoints.iter().enumerate() {
            column.clear();
            for trace in &ordered {
                match trace.checkpoints.get(j) {
                    Some(&(tt, r)) if tt == t => column.push(r),
                    _ => {
                        return Err(SimError::Invariant(format!(
                            "run {} has no checkpoint at t={t}",
                            trace.run_index
                        )))
                    }
                }
            }
            let (mean, stderr) = mean_and_stderr(&column);
            column.sort_by(f64::total_cmp);
            points.push(CheckpointStats {
                t,
                mean,
                stderr,
                q05: quantile(&column, 0.05),
                q95: quantile(&column, 0.95),
            });
        }

        let arms = first.pulls.len();
        let runs = ordered.len();
        let mean_final_pulls = (0..arms)
            .map(|i| ordered.iter().map(|t| t.pulls[i] as f64).sum::<f64>() / runs as f64)
            .collect();

        Ok(AggregateResult {
            runs,
            points,
            mean_final_pulls,
        })
    }

    pub fn final_point(&self) -> &CheckpointStats {
        self.points
            .last()
            .expect("aggregates hold at least one checkpoint")
    }
}

/// All runs of one policy in a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRuns {
    pub spec: PolicySpec,
    /// Sorted by run index.
    pub traces: Vec<RegretTrace>,
    pub aggregate: AggregateResult,
}

/// Runs `runs` replications of every spec; run `r` uses `SeedSpec(master_seed, r)`.
///
/// `threads = None` uses the global rayon pool. Output follows the order of
/// `specs` and is identical for any thread count.
pub fn run_batch(
    instance: &BanditInstance,
    specs: &[PolicySpec],
    horizon: u64,
    runs: u64,
    master_seed: u64,
    threads: Option<usize>,
) -> Result<Vec<PolicyRuns>, SimError> {
    if runs == 0 {
        return Err(SimError::NoRuns);
    }
    let jobs: Vec<(usize, u64)> = (0..specs.len())
        .flat_map(|s| (0..runs).map(move |r| (s, r)))
        .collect();
    let execute = || {
        jobs.par_iter()
            .map(|&(s, r)| {
                let trace =
                    run_single(instance, &specs[s], horizon, SeedSpec::new(master_seed, r))?;
                trace.check(instance, horizon)?;
                Ok(trace)
            })
            .collect::<Result<Vec<_>, SimError>>()
    };
    let traces = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?
            .install(execute)?,
        None => execute()?,
    };

    let mut traces = traces.into_iter();
    specs
        .iter()
        .map(|spec| {
            let block: Vec<RegretTrace> = traces.by_ref().take(runs as usize).collect();
            let aggregate = AggregateResult::from_traces(&block)?;
            Ok(PolicyRuns {
                spec: spec.clone(),
                traces: block,
                aggregate,
            })
        })
        .collect()
}

/// Mean and standard error of the run-wise difference `a - b` in final regret.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedDifference {
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
}

impl PairedDifference {
    /// Pairs runs by run index.
    pub fn between(a: &PolicyRuns, b: &PolicyRuns) -> Result<Self, SimError> {
        if a.traces.len() != b.traces.len() || a.traces.is_empty() {
            return Err(SimError::Invariant(
                "paired comparison needs equal, non-empty run sets".into(),
            ));
        }
        let diffs: Vec<f64> = a
            .traces
            .iter()
            .zip(&b.traces)
            .map(|(x, y)| {
                if x.run_index != y.run_index {
                    return Err(SimError::Invariant(format!(
                        "run {} paired with run {}",
                        x.run_index, y.run_index
                    )));
                }
                Ok(x.final_regret() - y.final_regret())
            })
            .collect::<Result<_, _>>()?;
        let (mean, stderr) = mean_and_stderr(&diffs);
        Ok(PairedDifference {
            mean,
            stderr,
            runs: diffs.len(),
        })
    }
}

/// Empirical tail probability next to the bound it should respect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailCheck {
    pub empirical: f64,
    pub stderr: f64,
    pub bound: f64,
}

impl TailCheck {
    fn new(hits: u64, trials: u64, bound: f64) -> Self {
        let p = hits as f64 / trials as f64;
        TailCheck {
            empirical: p,
            stderr: (p * (1.0 - p) / trials as f64).sqrt(),
            bound,
        }
    }

    /// `empirical <= bound + 3 stderr`.
    pub fn passed(&self) -> bool {
        self.empirical <= self.bound + 3.0 * self.stderr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub n: u64,
    /// `Pr[mean_n >= mu + eps]` against `exp(-2 n eps^2)`.
    pub hoeffding: TailCheck,
    /// `(x, Pr[d(mean_n, mu) >= x, mean_n < mu - eps])` against `exp(-n x)`.
    pub chernoff: Vec<(f64, TailCheck)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditTable {
    pub mean: f64,
    pub epsilon: f64,
    pub trials: u64,
    pub rows: Vec<AuditRow>,
}

impl AuditTable {
    pub fn passed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.hoeffding.passed() && r.chernoff.iter().all(|(_, c)| c.passed()))
    }
}

/// Sample sizes audited up to `n_max`: 1, 2, 5, 10, 20, 50, ... and `n_max`.
pub fn audit_sizes(n_max: u64) -> Vec<u64> {
    let mut sizes = Vec::new();
    let mut scale = 1u64;
    'outer: loop {
        for m in [1, 2, 5] {
            let n = m * scale;
            if n >= n_max {
                break 'outer;
            }
            sizes.push(n);
        }
        scale *= 10;
    }
    sizes.push(n_max);
    sizes
}

/// Chernoff levels are `x = c / n` for these `c`, so the bound is `exp(-c)`.
const CHERNOFF_SCALES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const AUDIT_CHUNK: u64 = 1024;

/// Monte Carlo check of the Hoeffding and Chernoff tail bounds for the
/// empirical mean of `n` draws from `model`, for `n` in [`audit_sizes`].
///
/// Each trial draws one sequence of `n_max` rewards and reads its running
/// mean at every audited size.
pub fn hoeffding_audit(
    model: &RewardModel,
    n_max: u64,
    epsilon: f64,
    trials: u64,
    seed: u64,
) -> AuditTable {
    let mu = model.mean();
    let sizes = audit_sizes(n_max.max(1));
    let chunks = trials.div_ceil(AUDIT_CHUNK);
    // Per size: hoeffding hits, then one count per Chernoff scale.
    let width = 1 + CHERNOFF_SCALES.len();

    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let mut counts = vec![0u64; sizes.len() * width];
            let begin = c * AUDIT_CHUNK;
            let end = (begin + AUDIT_CHUNK).min(trials);
            for _ in begin..end {
                let mut sum = 0.0;
                let mut drawn = 0u64;
                for (j, &n) in sizes.iter().enumerate() {
                    while drawn < n {
                        sum += model.sample(&mut rng);
                        drawn += 1;
                    }
                    let mean = sum / n as f64;
                    let row = &mut counts[j * width..(j + 1) * width];
                    if mean >= mu + epsilon - 1e-12 {
                        row[0] += 1;
                    }
                    if mean < mu - epsilon + 1e-12 {
                        let d = kl_raw(mean.clamp(0.0, 1.0), mu);
                        for (k, scale) in CHERNOFF_SCALES.iter().enumerate() {
                            if d >= scale / n as f64 - 1e-12 {
                                row[1 + k] += 1;
                            }
                        }
                    }
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; sizes.len() * width],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let rows = sizes
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let row = &counts[j * width..(j + 1) * width];
            AuditRow {
                n,
                hoeffding: TailCheck::new(
                    row[0],
                    trials,
                    (-2.0 * n as f64 * epsilon * epsilon).exp(),
                ),
                chernoff: CHERNOFF_SCALES
                    .iter()
                    .enumerate()
                    .map(|(k, &scale)| {
                        (
                            scale / n as f64,
                            TailCheck::new(row[1 + k], trials, (-scale).exp()),
                        )
                    })
                    .collect(),
            }
        })
        .collect();

    AuditTable {
        mean: mu,
        epsilon,
        trials,
        rows,
    }
}
