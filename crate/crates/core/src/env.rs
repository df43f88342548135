//! Reward-generating environments with counter-based seeded sampling.
//!
//! A reward is a pure function of `(master_seed, run_index, arm, draw)`:
//! each run owns one ChaCha stream and every `(arm, draw)` pair owns a
//! disjoint block range inside it. Runs can therefore be replayed in
//! isolation, and two policies facing the same run see the same sequence
//! of rewards from every arm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use thiserror::Error;

use crate::kl::Probability;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("a bandit instance needs at least two arms, got {0}")]
    TooFewArms(usize),
    #[error("at most {MAX_ARMS} arms are supported, got {0}")]
    TooManyArms(usize),
    #[error("bernoulli parameter must lie in [0, 1], got {0}")]
    BernoulliParameter(f64),
    #[error("discrete law: {0}")]
    Discrete(String),
    #[error("beta parameters must be finite and positive, got a={0}, b={1}")]
    BetaParameters(f64, f64),
    #[error("arm index {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
}

/// Largest supported arm count; each arm gets 2^32 draws of block space.
pub const MAX_ARMS: usize = 1 << 12;

/// A reward distribution supported on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardModel {
    Bernoulli {
        p: f64,
    },
    /// Finite support; `cumulative` is the running sum of `probs`.
    Discrete {
        support: Vec<f64>,
        probs: Vec<f64>,
        cumulative: Vec<f64>,
    },
    /// Beta(a, b), already confined to `[0, 1]`.
    Beta {
        a: f64,
        b: f64,
        sampler: Beta<f64>,
    },
}

impl RewardModel {
    pub fn bernoulli(p: f64) -> Result<Self, EnvError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(EnvError::BernoulliParameter(p));
        }
        Ok(RewardModel::Bernoulli { p })
    }

    pub fn discrete(support: Vec<f64>, probs: Vec<f64>) -> Result<Self, EnvError> {
        if support.is_empty() {
            return Err(EnvError::Discrete("empty support".into()));
        }
        if support.len() != probs.len() {
            return Err(EnvError::Discrete(format!(
                "{} support points but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if let Some(x) = support.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(EnvError::Discrete(format!(
                "support point {x} outside [0, 1]"
            )));
        }
        if let Some(q) = probs.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(EnvError::Discrete(format!(
                "probability {q} outside [0, 1]"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(EnvError::Discrete(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        let cumulative = probs
            .iter()
            .scan(0.0, |acc, q| {
                *acc += q;
                Some(*acc)
            })
            .collect();
        Ok(RewardModel::Discrete {
            support,
            probs,
            cumulative,
        })
    }

    pub fn beta(a: f64, b: f64) -> Result<Self, EnvError> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(EnvError::BetaParameters(a, b));
        }
        let sampler = Beta::new(a, b).map_err(|_| EnvError::BetaParameters(a, b))?;
        Ok(RewardModel::Beta { a, b, sampler })
    }

    /// Exact mean of the law.
    pub fn mean(&self) -> f64 {
        match self {
            RewardModel::Bernoulli { p } => *p,
            RewardModel::Discrete { support, probs, .. } => {
                let m: f64 = support.iter().zip(probs).map(|(x, q)| x * q).sum();
                m.clamp(0.0, 1.0)
            }
            RewardModel::Beta { a, b, .. } => a / (a + b),
        }
    }

    /// Exact variance of the law.
    pub fn variance(&self) -> f64 {
        match self {
            RewardModel::Bernoulli { p } => p * (1.0 - p),
            RewardModel::Discrete { support, probs, .. } => {
                let m = self.mean();
                support
                    .iter()
                    .zip(probs)
                    .map(|(x, q)| q * (x - m).powi(2))
                    .sum()
            }
            RewardModel::Beta { a, b, .. } => {
                let s = a + b;
                a * b / (s * s * (s + 1.0))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RewardModel::Bernoulli { p } => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            RewardModel::Discrete {
                support,
                cumulative,
                ..
            } => {
                let u: f64 = rng.random();
                let idx = cumulative.partition_point(|&c| c <= u);
                support[idx.min(support.len() - 1)]
            }
            RewardModel::Beta { sampler, .. } => sampler.sample(rng).clamp(0.0, 1.0),
        }
    }
}

/// An immutable set of arms with their true means.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    arms: Vec<RewardModel>,
    means: Vec<f64>,
    best_arm: usize,
}

impl BanditInstance {
    /// Builds an instance; ties for the best mean go to the smallest index.
    pub fn new(arms: Vec<RewardModel>) -> Result<Self, EnvError> {
        if arms.len() < 2 {
            return Err(EnvError::TooFewArms(arms.len()));
        }
        if arms.len() > MAX_ARMS {
            return Err(EnvError::TooManyArms(arms.len()));
        }
        let means: Vec<f64> = arms.iter().map(RewardModel::mean).collect();
        let mut best_arm = 0;
        for (i, &m) in means.iter().enumerate() {
            if m > means[best_arm] {
                best_arm = i;
            }
        }
        Ok(BanditInstance {
            arms,
            means,
            best_arm,
        })
    }

    /// Shorthand for an all-Bernoulli instance.
    pub fn bernoulli(means: &[f64]) -> Result<Self, EnvError> {
        let arms = means
            .iter()
            .map(|&p| RewardModel::bernoulli(p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(arms)
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arms(&self) -> &[RewardModel] {
        &self.arms
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, arm: usize) -> Probability {
        Probability::new(self.means[arm]).expect("means are validated at construction")
    }

    pub fn best_arm(&self) -> usize {
        self.best_arm
    }

    pub fn best_mean(&self) -> f64 {
        self.means[self.best_arm]
    }

    /// `mu* - mu_i` for every arm.
    pub fn gaps(&self) -> Vec<f64> {
        let best = self.best_mean();
        self.means.iter().map(|m| best - m).collect()
    }

    /// Largest mean strictly below `mu*`, if any arm is strictly suboptimal.
    pub fn runner_up_mean(&self) -> Option<f64> {
        let best = self.best_mean();
        self.means
            .iter()
            .copied()
            .filter(|&m| m < best)
            .reduce(f64::max)
    }
}

/// Shorthand for [`BanditInstance::new`].
pub fn make_instance(models: Vec<RewardModel>) -> Result<BanditInstance, EnvError> {
    BanditInstance::new(models)
}

/// Identifies one replication of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub run_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, run_index: u64) -> Self {
        SeedSpec {
            master_seed,
            run_index,
        }
    }
}

// ChaCha block counters are 64 bits; 12 bits of arm, 32 bits of draw and
// 2^20 blocks of headroom per draw for rejection samplers.
const DRAW_BITS: u32 = 32;
const BLOCKS_PER_DRAW_BITS: u32 = 20;
const WORDS_PER_BLOCK: u128 = 16;

/// The reward stream of one run.
#[derive(Debug, Clone)]
pub struct RewardStream {
    rng: ChaCha8Rng,
}

impl RewardStream {
    pub fn new(seed: SeedSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.master_seed);
        rng.set_stream(seed.run_index);
        RewardStream { rng }
    }

    /// Reward of the `draw`-th sample (0-based) taken from `arm`.
    pub fn sample(&mut self, instance: &BanditInstance, arm: usize, draw: u64) -> f64 {
        debug_assert!(arm < MAX_ARMS && draw < 1 << DRAW_BITS);
        let key = ((arm as u128) << DRAW_BITS) | draw as u128;
        self.rng
            .set_word_pos((key << BLOCKS_PER_DRAW_BITS) * WORDS_PER_BLOCK);
        instance.arms[arm].sample(&mut self.rng)
    }
}

/// Reward of the `draw`-th sample of `arm` in the run named by `seed`.
///
/// Identical arguments always give the identical reward.
pub fn sample_reward(
    instance: &BanditInstance,
    arm: usize,
    seed: SeedSpec,
    draw: u64,
) -> Result<f64, EnvError> {
    if arm >= instance.num_arms() {
        return Err(EnvError::ArmOutOfRange {
            arm,
            arms: instance.num_arms(),
        });
    }
    Ok(RewardStream::new(seed).sample(instance, arm, draw))
}
