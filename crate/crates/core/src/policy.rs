//! Sequential arm-selection policies: KL-UCB(alpha) and three baselines
//! (UCB1, Bernoulli Thompson sampling and IMED).
//!
//! Every policy pulls arms `0..K` once in index order, then follows its own
//! rule. Ties at an argmax (or IMED's argmin) go to the smallest index.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use thiserror::Error;

use crate::env::SeedSpec;
use crate::kl::{invert_raw, kl_raw};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("a policy needs at least one arm")]
    NoArms,
    #[error("score requested for an arm that has never been pulled")]
    NeverPulled,
    #[error("round must be at least 1")]
    InvalidRound,
    #[error("reward must lie in [0, 1], got {0}")]
    RewardOutOfRange(f64),
    #[error("arm index {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
}

/// Per-arm sufficient statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmState {
    pub pulls: u64,
    pub reward_sum: f64,
}

impl ArmState {
    pub fn new(pulls: u64, reward_sum: f64) -> Self {
        ArmState { pulls, reward_sum }
    }

    /// Empirical mean, or `None` before the first pull.
    pub fn mean(&self) -> Option<f64> {
        (self.pulls > 0).then(|| (self.reward_sum / self.pulls as f64).clamp(0.0, 1.0))
    }

    fn record(&mut self, reward: f64) {
        self.pulls += 1;
        self.reward_sum += reward;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// Index `sup{mu : d(mean, mu) <= log(t / N^alpha) / N}`.
    KlUcb {
        alpha: f64,
    },
    Ucb1,
    /// Beta(1 + S, 1 + N - S) posterior sampling.
    Thompson,
    Imed,
}

impl PolicyKind {
    pub fn kl_ucb(alpha: f64) -> Result<Self, PolicyError> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(PolicyError::InvalidAlpha(alpha));
        }
        Ok(PolicyKind::KlUcb { alpha })
    }

    /// Name used in configuration documents.
    pub fn config_name(&self) -> &'static str {
        match self {
            PolicyKind::KlUcb { .. } => "kl_ucb_alpha",
            PolicyKind::Ucb1 => "ucb1",
            PolicyKind::Thompson => "thompson_bernoulli",
            PolicyKind::Imed => "imed",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            PolicyKind::KlUcb { alpha } => Some(*alpha),
            _ => None,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::KlUcb { alpha } => write!(f, "kl_ucb(alpha={alpha})"),
            other => f.write_str(other.config_name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub label: String,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, label: impl Into<String>) -> Self {
        PolicySpec {
            kind,
            label: label.into(),
        }
    }

    /// KL-UCB(alpha) with its default label.
    pub fn kl_ucb(alpha: f64) -> Result<Self, PolicyError> {
        let kind = PolicyKind::kl_ucb(alpha)?;
        Ok(PolicySpec::new(kind, kind.to_string()))
    }
}

/// Runtime state of one policy in one run.
#[derive(Debug, Clone)]
pub struct PolicyState {
    spec: PolicySpec,
    arms: Vec<ArmState>,
    round: u64,
    rng: Option<ChaCha8Rng>,
}

// Separates the Thompson sampling stream from the reward streams.
const POLICY_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

impl PolicyState {
    /// Fresh state at round 1. Thompson sampling draws from a private stream
    /// derived from `seed`; the other policies ignore it.
    pub fn new(spec: PolicySpec, num_arms: usize, seed: SeedSpec) -> Result<Self, PolicyError> {
        if num_arms == 0 {
            return Err(PolicyError::NoArms);
        }
        if let PolicyKind::KlUcb { alpha } = spec.kind {
            PolicyKind::kl_ucb(alpha)?;
        }
        let rng = matches!(spec.kind, PolicyKind::Thompson).then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.master_seed ^ POLICY_STREAM_SALT);
            rng.set_stream(seed.run_index);
            rng
        });
        Ok(PolicyState {
            spec,
            arms: vec![ArmState::default(); num_arms],
            round: 1,
            rng,
        })
    }

    /// State with preset statistics, as if `sum(pulls)` rounds had been played.
    pub fn from_arms(
        spec: PolicySpec,
        arms: Vec<ArmState>,
        seed: SeedSpec,
    ) -> Result<Self, PolicyError> {
        let mut state = PolicyState::new(spec, arms.len(), seed)?;
        state.round = 1 + arms.iter().map(|a| a.pulls).sum::<u64>();
        state.arms = arms;
        Ok(state)
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn arms(&self) -> &[ArmState] {
        &self.arms
    }

    /// Round about to be played (1-based).
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    /// Arm to pull at the current round.
    pub fn select_arm(&mut self) -> usize {
        let k = self.arms.len() as u64;
        if self.round <= k {
            return (self.round - 1) as usize;
        }
        if let Some(unpulled) = self.arms.iter().position(|a| a.pulls == 0) {
            // Only reachable through `from_arms` with an unpulled arm.
            return unpulled;
        }
        match self.spec.kind {
            PolicyKind::KlUcb { alpha } => {
                let t = self.round;
                argmax(self.arms.iter().map(|a| score_unchecked(a, t, alpha)))
            }
            _ => self.baseline_index(),
        }
    }

    /// Arm chosen by a baseline rule, assuming every arm has been pulled.
    pub fn baseline_index(&mut self) -> usize {
        let t = self.round as f64;
        match self.spec.kind {
            PolicyKind::Ucb1 => argmax(self.arms.iter().map(|a| {
                let n = a.pulls as f64;
                mean_unchecked(a) + (2.0 * t.ln() / n).sqrt()
            })),
            PolicyKind::Imed => {
                let best = self.arms.iter().map(mean_unchecked).fold(0.0, f64::max);
                argmin(self.arms.iter().map(|a| {
                    let n = a.pulls as f64;
                    n * kl_raw(mean_unchecked(a), best) + n.ln()
                }))
            }
            PolicyKind::Thompson => {
                let rng = self
                    .rng
                    .as_mut()
                    .expect("thompson state always carries a stream");
                let samples: Vec<f64> = self
                    .arms
                    .iter()
                    .map(|a| {
                        let s = a.reward_sum;
                        let f = a.pulls as f64 - s;
                        Beta::new(1.0 + s, 1.0 + f.max(0.0))
                            .expect("posterior parameters are at least 1")
                            .sample(rng)
                    })
                    .collect();
                argmax(samples.into_iter())
            }
            PolicyKind::KlUcb { alpha } => {
                let t = self.round;
                argmax(self.arms.iter().map(|a| score_unchecked(a, t, alpha)))
            }
        }
    }

    /// Records `reward` for `arm` and advances to the next round.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<(), PolicyError> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(PolicyError::RewardOutOfRange(reward));
        }
        let arms = self.arms.len();
        let state = self
            .arms
            .get_mut(arm)
            .ok_or(PolicyError::ArmOutOfRange { arm, arms })?;
        state.record(reward);
        self.round += 1;
        Ok(())
    }
}

/// KL-UCB(alpha) index of one arm at round `t`.
///
/// The budget `(log t - alpha log N) / N` is clamped at zero, which can only
/// bite when `alpha > 1`; the score then falls back to the empirical mean.
pub fn ucb_score(state: &ArmState, t: u64, alpha: f64) -> Result<f64, PolicyError> {
    if state.pulls == 0 {
        return Err(PolicyError::NeverPulled);
    }
    if t == 0 {
        return Err(PolicyError::InvalidRound);
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(PolicyError::InvalidAlpha(alpha));
    }
    Ok(score_unchecked(state, t, alpha))
}

#[inline]
fn score_unchecked(state: &ArmState, t: u64, alpha: f64) -> f64 {
    let n = state.pulls as f64;
    let budget = ((t as f64).ln() - alpha * n.ln()) / n;
    invert_raw(mean_unchecked(state), budget.max(0.0))
}

#[inline]
fn mean_unchecked(state: &ArmState) -> f64 {
    (state.reward_sum / state.pulls as f64).clamp(0.0, 1.0)
}

/// Index of the first maximum.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Index of the first minimum.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const SEED: SeedSpec = SeedSpec {
        master_seed: 11,
        run_index: 0,
    };

    fn arm(mean: f64, pulls: u64) -> ArmState {
        ArmState::new(pulls, mean * pulls as f64)
    }

    fn state(kind: PolicyKind, arms: Vec<ArmState>) -> PolicyState {
        PolicyState::from_arms(PolicySpec::new(kind, "test"), arms, SEED).unwrap()
    }

    #[test]
    fn score_examples() {
        // Frozen from a 50-digit bisection oracle.
        let plus = ucb_score(&arm(0.4, 10), 100, 1.0).unwrap();
        assert_abs_diff_eq!(plus, 0.725_028_350_740_854_2, epsilon = 1e-12);
        assert_eq!(ucb_score(&arm(0.4, 10), 10, 1.0).unwrap(), 0.4);
        let classic = ucb_score(&arm(0.4, 10), 100, 0.0).unwrap();
        assert_abs_diff_eq!(classic, 0.828_622_670_767_769_2, epsilon = 1e-12);
        assert!(classic > plus);
    }

    #[test]
    fn score_rejects_unpulled_arm() {
        assert!(ucb_score(&ArmState::default(), 5, 1.0).is_err());
        assert!(ucb_score(&arm(0.5, 2), 0, 1.0).is_err());
        assert!(ucb_score(&arm(0.5, 2), 5, -1.0).is_err());
    }

    #[test]
    fn negative_budget_clamps_to_mean() {
        // alpha = 2, N = 10, t = 50: log(50 / 100) < 0.
        assert_eq!(ucb_score(&arm(0.3, 10), 50, 2.0).unwrap(), 0.3);
    }

    #[test]
    fn initialization_round_robin() {
        let mut s = PolicyState::new(PolicySpec::kl_ucb(1.0).unwrap(), 3, SEED).unwrap();
        assert_eq!(s.select_arm(), 0);
        s.update(0, 1.0).unwrap();
        assert_eq!(s.round(), 2);
        assert_eq!(s.select_arm(), 1);
        s.update(1, 0.0).unwrap();
        assert_eq!(s.select_arm(), 2);
    }

    #[test]
    fn ties_go_to_smallest_index() {
        let mut s = state(
            PolicyKind::KlUcb { alpha: 1.0 },
            vec![arm(0.5, 5), arm(0.5, 5)],
        );
        assert_eq!(s.round(), 11);
        assert_eq!(s.select_arm(), 0);
        let mut u = state(PolicyKind::Ucb1, vec![arm(0.5, 5), arm(0.5, 5)]);
        assert_eq!(u.select_arm(), 0);
    }

    #[test]
    fn under_sampled_arm_wins() {
        // Oracle scores: 0.874979... for arm 0 and 0.973111... for arm 1.
        let arms = vec![arm(0.8, 9), arm(0.2, 1)];
        assert_abs_diff_eq!(
            ucb_score(&arms[0], 11, 1.0).unwrap(),
            0.874_979_207_156_654_1,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ucb_score(&arms[1], 11, 1.0).unwrap(),
            0.973_111_537_229_21,
            epsilon = 1e-12
        );
        let mut s = state(PolicyKind::KlUcb { alpha: 1.0 }, arms);
        assert_eq!(s.select_arm(), 1);
    }

    #[test]
    fn update_arithmetic() {
        let mut s = state(
            PolicyKind::Ucb1,
            vec![ArmState::new(3, 1.5), ArmState::new(1, 0.0)],
        );
        s.update(0, 1.0).unwrap();
        assert_eq!(s.arms()[0], ArmState::new(4, 2.5));
        assert_eq!(s.arms()[0].mean(), Some(0.625));
        assert_eq!(s.arms()[1], ArmState::new(1, 0.0));
        assert_eq!(s.round(), 6);

        let mut fresh = PolicyState::new(PolicySpec::new(PolicyKind::Imed, "i"), 2, SEED).unwrap();
        fresh.update(0, 0.0).unwrap();
        assert_eq!(fresh.arms()[0].mean(), Some(0.0));
        assert_eq!(fresh.arms()[1].mean(), None);
    }

    #[test]
    fn update_rejects_bad_input() {
        let mut s = PolicyState::new(PolicySpec::new(PolicyKind::Ucb1, "u"), 2, SEED).unwrap();
        assert_eq!(s.update(0, 1.5), Err(PolicyError::RewardOutOfRange(1.5)));
        assert!(s.update(0, f64::NAN).is_err());
        assert_eq!(
            s.update(2, 0.5),
            Err(PolicyError::ArmOutOfRange { arm: 2, arms: 2 })
        );
        assert_eq!(s.round(), 1);
    }

    #[test]
    fn invalid_alpha_rejected() {
        assert!(PolicySpec::kl_ucb(-0.5).is_err());
        let spec = PolicySpec::new(PolicyKind::KlUcb { alpha: f64::NAN }, "bad");
        assert!(PolicyState::new(spec, 2, SEED).is_err());
    }

    #[test]
    fn imed_prefers_least_pulled_leader() {
        // Both leaders have d = 0, so the index is log N; arm 2 has fewer pulls.
        let mut s = state(
            PolicyKind::Imed,
            vec![arm(0.7, 20), arm(0.3, 40), arm(0.7, 10)],
        );
        assert_eq!(s.select_arm(), 2);
    }

    #[test]
    fn imed_index_values() {
        let arms = vec![arm(0.6, 30), arm(0.5, 4)];
        // Index of arm 1: 4 d(0.5, 0.6) + log 4 = 1.4935...; arm 0: log 30 = 3.4012.
        let idx1 = 4.0 * kl_raw(0.5, 0.6) + 4f64.ln();
        assert!(idx1 < 30f64.ln());
        let mut s = state(PolicyKind::Imed, arms);
        assert_eq!(s.select_arm(), 1);
    }

    #[test]
    fn ucb1_index() {
        // arm0: 0.9 + sqrt(2 log 41 / 40) = 1.2047; arm1: 0.1 + sqrt(2 log 41) = 2.8253.
        let mut s = state(PolicyKind::Ucb1, vec![arm(0.9, 39), arm(0.1, 1)]);
        assert_eq!(s.select_arm(), 1);
        let mut s = state(PolicyKind::Ucb1, vec![arm(0.9, 20), arm(0.1, 20)]);
        assert_eq!(s.select_arm(), 0);
    }

    #[test]
    fn thompson_concentrated_posteriors() {
        // Beta(1000, 1) against Beta(1, 1000).
        let arms = vec![ArmState::new(999, 999.0), ArmState::new(999, 0.0)];
        let mut s = state(PolicyKind::Thompson, arms);
        let trials = 10_000;
        let hits = (0..trials).filter(|_| s.baseline_index() == 0).count();
        assert!(hits as f64 / trials as f64 > 0.999);
    }

    #[test]
    fn thompson_is_reproducible() {
        let arms = vec![arm(0.5, 4), arm(0.5, 4), arm(0.25, 4)];
        let picks = |seed| {
            let spec = PolicySpec::new(PolicyKind::Thompson, "ts");
            let mut s = PolicyState::from_arms(spec, arms.clone(), seed).unwrap();
            (0..200).map(|_| s.baseline_index()).collect::<Vec<_>>()
        };
        assert_eq!(picks(SEED), picks(SEED));
        assert_ne!(picks(SEED), picks(SeedSpec::new(11, 1)));
    }

    fn arb_arm() -> impl Strategy<Value = ArmState> {
        (1u64..500, 0.0f64..=1.0).prop_map(|(n, m)| ArmState::new(n, (m * n as f64).round()))
    }

    proptest! {
        #[test]
        fn classic_score_uses_log_t_budget(a in arb_arm(), extra in 0u64..10_000) {
            let t = a.pulls + 1 + extra;
            let budget = (t as f64).ln() / a.pulls as f64;
            let expected = invert_raw(mean_unchecked(&a), budget);
            prop_assert_eq!(ucb_score(&a, t, 0.0).unwrap(), expected);
        }

        #[test]
        fn score_is_optimistic(a in arb_arm(), t in 2u64..100_000, alpha in 0.0f64..3.0) {
            let mean = a.mean().unwrap();
            let s = ucb_score(&a, t, alpha).unwrap();
            prop_assert!(s >= mean);
            let budget = ((t as f64).ln() - alpha * (a.pulls as f64).ln()) / a.pulls as f64;
            if budget > 1e-12 && mean < 1.0 {
                prop_assert!(s > mean);
            }
        }

        #[test]
        fn score_nondecreasing_in_t(a in arb_arm(), t in 1u64..100_000, dt in 1u64..1000, alpha in 0.0f64..3.0) {
            prop_assert!(ucb_score(&a, t, alpha).unwrap() <= ucb_score(&a, t + dt, alpha).unwrap());
        }

        #[test]
        fn selection_commutes_with_permutation(
            arms in proptest::collection::vec(arb_arm(), 2..6),
            shift in 0usize..6,
            alpha in 0.0f64..2.0,
        ) {
            let k = arms.len();
            let spec = PolicyKind::KlUcb { alpha };
            let mut base = state(spec, arms.clone());
            let chosen = base.select_arm();
            let scores: Vec<f64> = arms.iter().map(|a| score_unchecked(a, base.round(), alpha)).collect();
            // Only meaningful without ties at the top.
            let top = scores[chosen];
            prop_assume!(scores.iter().filter(|&&s| s == top).count() == 1);
            let rotated: Vec<ArmState> = (0..k).map(|i| arms[(i + shift) % k]).collect();
            let mut perm = state(spec, rotated);
            let picked = perm.select_arm();
            prop_assert_eq!((picked + shift) % k, chosen);
        }
    }
}
