//! Regret bound calculators.
//!
//! * the asymptotic lower-bound constant `sum_{i != i*} (mu* - mu_i) / d(mu_i, mu*)`;
//! * the finite-time KL-UCB(alpha) bound
//!   `sum_i (mu* - mu_i) (n_i + 1/(2 eps^2)) + e Gamma(alpha + 2) (1 + d1) (1/eps')^(alpha + 2)`
//!   with `eps' = eps^2 / (2 mu* (1 - mu* + eps))` and `d1 = log 1/(1 - mu*)`;
//! * the exploration count `n_i = sup{x >= 0 : x^alpha e^(x d) <= T}`, with
//!   `d = d(mu_i + eps, mu* - eps)`, by root finding, through Lambert W and
//!   by its two-term expansion.

use std::f64::consts::E;
use std::fmt;

use thiserror::Error;

use crate::env::BanditInstance;
use crate::kl::{kl_raw, lambert_w0, lambert_w0_exp, KlError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("the bound requires mu* < 1, got mu* = {0}")]
    BestMeanIsOne(f64),
    #[error("epsilon {epsilon} outside the admissible window (0, {upper})")]
    EpsilonOutOfWindow { epsilon: f64, upper: f64 },
    #[error("every arm is optimal; there is no gap to bound")]
    NoSuboptimalArm,
    #[error("alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("the Lambert form needs alpha > 0")]
    LambertNeedsPositiveAlpha,
    #[error("divergence must be finite and positive, got {0}")]
    InvalidDivergence(f64),
    #[error("horizon must be at least {min}, got {horizon}")]
    HorizonTooSmall { horizon: f64, min: f64 },
    #[error(transparent)]
    Kl(#[from] KlError),
}

/// Lower-bound constant together with a degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticSlope {
    pub value: f64,
    /// Set when `mu* = 1` and some arm is strictly worse; those arms have
    /// `d(mu_i, 1) = inf` and contribute 0.
    pub degenerate: bool,
}

/// `sum_{i != i*} (mu* - mu_i) / d(mu_i, mu*)`; zero-gap arms contribute 0.
pub fn asymptotic_slope(instance: &BanditInstance) -> AsymptoticSlope {
    let best = instance.best_mean();
    let mut value = 0.0;
    let mut degenerate = false;
    for &m in instance.means() {
        let gap = best - m;
        if gap <= 0.0 {
            continue;
        }
        let d = kl_raw(m, best);
        if d.is_finite() {
            value += gap / d;
        } else {
            degenerate = true;
        }
    }
    AsymptoticSlope { value, degenerate }
}

fn check_alpha(alpha: f64) -> Result<(), BoundError> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(BoundError::InvalidAlpha(alpha))
    }
}

fn check_divergence(d: f64) -> Result<(), BoundError> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(BoundError::InvalidDivergence(d))
    }
}

fn check_horizon(horizon: f64, min: f64) -> Result<(), BoundError> {
    if horizon >= min {
        Ok(())
    } else {
        Err(BoundError::HorizonTooSmall { horizon, min })
    }
}

/// `d(mu_i + eps, mu* - eps)` after checking `0 < eps < (mu* - mu_i) / 2`.
pub fn shifted_divergence(mu_i: f64, mu_star: f64, epsilon: f64) -> Result<f64, BoundError> {
    let upper = (mu_star - mu_i) / 2.0;
    if !(epsilon > 0.0 && epsilon < upper) {
        return Err(BoundError::EpsilonOutOfWindow { epsilon, upper });
    }
    Ok(kl_raw(mu_i + epsilon, mu_star - epsilon))
}

/// `n_i` for one arm, by root finding.
pub fn n_i_sup(
    mu_i: f64,
    mu_star: f64,
    epsilon: f64,
    alpha: f64,
    horizon: f64,
) -> Result<f64, BoundError> {
    let d = shifted_divergence(mu_i, mu_star, epsilon)?;
    exploration_count(d, alpha, horizon)
}

/// `sup{x >= 0 : x^alpha e^(x d) <= T}`.
///
/// Closed form `log T / d` at `alpha = 0`; otherwise bisection on
/// `alpha log x + x d - log T`, which is strictly increasing in `x`.
pub fn exploration_count(d: f64, alpha: f64, horizon: f64) -> Result<f64, BoundError> {
    check_divergence(d)?;
    check_alpha(alpha)?;
    check_horizon(horizon, 1.0)?;
    let log_t = horizon.ln();
    if alpha == 0.0 {
        return Ok(log_t / d);
    }
    let g = |x: f64| alpha * x.ln() + x * d - log_t;
    let mut lo = 0.0_f64;
    // g(max(1, log T / d)) >= 0 in both cases.
    let mut hi = (log_t / d).max(1.0);
    if g(hi) <= 0.0 {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

/// `n_i` for one arm through the Lambert W closed form.
pub fn n_i_lambert(
    mu_i: f64,
    mu_star: f64,
    epsilon: f64,
    alpha: f64,
    horizon: f64,
) -> Result<f64, BoundError> {
    let d = shifted_divergence(mu_i, mu_star, epsilon)?;
    exploration_count_lambert(d, alpha, horizon)
}

/// `(alpha / d) W0(T^(1/alpha) d / alpha)`, with the argument carried in the
/// log domain so that huge `T^(1/alpha)` does not overflow.
pub fn exploration_count_lambert(d: f64, alpha: f64, horizon: f64) -> Result<f64, BoundError> {
    check_divergence(d)?;
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Err(BoundError::LambertNeedsPositiveAlpha);
    }
    check_horizon(horizon, 1.0)?;
    let log_arg = horizon.ln() / alpha + (d / alpha).ln();
    let w = if log_arg < 500.0 {
        lambert_w0(log_arg.exp())?
    } else {
        lambert_w0_exp(log_arg)?
    };
    Ok(alpha / d * w)
}

/// Two-term approximation `(log T - alpha log log T) / d`.
pub fn n_i_expansion(d: f64, alpha: f64, horizon: f64) -> Result<f64, BoundError> {
    check_divergence(d)?;
    check_alpha(alpha)?;
    check_horizon(horizon, 3.0)?;
    let log_t = horizon.ln();
    if alpha == 0.0 {
        return Ok(log_t / d);
    }
    Ok((log_t - alpha * log_t.ln()) / d)
}

/// `Gamma(x)` for `x > 0`; exact factorials at integer arguments.
pub fn gamma(x: f64) -> f64 {
    if x.fract() == 0.0 && (1.0..=171.0).contains(&x) {
        return (1..x as u64).fold(1.0, |acc, k| acc * k as f64);
    }
    statrs::function::gamma::gamma(x)
}

/// Finite-time bound for one instance, alpha, epsilon and horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub means: Vec<f64>,
    pub gaps: Vec<f64>,
    pub epsilon: f64,
    /// Whether `epsilon` was the default quarter of the smallest gap.
    pub epsilon_defaulted: bool,
    pub alpha: f64,
    pub horizon: f64,
    /// `n_i` per arm; `None` for arms with zero gap.
    pub n_i: Vec<Option<f64>>,
    pub epsilon_prime: f64,
    pub d1: f64,
    pub term_a: f64,
    pub term_b: f64,
    pub total: f64,
    pub asymptotic_slope: f64,
}

/// `epsilon` used when none is supplied: a quarter of `mu* - max_{i != i*} mu_i`.
pub fn default_epsilon(instance: &BanditInstance) -> Result<f64, BoundError> {
    let runner_up = instance
        .runner_up_mean()
        .ok_or(BoundError::NoSuboptimalArm)?;
    Ok((instance.best_mean() - runner_up) / 4.0)
}

/// Evaluates the finite-time regret bound of KL-UCB(alpha).
///
/// Arms tied with the best arm are left out of both the sum and the epsilon
/// window. Overflow in the second term is reported as `+inf`.
pub fn theorem1_bound(
    instance: &BanditInstance,
    epsilon: Option<f64>,
    alpha: f64,
    horizon: f64,
) -> Result<BoundReport, BoundError> {
    check_alpha(alpha)?;
    check_horizon(horizon, 1.0)?;
    let mu_star = instance.best_mean();
    if mu_star >= 1.0 {
        return Err(BoundError::BestMeanIsOne(mu_star));
    }
    let runner_up = instance
        .runner_up_mean()
        .ok_or(BoundError::NoSuboptimalArm)?;
    let upper = (mu_star - runner_up) / 2.0;
    let (epsilon, epsilon_defaulted) = match epsilon {
        Some(e) => (e, false),
        None => (upper / 2.0, true),
    };
    if !(epsilon > 0.0 && epsilon < upper) {
        return Err(BoundError::EpsilonOutOfWindow { epsilon, upper });
    }

    let gaps = instance.gaps();
    let mut n_i = Vec::with_capacity(gaps.len());
    let mut term_a = 0.0;
    for (&m, &gap) in instance.means().iter().zip(&gaps) {
        if gap <= 0.0 {
            n_i.push(None);
            continue;
        }
        let n = n_i_sup(m, mu_star, epsilon, alpha, horizon)?;
        term_a += gap * (n + 1.0 / (2.0 * epsilon * epsilon));
        n_i.push(Some(n));
    }

    let epsilon_prime = epsilon * epsilon / (2.0 * mu_star * (1.0 - mu_star + epsilon));
    let d1 = -(-mu_star).ln_1p();
    let term_b = E * gamma(alpha + 2.0) * (1.0 + d1) * (1.0 / epsilon_prime).powf(alpha + 2.0);

    Ok(BoundReport {
        means: instance.means().to_vec(),
        gaps,
        epsilon,
        epsilon_defaulted,
        alpha,
        horizon,
        n_i,
        epsilon_prime,
        d1,
        term_a,
        term_b,
        total: term_a + term_b,
        asymptotic_slope: asymptotic_slope(instance).value,
    })
}

fn join(values: impl Iterator<Item = String>) -> String {
    values.collect::<Vec<_>>().join(", ")
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "means = [{}]",
            join(self.means.iter().map(f64::to_string))
        )?;
        writeln!(f, "gaps = [{}]", join(self.gaps.iter().map(f64::to_string)))?;
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(
            f,
            "epsilon = {}{}",
            self.epsilon,
            if self.epsilon_defaulted {
                " (default)"
            } else {
                ""
            }
        )?;
        writeln!(f, "horizon = {}", self.horizon)?;
        let n_i = self.n_i.iter().map(|n| match n {
            Some(v) => v.to_string(),
            None => "-".to_string(),
        });
        writeln!(f, "n_i = [{}]", join(n_i))?;
        writeln!(f, "epsilon_prime = {}", self.epsilon_prime)?;
        writeln!(f, "d1 = {}", self.d1)?;
        writeln!(f, "term_a = {}", self.term_a)?;
        writeln!(f, "term_b = {}", self.term_b)?;
        writeln!(f, "total = {}", self.total)?;
        write!(f, "asymptotic_slope = {}", self.asymptotic_slope)
    }
}
