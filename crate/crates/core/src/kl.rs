//! Bernoulli KL divergence, its upper-confidence inversion, the KL gap
//! lower bound and the principal branch of the Lambert W function.
//!
//! All logarithms are natural; divergences are in nats.

use std::f64::consts::E;
use std::fmt;

use thiserror::Error;

/// Errors raised by the numerical kernels in this module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KlError {
    #[error("probability must lie in [0, 1], got {0}")]
    NotAProbability(f64),
    #[error("confidence budget must be a non-negative number, got {0}")]
    InvalidBudget(f64),
    #[error("gap bound requires x <= mu <= mu' < 1, got x={x}, mu={mu}, mu'={mu_prime}")]
    GapOrdering { x: f64, mu: f64, mu_prime: f64 },
    #[error("Lambert W0 is only defined for x >= -1/e, got {0}")]
    LambertDomain(f64),
}

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub const ZERO: Probability = Probability(0.0);
    pub const ONE: Probability = Probability(1.0);

    pub fn new(value: f64) -> Result<Self, KlError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(KlError::NotAProbability(value))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// Reflection `1 - p`.
    #[inline]
    pub fn complement(self) -> Probability {
        Probability(1.0 - self.0)
    }
}

impl TryFrom<f64> for Probability {
    type Error = KlError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A Bernoulli KL divergence in nats.
///
/// `d(x, y)` is infinite exactly when `y = 0 < x` or `x < 1 = y`; that case
/// is stored as `f64::INFINITY` and detected with [`Divergence::is_finite`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Divergence(f64);

impl Divergence {
    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `d(x, y) = x log(x/y) + (1-x) log((1-x)/(1-y))` with `0 log 0 = 0`.
pub fn bernoulli_kl(x: Probability, y: Probability) -> Divergence {
    Divergence(kl_raw(x.0, y.0))
}

/// Unchecked kernel behind [`bernoulli_kl`]; arguments must lie in `[0, 1]`.
#[inline]
pub(crate) fn kl_raw(x: f64, y: f64) -> f64 {
    let head = if x == 0.0 {
        0.0
    } else if y == 0.0 {
        return f64::INFINITY;
    } else {
        x * (x / y).ln()
    };
    let tail = if x == 1.0 {
        0.0
    } else if y == 1.0 {
        return f64::INFINITY;
    } else {
        (1.0 - x) * ((1.0 - x) / (1.0 - y)).ln()
    };
    // Cancellation can leave a tiny negative residue when x is close to y.
    (head + tail).max(0.0)
}

const INVERT_MAX_ITERS: usize = 100;

/// Largest `mu` in `[0, 1]` with `d(mu_hat, mu) <= budget`.
///
/// `d(mu_hat, .)` is convex and increasing on `[mu_hat, 1]`, so Newton steps
/// taken from the upper end of a bracket stay above the root and converge
/// monotonically. A bisection step is used whenever Newton cannot run (the
/// upper end sits at 1) or would leave the bracket. Never more than 100
/// iterations; the result matches the root to a few ulps.
pub fn kl_ucb_invert(mu_hat: Probability, budget: f64) -> Result<Probability, KlError> {
    if budget.is_nan() || budget < 0.0 {
        return Err(KlError::InvalidBudget(budget));
    }
    Ok(Probability(invert_raw(mu_hat.0, budget)))
}

#[inline]
pub(crate) fn invert_raw(mu_hat: f64, budget: f64) -> f64 {
    if budget == 0.0 {
        return mu_hat;
    }
    if mu_hat == 1.0 || budget == f64::INFINITY {
        return 1.0;
    }
    if mu_hat == 0.0 {
        // d(0, mu) = -log(1 - mu)
        return -(-budget).exp_m1();
    }

    // Pinsker: d(p, q) > 2 (q - p)^2, so the root lies below p + sqrt(b / 2).
    let mut lo = mu_hat;
    let mut hi = (mu_hat + (budget / 2.0).sqrt()).min(1.0);
    if hi < 1.0 && kl_raw(mu_hat, hi) <= budget {
        // Only reachable through rounding in the Pinsker bracket.
        lo = hi;
        hi = 1.0;
    }
    for _ in 0..INVERT_MAX_ITERS {
        if hi < 1.0 {
            let excess = kl_raw(mu_hat, hi) - budget;
            if excess <= 0.0 {
                return hi;
            }
            let slope = (hi - mu_hat) / (hi * (1.0 - hi));
            let next = hi - excess / slope;
            if next > lo && next < hi {
                if hi - next <= 4.0 * f64::EPSILON * hi {
                    return next;
                }
                hi = next;
                continue;
            }
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if kl_raw(mu_hat, mid) > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Right-hand side of `d(x, mu') - d(x, mu) >= (mu' - mu)^2 / (2 mu' (1 - mu))`,
/// valid for `x <= mu <= mu' < 1`.
///
/// The numerator is `(mu' - mu)^2`. With `(x - mu)^2` the inequality fails,
/// e.g. at `x = 0, mu = mu' = 0.5` where the left side is 0.
pub fn kl_gap_lower_bound(
    x: Probability,
    mu: Probability,
    mu_prime: Probability,
) -> Result<f64, KlError> {
    let (x, mu, mu_prime) = (x.0, mu.0, mu_prime.0);
    if !(x <= mu && mu <= mu_prime && mu_prime < 1.0) {
        return Err(KlError::GapOrdering { x, mu, mu_prime });
    }
    if mu == mu_prime {
        return Ok(0.0);
    }
    // mu' > mu >= 0 and mu < 1, so the denominator is positive.
    Ok((mu_prime - mu).powi(2) / (2.0 * mu_prime * (1.0 - mu)))
}

const LAMBERT_MAX_ITERS: usize = 64;

/// Principal branch `W0(x)`: the solution `z >= -1` of `z e^z = x`.
pub fn lambert_w0(x: f64) -> Result<f64, KlError> {
    let branch_point = -1.0 / E;
    if x.is_nan() || x < branch_point {
        return Err(KlError::LambertDomain(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == branch_point {
        return Ok(-1.0);
    }
    if x == E {
        return Ok(1.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }

    let mut z = if x > E {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    } else if x < -0.25 {
        // Branch-point series in p = sqrt(2 (e x + 1)).
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x.abs() <= 0.25 {
        x * (1.0 - x)
    } else {
        x.ln_1p()
    };

    for _ in 0..LAMBERT_MAX_ITERS {
        let ez = z.exp();
        let f = z * ez - x;
        let wp1 = z + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ez * wp1 - (z + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        let next = (z - step).max(-1.0);
        let done = (next - z).abs() <= 4.0 * f64::EPSILON * (1.0 + next.abs());
        z = next;
        if done {
            break;
        }
    }
    Ok(z)
}

/// `W0(e^u)` evaluated without forming `e^u`, so `u` may be far beyond the
/// range of `f64::exp`.
///
/// Solves `z + log z = u` by Halley iteration from `u - log u`.
pub fn lambert_w0_exp(u: f64) -> Result<f64, KlError> {
    if u.is_nan() {
        return Err(KlError::LambertDomain(u));
    }
    if u < 500.0 {
        return lambert_w0(u.exp());
    }
    let mut z = u - u.ln();
    for _ in 0..LAMBERT_MAX_ITERS {
        let f = z + z.ln() - u;
        let f1 = 1.0 + 1.0 / z;
        let f2 = -1.0 / (z * z);
        let step = 2.0 * f * f1 / (2.0 * f1 * f1 - f * f2);
        let next = z - step;
        let done = (next - z).abs() <= 4.0 * f64::EPSILON * next.abs();
        z = next;
        if done {
            break;
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    #[test]
    fn probability_rejects_out_of_range() {
        assert!(Probability::new(-0.1).is_err());
        assert!(Probability::new(1.0 + 1e-12).is_err());
        assert!(Probability::new(f64::NAN).is_err());
        assert_eq!(Probability::new(0.25).unwrap().complement().get(), 0.75);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(bernoulli_kl(p(0.5), p(0.5)).value(), 0.0);
        assert_abs_diff_eq!(
            bernoulli_kl(p(0.0), p(0.5)).value(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        // 50-digit oracle: 0.143841036225890463719...
        assert_abs_diff_eq!(
            bernoulli_kl(p(0.5), p(0.25)).value(),
            0.143_841_036_225_890_46,
            epsilon = 1e-14
        );
    }

    #[test]
    fn kl_infinite_cases() {
        assert!(!bernoulli_kl(p(0.3), p(0.0)).is_finite());
        assert!(!bernoulli_kl(p(0.3), p(1.0)).is_finite());
        assert!(!bernoulli_kl(p(0.0), p(1.0)).is_finite());
        assert!(!bernoulli_kl(p(1.0), p(0.0)).is_finite());
        assert_eq!(bernoulli_kl(p(0.0), p(0.0)).value(), 0.0);
        assert_eq!(bernoulli_kl(p(1.0), p(1.0)).value(), 0.0);
        assert!(bernoulli_kl(p(1.0), p(0.5)).is_finite());
    }

    #[test]
    fn kl_monotone_on_grid() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        for &x in &grid {
            let mut prev = 0.0;
            for &y in grid.iter().filter(|&&y| y > x) {
                let d = kl_raw(x, y);
                assert!(d > prev, "d({x},{y}) = {d} not above {prev}");
                prev = d;
            }
            let mut prev = 0.0;
            for &y in grid.iter().rev().filter(|&&y| y < x) {
                let d = kl_raw(x, y);
                assert!(d > prev, "d({x},{y}) = {d} not above {prev}");
                prev = d;
            }
        }
    }

    #[test]
    fn invert_examples() {
        assert_eq!(kl_ucb_invert(p(0.7), 0.0).unwrap().get(), 0.7);
        assert_abs_diff_eq!(
            kl_ucb_invert(p(0.0), std::f64::consts::LN_2).unwrap().get(),
            0.5,
            epsilon = 1e-15
        );
        // 50-digit bisection oracle: 0.725028350740854...
        let budget = 10f64.ln() / 10.0;
        assert_abs_diff_eq!(
            kl_ucb_invert(p(0.4), budget).unwrap().get(),
            0.725_028_350_740_854_2,
            epsilon = 1e-12
        );
        assert_eq!(kl_ucb_invert(p(1.0), 3.0).unwrap().get(), 1.0);
    }

    #[test]
    fn invert_rejects_bad_budgets() {
        assert_eq!(
            kl_ucb_invert(p(0.5), -1e-3),
            Err(KlError::InvalidBudget(-1e-3))
        );
        assert!(kl_ucb_invert(p(0.5), f64::NAN).is_err());
        assert_eq!(kl_ucb_invert(p(0.5), f64::INFINITY).unwrap().get(), 1.0);
    }

    #[test]
    fn gap_bound_examples() {
        assert_eq!(kl_gap_lower_bound(p(0.3), p(0.5), p(0.5)).unwrap(), 0.0);
        assert_abs_diff_eq!(
            kl_gap_lower_bound(p(0.3), p(0.3), p(0.5)).unwrap(),
            0.04 / 0.7,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            kl_gap_lower_bound(p(0.2), p(0.4), p(0.6)).unwrap(),
            0.04 / 0.72,
            epsilon = 1e-15
        );
        let rhs = kl_gap_lower_bound(p(0.1), p(0.5), p(0.9)).unwrap();
        assert_abs_diff_eq!(rhs, 0.16 / 0.9, epsilon = 1e-15);
        assert!(kl_raw(0.1, 0.9) - kl_raw(0.1, 0.5) > rhs);
    }

    #[test]
    fn gap_bound_with_x_numerator_is_false() {
        // (x - mu)^2 in place of (mu' - mu)^2 overshoots the true difference.
        let (x, mu, mu_prime) = (0.0, 0.5, 0.5);
        let lhs = kl_raw(x, mu_prime) - kl_raw(x, mu);
        assert_eq!(lhs, 0.0);
        assert!((x - mu) * (x - mu) / (2.0 * mu_prime * (1.0 - mu)) > lhs);
    }

    #[test]
    fn gap_bound_rejects_bad_ordering() {
        assert!(kl_gap_lower_bound(p(0.5), p(0.4), p(0.6)).is_err());
        assert!(kl_gap_lower_bound(p(0.2), p(0.7), p(0.6)).is_err());
        assert!(kl_gap_lower_bound(p(0.2), p(0.4), p(1.0)).is_err());
    }

    #[test]
    fn lambert_examples() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(lambert_w0(E).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            lambert_w0(1.0).unwrap(),
            0.567_143_290_409_783_8,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            lambert_w0(100.0).unwrap(),
            3.385_630_140_290_05,
            epsilon = 1e-13
        );
        assert_eq!(lambert_w0(-1.0 / E).unwrap(), -1.0);
        assert!(lambert_w0(-0.5).is_err());
    }

    #[test]
    fn lambert_near_branch_point() {
        for x in [-0.3678, -0.36, -0.3, -0.2, -0.05, 0.3, 1.5, 2.7] {
            let z = lambert_w0(x).unwrap();
            assert!(z >= -1.0);
            assert!((z * z.exp() - x).abs() <= 1e-12, "x={x} z={z}");
        }
    }

    #[test]
    fn lambert_exp_matches_direct() {
        for u in [-3.0, 0.0, 1.0, 10.0, 100.0, 499.0] {
            let direct = lambert_w0(f64::exp(u)).unwrap();
            let via_log = lambert_w0_exp(u).unwrap();
            assert_abs_diff_eq!(direct, via_log, epsilon = 1e-12 * direct.abs().max(1.0));
        }
        // z + log z = u far outside exp's range.
        for u in [800.0, 1e4, 1e8] {
            let z = lambert_w0_exp(u).unwrap();
            assert!(((z + z.ln() - u) / u).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn gap_bound_holds(a in 0.0f64..=0.999, b in 0.0f64..=0.999, c in 0.0f64..=0.999) {
            let mut v = [a, b, c];
            v.sort_by(f64::total_cmp);
            let [x, mu, mu_prime] = v;
            let rhs = kl_gap_lower_bound(p(x), p(mu), p(mu_prime)).unwrap();
            prop_assert!(kl_raw(x, mu_prime) - kl_raw(x, mu) >= rhs - 1e-12);
        }

        #[test]
        fn kl_reflection(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let a = kl_raw(x, y);
            let b = kl_raw(1.0 - x, 1.0 - y);
            if a.is_finite() {
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
            } else {
                prop_assert!(b.is_infinite());
            }
        }

        #[test]
        fn invert_is_monotone_in_budget(m in 0.0f64..1.0, b1 in 0.0f64..3.0, b2 in 0.0f64..3.0) {
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            let a = kl_ucb_invert(p(m), lo).unwrap().get();
            let b = kl_ucb_invert(p(m), hi).unwrap().get();
            prop_assert!(a <= b);
            prop_assert!(a >= m);
        }
    }
}
