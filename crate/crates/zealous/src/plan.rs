//! Parameter planning for the two-threshold sanitizer.
//!
//! The sanitizer is controlled by four numbers: the per-user
//! contribution bound `m`, the Laplace scale `λ`, the pre-noise
//! threshold `τ`, and the post-noise threshold `τ′`. This module maps
//! privacy targets to parameters and back:
//!
//! * probabilistic differential privacy: `λ = 2m/ε` and
//!   `τ′ − τ ≥ max(−λ·ln(2 − 2e^{-1/λ}), λ·ln(U·m/(2δτ)))`;
//! * indistinguishability: `λ = 2m/ε′`, `τ = 1`, and
//!   `τ′ ≥ m·(1 − ln(2δ′/m)/ε′)`;
//! * inverse direction: `ε = 2m/λ` with
//!   `δ = (U·m/(2τ))·e^{-(τ′-τ)/λ}` and `δ′ = (m/2)·e^{-(τ′-m)/λ}`.
//!
//! The stated indistinguishability threshold bound is about a factor
//! two looser than what the inverse formula for `δ′` implies; the
//! planner follows the threshold bound, the inverse follows the `δ′`
//! formula, and both are kept as-is on purpose. Computed `δ` and `δ′`
//! above 1 are clamped to 1 (`ZealousPlan::is_degenerate` flags this).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which relaxation of differential privacy a budget refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetFlavor {
    ProbabilisticDp,
    Indistinguishability,
}

/// An `(ε, δ)` target under one of the two flavors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
    pub flavor: BudgetFlavor,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64, flavor: BudgetFlavor) -> Result<Self, PlanError> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(PlanError::NonPositiveEpsilon(epsilon));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(PlanError::DeltaOutOfRange(delta));
        }
        Ok(PrivacyBudget { epsilon, delta, flavor })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("epsilon must be positive and finite, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("delta must lie strictly between 0 and 1, got {0}")]
    DeltaOutOfRange(f64),
    #[error("contribution bound m must be at least 1")]
    ZeroContribution,
    #[error("user count must be at least 1")]
    NoUsers,
    #[error("threshold tau must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("scale lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("thresholds degenerate: required gap tau'-tau = {0} is not positive")]
    DegenerateThresholds(f64),
    #[error("tau' ({tau_prime}) must exceed tau ({tau})")]
    ThresholdOrder { tau: f64, tau_prime: f64 },
}

/// A complete parameter tuple plus the guarantees it achieves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZealousPlan {
    pub m: u32,
    pub lambda: f64,
    pub tau: f64,
    pub tau_prime: f64,
    /// Number of users `U` of the log the plan is meant for.
    pub users: u64,
    /// Achieved probabilistic-differential-privacy pair.
    pub epsilon: f64,
    pub delta: f64,
    /// Achieved indistinguishability pair.
    pub epsilon_prime: f64,
    pub delta_prime: f64,
}

impl ZealousPlan {
    /// Assemble a plan from raw parameters, deriving both achieved
    /// guarantee pairs.
    pub fn from_raw(
        m: u32,
        lambda: f64,
        tau: f64,
        tau_prime: f64,
        users: u64,
    ) -> Result<Self, PlanError> {
        if m < 1 {
            return Err(PlanError::ZeroContribution);
        }
        if users < 1 {
            return Err(PlanError::NoUsers);
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(PlanError::NonPositiveLambda(lambda));
        }
        if !(tau > 0.0) {
            return Err(PlanError::NonPositiveTau(tau));
        }
        if tau_prime <= tau {
            return Err(PlanError::ThresholdOrder { tau, tau_prime });
        }
        let (epsilon, delta) = achieved_delta(lambda, tau, tau_prime, m, users);
        let (epsilon_prime, delta_prime) = achieved_delta_prime(lambda, tau_prime, m);
        Ok(ZealousPlan { m, lambda, tau, tau_prime, users, epsilon, delta, epsilon_prime, delta_prime })
    }

    /// True when a computed `δ` or `δ′` had to be clamped to 1.
    pub fn is_degenerate(&self) -> bool {
        self.delta >= 1.0 || self.delta_prime >= 1.0
    }
}

/// The threshold gap `τ′ − τ` required for `(ε, δ)`-probabilistic
/// differential privacy at scale `λ = 2m/ε`.
fn required_gap(lambda: f64, delta: f64, m: u32, users: u64, tau: f64) -> f64 {
    let branch_noise = -lambda * (2.0 - 2.0 * (-1.0 / lambda).exp()).ln();
    let branch_delta = lambda * (users as f64 * m as f64 / (2.0 * delta * tau)).ln();
    branch_noise.max(branch_delta)
}

/// `τ′` as a function of `τ` for fixed `(ε, δ, m, U)`. Exposed for
/// threshold sweeps.
pub fn tau_prime_for(
    epsilon: f64,
    delta: f64,
    m: u32,
    users: u64,
    tau: f64,
) -> Result<f64, PlanError> {
    let budget = PrivacyBudget::new(epsilon, delta, BudgetFlavor::ProbabilisticDp)?;
    if m < 1 {
        return Err(PlanError::ZeroContribution);
    }
    if users < 1 {
        return Err(PlanError::NoUsers);
    }
    if !(tau > 0.0) {
        return Err(PlanError::NonPositiveTau(tau));
    }
    let lambda = 2.0 * m as f64 / budget.epsilon;
    let gap = required_gap(lambda, budget.delta, m, users, tau);
    if !(gap > 0.0) {
        return Err(PlanError::DegenerateThresholds(gap));
    }
    Ok(tau + gap)
}

/// The `τ` that minimizes `τ′`: `⌈2m/ε⌉`.
pub fn optimal_tau(epsilon: f64, m: u32) -> f64 {
    (2.0 * m as f64 / epsilon).ceil()
}

/// Plan for `(ε, δ)`-probabilistic differential privacy. With `tau`
/// absent, `τ = ⌈2m/ε⌉` (the minimizer of `τ′`).
pub fn plan_probabilistic(
    epsilon: f64,
    delta: f64,
    m: u32,
    users: u64,
    tau: Option<f64>,
) -> Result<ZealousPlan, PlanError> {
    let tau = match tau {
        Some(t) => t,
        None => optimal_tau(epsilon, m),
    };
    let tau_prime = tau_prime_for(epsilon, delta, m, users, tau)?;
    let lambda = 2.0 * m as f64 / epsilon;
    ZealousPlan::from_raw(m, lambda, tau, tau_prime, users)
}

/// `τ′ = m·(1 − ln(2δ′/m)/ε′)`, the post-noise threshold required for
/// `(ε′, δ′)`-indistinguishability. At `δ′ = m/2` the log term
/// vanishes and `τ′ = m`.
pub fn indistinguishable_tau_prime(epsilon_prime: f64, delta_prime: f64, m: u32) -> f64 {
    let mf = m as f64;
    mf * (1.0 - (2.0 * delta_prime / mf).ln() / epsilon_prime)
}

/// Plan for `(ε′, δ′)`-indistinguishability: `λ = 2m/ε′`, `τ = 1`, and
/// `τ′` from [`indistinguishable_tau_prime`].
///
/// `users` only feeds the achieved-probabilistic-`δ` bookkeeping.
pub fn plan_indistinguishable(
    epsilon_prime: f64,
    delta_prime: f64,
    m: u32,
    users: u64,
) -> Result<ZealousPlan, PlanError> {
    let budget = PrivacyBudget::new(epsilon_prime, delta_prime, BudgetFlavor::Indistinguishability)?;
    if m < 1 {
        return Err(PlanError::ZeroContribution);
    }
    let lambda = 2.0 * m as f64 / budget.epsilon;
    let tau_prime = indistinguishable_tau_prime(budget.epsilon, budget.delta, m);
    ZealousPlan::from_raw(m, lambda, 1.0, tau_prime, users)
}

/// Inverse of the probabilistic guarantee: `(ε, δ)` achieved by the
/// raw parameters. `δ` is clamped to 1.
pub fn achieved_delta(lambda: f64, tau: f64, tau_prime: f64, m: u32, users: u64) -> (f64, f64) {
    let epsilon = 2.0 * m as f64 / lambda;
    let delta =
        (users as f64 * m as f64 / (2.0 * tau)) * (-(tau_prime - tau) / lambda).exp();
    (epsilon, delta.min(1.0))
}

/// Inverse of the indistinguishability guarantee: `(ε′, δ′)` achieved
/// by the raw parameters. `δ′` is clamped to 1.
pub fn achieved_delta_prime(lambda: f64, tau_prime: f64, m: u32) -> (f64, f64) {
    let epsilon_prime = 2.0 * m as f64 / lambda;
    let delta_prime = (m as f64 / 2.0) * (-(tau_prime - m as f64) / lambda).exp();
    (epsilon_prime, delta_prime.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE2_SETTING: (f64, f64, u32, u64) = (1.0, 0.001, 2, 500_000);

    #[test]
    fn threshold_sweep_reproduces_known_values() {
        // (tau, tau') rows for m = 2, eps = 1, delta = 0.001, U = 500k.
        let expected = [
            (1.0, 81.1205),
            (2.0, 79.3479),
            (3.0, 78.7260),
            (4.0, 78.5753),
            (5.0, 78.6827),
            (6.0, 78.9534),
            (7.0, 79.3368),
            (8.0, 79.8027),
            (9.0, 80.3316),
            (10.0, 80.9101),
        ];
        let (eps, delta, m, users) = TABLE2_SETTING;
        for (tau, want) in expected {
            let got = tau_prime_for(eps, delta, m, users, tau).unwrap();
            assert!((got - want).abs() < 5e-4, "tau={tau}: got {got}, want {want}");
        }
    }

    #[test]
    fn auto_tau_is_the_integer_minimizer() {
        let (eps, delta, m, users) = TABLE2_SETTING;
        let plan = plan_probabilistic(eps, delta, m, users, None).unwrap();
        assert_eq!(plan.tau, 4.0);
        assert!((plan.tau_prime - 78.5753).abs() < 5e-4);
        let best = (1..=40)
            .map(|t| (t, tau_prime_for(eps, delta, m, users, t as f64).unwrap()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(best.0, 4);
    }

    #[test]
    fn achieved_delta_reproduces_quantitative_comparison() {
        // delta cells for U = 500k, m = 5, tau = 1.
        let cells = [
            (1.0, 100.0, 1.3e-37),
            (1.0, 200.0, 4.7e-81),
            (5.0, 100.0, 3.2e-3),
            (5.0, 200.0, 6.5e-12),
        ];
        for (lambda, tau_prime, want) in cells {
            let (eps, delta) = achieved_delta(lambda, 1.0, tau_prime, 5, 500_000);
            assert!((eps - 10.0 / lambda * 1.0).abs() < 1e-12);
            let rel = (delta - want).abs() / want;
            assert!(rel < 0.1, "lambda={lambda} tau'={tau_prime}: {delta:e} vs {want:e}");
        }
    }

    #[test]
    fn achieved_delta_prime_reproduces_quantitative_comparison() {
        let cells = [
            (1.0, 100.0, 1.4e-41),
            (1.0, 200.0, 5.2e-85),
            (5.0, 100.0, 1.4e-8),
            (5.0, 200.0, 2.9e-17),
        ];
        for (lambda, tau_prime, want) in cells {
            let (eps_p, delta_p) = achieved_delta_prime(lambda, tau_prime, 5);
            assert!((eps_p - 10.0 / lambda).abs() < 1e-12);
            let rel = (delta_p - want).abs() / want;
            assert!(rel < 0.1, "lambda={lambda} tau'={tau_prime}: {delta_p:e} vs {want:e}");
        }
    }

    #[test]
    fn indistinguishability_planner_hand_values() {
        // tau' = m(1 - ln(2 delta'/m)/eps'); both cases evaluated by hand.
        let plan = plan_indistinguishable(10.0, 2.5 * (-19.0f64).exp(), 5, 500_000).unwrap();
        assert!((plan.tau_prime - 14.5).abs() < 1e-9, "got {}", plan.tau_prime);
        assert_eq!(plan.tau, 1.0);
        assert!((plan.lambda - 1.0).abs() < 1e-12);

        let plan = plan_indistinguishable(1.0, 0.1, 1, 100).unwrap();
        assert!((plan.tau_prime - (1.0 + 5.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn vanishing_log_term_puts_tau_prime_at_m() {
        // delta' = m/2 makes the log term vanish. Checked on the raw
        // formula: such a delta' is outside any valid budget.
        for m in [1u32, 4, 9] {
            let tp = indistinguishable_tau_prime(2.0, m as f64 / 2.0, m);
            assert!((tp - m as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_thresholds_clamp_to_one() {
        let (_, delta) = achieved_delta(1.0, 5.0, 5.0 + 1e-300, 1, 10);
        assert_eq!(delta, 1.0);
        let (_, delta_prime) = achieved_delta_prime(1.0, 2.0, 2);
        assert_eq!(delta_prime, 1.0, "tau' = m with m >= 2 clamps");
    }

    #[test]
    fn round_trip_is_exact_in_the_delta_branch() {
        let plan = plan_probabilistic(1.0, 0.001, 2, 500_000, None).unwrap();
        let (eps, delta) = achieved_delta(plan.lambda, plan.tau, plan.tau_prime, plan.m, plan.users);
        assert!((eps - 1.0).abs() < 1e-12);
        assert!((delta - 0.001).abs() / 0.001 < 1e-12);
        assert_eq!(plan.delta, delta);
    }

    #[test]
    fn invalid_budgets_are_rejected() {
        assert!(matches!(
            plan_probabilistic(0.0, 0.001, 1, 10, None),
            Err(PlanError::NonPositiveEpsilon(_))
        ));
        assert!(matches!(
            plan_probabilistic(1.0, 0.0, 1, 10, None),
            Err(PlanError::DeltaOutOfRange(_))
        ));
        assert!(matches!(
            plan_probabilistic(1.0, 1.0, 1, 10, None),
            Err(PlanError::DeltaOutOfRange(_))
        ));
        assert!(matches!(
            plan_probabilistic(1.0, 0.001, 0, 10, None),
            Err(PlanError::ZeroContribution)
        ));
        assert!(matches!(
            plan_probabilistic(1.0, 0.001, 1, 10, Some(-2.0)),
            Err(PlanError::NonPositiveTau(_))
        ));
    }

    #[test]
    fn tau_prime_grows_as_delta_shrinks() {
        let mut last = f64::NEG_INFINITY;
        for delta in [0.1, 0.01, 0.001, 1e-6, 1e-9] {
            let tp = tau_prime_for(1.0, delta, 2, 500_000, 4.0).unwrap();
            assert!(tp > last, "tau' should increase as delta decreases");
            last = tp;
        }
    }

    #[test]
    fn delta_shrinks_as_tau_prime_grows() {
        // tau' values low enough to clamp at 1 first, then strictly
        // decreasing once below the clamp.
        let deltas: Vec<f64> = [10.0, 40.0, 60.0, 100.0, 200.0]
            .iter()
            .map(|&tp| achieved_delta(2.0, 1.0, tp, 2, 500_000).1)
            .collect();
        assert_eq!(deltas[0], 1.0, "small gaps clamp to 1");
        for pair in deltas.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        assert!(deltas[4] < deltas[1], "strict decrease below the clamp");
    }
}
