//! Negative results, made executable: the uniform-resampling
//! counterexample separating indistinguishability from probabilistic
//! privacy, the impossibility bound for plain differential privacy on
//! large domains, and the per-item retention ratio lemma.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::noise::keyed_stream;
use crate::searchlog::{canonical_query, QueryIdentity, SearchEntry, SearchLog};

use super::AnalysisError;

/// Canonical string form of a user history: its canonical queries in
/// time order, joined by `"; "`.
pub fn history_key(history: &[SearchEntry], identity: QueryIdentity) -> String {
    history
        .iter()
        .map(|e| canonical_query(&e.query, identity))
        .collect::<Vec<_>>()
        .join("; ")
}

/// An output witnessing a differential-privacy breach: possible under
/// the log, impossible under a neighbor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BreachWitness {
    pub output: String,
    /// The neighbor's first-user history that forces probability zero.
    pub neighbor_first_history: String,
    pub prob_under_log: f64,
    pub prob_under_neighbor: f64,
}

/// Analysis of the resampling algorithm: uniformly output one history
/// from the domain excluding the first user's.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AHatReport {
    pub sampled: String,
    pub domain_size: usize,
    /// `1/(|D|-1)`: the algorithm is `(ε′, δ′)`-indistinguishable with
    /// this `δ′` for every `ε′ ≥ 0`.
    pub delta_prime: f64,
    /// Largest singleton-event gap `P[Â(S)=O] - P[Â(S′)=O]` over all
    /// neighbors, computed at `ε′ = 0` (which dominates every larger ε′).
    pub max_singleton_gap: f64,
    /// Largest worst-event gap at `ε′ = 0`.
    pub max_event_gap: f64,
    pub witness: BreachWitness,
    /// Probability mass of outputs that breach plain differential
    /// privacy: every possible output does, so this is 1.
    pub breach_mass: f64,
}

/// Run the resampling algorithm once and verify its guarantees
/// exhaustively over all first-history neighbors and all output
/// events.
///
/// The first user is the one with the smallest user id.
pub fn counterexample_a_hat(
    domain: &[String],
    log: &SearchLog,
    seed: u64,
) -> Result<AHatReport, AnalysisError> {
    if domain.len() < 2 {
        return Err(AnalysisError::DomainTooSmall(2));
    }
    {
        let mut sorted: Vec<&String> = domain.iter().collect();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != domain.len() {
            return Err(AnalysisError::BadArgument("domain histories must be distinct".into()));
        }
    }
    let first_user = log.user_ids().next().ok_or(AnalysisError::EmptyLog)?;
    let first_history = history_key(log.history(first_user).unwrap(), QueryIdentity::Sequence);
    if !domain.contains(&first_history) {
        return Err(AnalysisError::HistoryNotInDomain);
    }

    let n = domain.len();
    let uniform = 1.0 / (n - 1) as f64;
    let others: Vec<&String> = domain.iter().filter(|h| **h != first_history).collect();

    // The algorithm itself.
    let mut rng = keyed_stream(seed, "a-hat", first_user);
    let sampled = others[rng.random_range(0..others.len())].clone();

    // Exhaustive verification at eps' = 0. P_S(h) = uniform for h != s1;
    // P_S'(h) = uniform for h != a, over every neighbor first-history a.
    let mut max_singleton_gap: f64 = 0.0;
    let mut max_event_gap: f64 = 0.0;
    for alternative in &others {
        let mut event_gap = 0.0;
        for h in domain {
            let p = if *h != first_history { uniform } else { 0.0 };
            let q = if *h != **alternative { uniform } else { 0.0 };
            max_singleton_gap = max_singleton_gap.max(p - q).max(q - p);
            event_gap += (p - q).max(0.0);
        }
        max_event_gap = max_event_gap.max(event_gap);
    }

    // Breach witness: any output O != s1 together with the neighbor
    // whose first history is O.
    let witness = BreachWitness {
        output: sampled.clone(),
        neighbor_first_history: sampled.clone(),
        prob_under_log: uniform,
        prob_under_neighbor: 0.0,
    };

    Ok(AHatReport {
        sampled,
        domain_size: n,
        delta_prime: uniform,
        max_singleton_gap,
        max_event_gap,
        witness,
        breach_mass: 1.0,
    })
}

/// The domain-size threshold beyond which any `c`-accurate
/// `ε`-differentially-private algorithm is worse than publishing
/// nothing, plus the matching inaccuracy lower bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpossibilityBound {
    /// `U·m·(2e^{2ε(τ+ξ)/m}/(c(τ+ξ)) + 1/(τ-ξ+1))`.
    pub domain_threshold: f64,
    /// Same expression with the exponent constant `ε` instead of `2ε`,
    /// which also appears in print; reported for comparison.
    pub text_variant_threshold: f64,
    /// `2·U·m/(τ+ξ)`: the inaccuracy any such algorithm must exceed on
    /// large domains.
    pub inaccuracy_lower_bound: f64,
    /// What the empty-output baseline scores: one miss per
    /// very-frequent item and nothing else.
    pub baseline_note: String,
}

impl ImpossibilityBound {
    /// Does the impossibility argument apply to a domain of this size?
    pub fn applies(&self, domain_size: f64) -> bool {
        domain_size >= self.domain_threshold
    }
}

pub fn impossibility_bound(
    users: u64,
    m: u32,
    tau_plus_xi: f64,
    tau_minus_xi: f64,
    epsilon: f64,
    c: f64,
) -> Result<ImpossibilityBound, AnalysisError> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(AnalysisError::BadArgument(format!("c must be in (0, 1], got {c}")));
    }
    if !(tau_plus_xi > 0.0) {
        return Err(AnalysisError::BadArgument("tau + xi must be positive".into()));
    }
    if tau_minus_xi < 0.0 {
        return Err(AnalysisError::BadArgument("tau - xi must be non-negative".into()));
    }
    let um = users as f64 * m as f64;
    let shared = 1.0 / (tau_minus_xi + 1.0);
    let threshold =
        um * (2.0 * (2.0 * epsilon * tau_plus_xi / m as f64).exp() / (c * tau_plus_xi) + shared);
    let text_variant =
        um * (2.0 * (epsilon * tau_plus_xi / m as f64).exp() / (c * tau_plus_xi) + shared);
    Ok(ImpossibilityBound {
        domain_threshold: threshold,
        text_variant_threshold: text_variant,
        inaccuracy_lower_bound: 2.0 * um / tau_plus_xi,
        baseline_note:
            "the always-empty baseline errs once per very-frequent item, at most U·m/(τ+ξ) in total"
                .to_string(),
    })
}

/// Retention lower bound for a differentially-private algorithm across
/// neighboring inputs: an item retained with probability `p` on one
/// log is retained with probability at least `p·e^{-L1·ε/m}` on the
/// other.
pub fn lemma3_ratio(epsilon: f64, m: u32, l1_distance: f64, p: f64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AnalysisError::BadArgument(format!("p must be a probability, got {p}")));
    }
    if l1_distance < 0.0 {
        return Err(AnalysisError::BadArgument("L1 distance must be non-negative".into()));
    }
    Ok(p * (-l1_distance * epsilon / m as f64).exp())
}
