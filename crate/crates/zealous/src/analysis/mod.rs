//! Executable checks of the privacy guarantees on small instances:
//! exact release-set probabilities, the two proof obligations of the
//! probabilistic-privacy theorem, the implication from probabilistic
//! privacy to indistinguishability, a counterexample showing the
//! converse fails, and the impossibility bound for plain differential
//! privacy.

mod negative;
mod oracle;

pub use negative::{
    counterexample_a_hat, history_key, impossibility_bound, lemma3_ratio, AHatReport,
    BreachWitness, ImpossibilityBound,
};
pub use oracle::{
    all_release_sets, check_implication, release_set_probability, verify_indistinguishability,
    verify_prob_dp, ImplicationReport, IndistReport, ObligationA, ObligationB, OmegaSample,
    ProbDpReport,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

use crate::plan::ZealousPlan;
use crate::searchlog::{build_histogram, extract_items, ExtractOptions, Histogram, ItemKind, SearchLog};

/// Limits under which the oracle's probability computations stay exact
/// and exhaustive enumeration stays cheap.
pub const MAX_DOMAIN: usize = 16;
pub const MAX_USERS: u64 = 6;
pub const MAX_M: u32 = 3;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("logs must differ in exactly one user's history, found {0} differing")]
    NotNeighbors(usize),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("user {user} holds {items} distinct items, more than m = {m}; selection would be random")]
    OverfullUser { user: String, items: usize, m: u32 },
    #[error("item `{0}` is outside the declared domain")]
    OutsideDomain(String),
    #[error("domain must contain at least {0} distinct histories")]
    DomainTooSmall(usize),
    #[error("log has no users")]
    EmptyLog,
    #[error("the first user's history is not an element of the declared domain")]
    HistoryNotInDomain,
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

/// A small, fully-checkable verification instance: a pair of
/// neighboring logs, an explicit item domain, and the plan whose
/// guarantees are to be verified.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleInstance {
    pub domain: Vec<String>,
    pub log: SearchLog,
    pub neighbor: SearchLog,
    pub plan: ZealousPlan,
    pub kind: ItemKind,
    pub opts: ExtractOptions,
    /// Slack `ξ` for accuracy-flavored statements about the instance.
    pub slack_xi: f64,
    /// Accuracy constant `c` for the same statements.
    pub accuracy_c: f64,
}

impl OracleInstance {
    /// Validate and build. Every user must hold at most `m` distinct
    /// items so that per-user selection is the identity and the output
    /// distribution factorizes exactly over items.
    pub fn new(
        domain: Vec<String>,
        log: SearchLog,
        neighbor: SearchLog,
        plan: ZealousPlan,
        kind: ItemKind,
        opts: ExtractOptions,
    ) -> Result<Self, AnalysisError> {
        if domain.len() > MAX_DOMAIN {
            return Err(AnalysisError::TooLarge(format!(
                "domain has {} items, max {MAX_DOMAIN}",
                domain.len()
            )));
        }
        if log.user_count() > MAX_USERS || neighbor.user_count() > MAX_USERS {
            return Err(AnalysisError::TooLarge(format!("more than {MAX_USERS} users")));
        }
        if plan.m > MAX_M {
            return Err(AnalysisError::TooLarge(format!("m = {} exceeds {MAX_M}", plan.m)));
        }

        let differing = differing_users(&log, &neighbor);
        if differing != 1 {
            return Err(AnalysisError::NotNeighbors(differing));
        }

        let domain_set: BTreeSet<&str> = domain.iter().map(String::as_str).collect();
        for l in [&log, &neighbor] {
            for (user, items) in extract_items(l, kind, &opts) {
                let distinct: BTreeSet<&String> = items.iter().collect();
                if distinct.len() > plan.m as usize {
                    return Err(AnalysisError::OverfullUser {
                        user,
                        items: distinct.len(),
                        m: plan.m,
                    });
                }
                for item in distinct {
                    if !domain_set.contains(item.as_str()) {
                        return Err(AnalysisError::OutsideDomain(item.clone()));
                    }
                }
            }
        }

        Ok(OracleInstance { domain, log, neighbor, plan, kind, opts, slack_xi: 0.0, accuracy_c: 1.0 })
    }

    /// User-level histogram of the log. Selection is the identity on
    /// valid instances, so no seed is involved.
    pub fn histogram(&self) -> Histogram {
        build_histogram(&self.log, self.kind, &self.opts)
    }

    pub fn neighbor_histogram(&self) -> Histogram {
        build_histogram(&self.neighbor, self.kind, &self.opts)
    }
}

/// Number of users whose histories differ between the two logs
/// (counting users present in only one of them).
fn differing_users(a: &SearchLog, b: &SearchLog) -> usize {
    let ids: BTreeSet<&str> = a.user_ids().chain(b.user_ids()).collect();
    ids.into_iter()
        .filter(|id| match (a.history(id), b.history(id)) {
            (Some(x), Some(y)) => x != y,
            (None, None) => false,
            _ => true,
        })
        .count()
}
