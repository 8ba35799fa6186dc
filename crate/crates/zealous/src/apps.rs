//! Application-level evaluations: greedy index caching driven by a
//! keyword workload, and query substitution driven by a query-pair
//! histogram.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::searchlog::split_parts;
use crate::utility::{ranking_metrics, RankedList, RankingMetrics, UtilityError};

/// Histogram-like weights: item to (possibly noisy) count.
pub type Weights = BTreeMap<String, f64>;

/// Posting lists are truncated at this many documents.
pub const POSTING_LIST_CAP: u64 = 200_000;
pub const DEFAULT_BYTES_PER_POSTING: u64 = 8;
/// 1 GiB.
pub const DEFAULT_MEMORY_BUDGET: u64 = 1 << 30;

#[derive(Debug, Error, PartialEq)]
pub enum AppsError {
    #[error("posting list for `{0}` has length zero")]
    EmptyPostingList(String),
    #[error("workload is empty")]
    EmptyWorkload,
    #[error("top-j parameter must be at least 1")]
    BadTopJ,
}

/// Keyword → posting-list length, with sizing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostingListModel {
    lengths: BTreeMap<String, u64>,
    pub bytes_per_posting: u64,
    pub memory_budget: u64,
}

impl PostingListModel {
    /// Build a model; lengths are capped at [`POSTING_LIST_CAP`] and
    /// zero lengths are rejected.
    pub fn new(
        lengths: BTreeMap<String, u64>,
        bytes_per_posting: u64,
        memory_budget: u64,
    ) -> Result<Self, AppsError> {
        if let Some((kw, _)) = lengths.iter().find(|&(_, &len)| len == 0) {
            return Err(AppsError::EmptyPostingList(kw.clone()));
        }
        let lengths =
            lengths.into_iter().map(|(kw, len)| (kw, len.min(POSTING_LIST_CAP))).collect();
        Ok(PostingListModel { lengths, bytes_per_posting, memory_budget })
    }

    pub fn with_defaults(lengths: BTreeMap<String, u64>) -> Result<Self, AppsError> {
        Self::new(lengths, DEFAULT_BYTES_PER_POSTING, DEFAULT_MEMORY_BUDGET)
    }

    pub fn length(&self, keyword: &str) -> Option<u64> {
        self.lengths.get(keyword).copied()
    }

    pub fn bytes_for(&self, keyword: &str) -> Option<u64> {
        self.length(keyword).map(|len| len * self.bytes_per_posting)
    }
}

/// Which posting lists to hold in memory and what that buys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachePlan {
    pub cached: BTreeSet<String>,
    pub bytes_used: u64,
    /// Workload mass of the cached keywords over the total mass.
    pub hit_probability: f64,
}

/// How the greedy packing treats a list that does not fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GreedyStop {
    /// Stop at the first list that does not fit (default).
    #[default]
    FirstMisfit,
    /// Skip it and keep trying smaller lists.
    SkipAhead,
}

/// Rank keywords by workload-frequency per posting, then add posting
/// lists in rank order until memory runs out. Keywords without a
/// posting list cannot be cached but still count toward the workload
/// mass.
pub fn greedy_cache(
    workload: &Weights,
    postings: &PostingListModel,
    stop: GreedyStop,
) -> Result<CachePlan, AppsError> {
    if workload.is_empty() {
        return Err(AppsError::EmptyWorkload);
    }
    let mut scored: Vec<(&String, f64)> = workload
        .iter()
        .filter_map(|(kw, &freq)| {
            postings.length(kw).map(|len| (kw, freq / len as f64))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut cached = BTreeSet::new();
    let mut bytes_used = 0u64;
    for (kw, _) in scored {
        let bytes = postings.bytes_for(kw).unwrap();
        if bytes_used + bytes <= postings.memory_budget {
            bytes_used += bytes;
            cached.insert(kw.clone());
        } else {
            match stop {
                GreedyStop::FirstMisfit => break,
                GreedyStop::SkipAhead => continue,
            }
        }
    }
    let hit_probability = hit_probability(&cached, workload);
    Ok(CachePlan { cached, bytes_used, hit_probability })
}

/// Workload mass of `cached` relative to the total workload mass.
pub fn hit_probability(cached: &BTreeSet<String>, workload: &Weights) -> f64 {
    let total: f64 = workload.values().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let hit: f64 = workload
        .iter()
        .filter(|(kw, _)| cached.contains(*kw))
        .map(|(_, &f)| f)
        .sum();
    hit / total
}

/// Plan the cache with the sanitized workload, then score it under the
/// true workload.
pub fn evaluate_cache(
    truth_workload: &Weights,
    sanitized_workload: &Weights,
    postings: &PostingListModel,
    stop: GreedyStop,
) -> Result<f64, AppsError> {
    if sanitized_workload.is_empty() {
        // Nothing to plan from: an empty cache hits nothing.
        return Ok(0.0);
    }
    let plan = greedy_cache(sanitized_workload, postings, stop)?;
    Ok(hit_probability(&plan.cached, truth_workload))
}

/// Top-`j` follow-up queries of `query` in a query-pair histogram,
/// ranked by pair count with lexicographic tie-breaking.
pub fn substitutions(query_pairs: &Weights, query: &str, j: usize) -> RankedList {
    let mut successors: Vec<(&str, f64)> = query_pairs
        .iter()
        .filter_map(|(pair, &count)| match split_parts(pair) {
            Some((from, to)) if from == query => Some((to, count)),
            _ => None,
        })
        .collect();
    successors.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    successors.truncate(j);
    RankedList::new(query, successors.into_iter().map(|(q, _)| q.to_string()).collect())
}

/// Substitution quality of a sanitized pair histogram against the
/// truth, averaged with two different denominators: coverage over the
/// queries for which the truth produces substitutions, ranking metrics
/// over the queries for which both sides produce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionEval {
    pub coverage: f64,
    /// `None` when no query produced substitutions on both sides.
    pub ranking: Option<RankingMetrics>,
    pub truth_productive: usize,
    pub scored: usize,
}

pub fn evaluate_substitutions(
    truth_pairs: &Weights,
    sanitized_pairs: &Weights,
    eval_queries: &[String],
    j: usize,
) -> Result<SubstitutionEval, AppsError> {
    if j == 0 {
        return Err(AppsError::BadTopJ);
    }
    let mut truth_productive = 0usize;
    let mut covered = 0usize;
    let mut scored = 0usize;
    let mut sums = (0.0, 0.0, 0.0, 0.0);
    for query in eval_queries {
        let truth_list = substitutions(truth_pairs, query, j);
        if truth_list.is_empty() {
            continue;
        }
        truth_productive += 1;
        let cand_list = substitutions(sanitized_pairs, query, j);
        if cand_list.is_empty() {
            continue;
        }
        covered += 1;
        match ranking_metrics(&truth_list, &cand_list, j) {
            Ok(m) => {
                scored += 1;
                sums.0 += m.precision;
                sums.1 += m.recall;
                sums.2 += m.map;
                sums.3 += m.ndcg;
            }
            Err(UtilityError::EmptyTruthRanking | UtilityError::EmptyCandidateRanking) => {}
            Err(other) => unreachable!("unexpected metric failure: {other}"),
        }
    }
    let coverage =
        if truth_productive > 0 { covered as f64 / truth_productive as f64 } else { 0.0 };
    let ranking = (scored > 0).then(|| {
        let n = scored as f64;
        RankingMetrics {
            precision: sums.0 / n,
            recall: sums.1 / n,
            map: sums.2 / n,
            ndcg: sums.3 / n,
        }
    });
    Ok(SubstitutionEval { coverage, ranking, truth_productive, scored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searchlog::join_parts;

    fn weights(items: &[(&str, f64)]) -> Weights {
        items.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    fn postings(lengths: &[(&str, u64)], budget: u64) -> PostingListModel {
        PostingListModel::new(
            lengths.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
            8,
            budget,
        )
        .unwrap()
    }

    #[test]
    fn everything_fits_means_hit_probability_one() {
        let w = weights(&[("a", 5.0), ("b", 3.0)]);
        let p = postings(&[("a", 10), ("b", 10)], 1 << 20);
        let plan = greedy_cache(&w, &p, GreedyStop::FirstMisfit).unwrap();
        assert_eq!(plan.hit_probability, 1.0);
        assert_eq!(plan.bytes_used, 160);
    }

    #[test]
    fn zero_budget_caches_nothing() {
        let w = weights(&[("a", 5.0)]);
        let p = postings(&[("a", 1)], 0);
        let plan = greedy_cache(&w, &p, GreedyStop::FirstMisfit).unwrap();
        assert!(plan.cached.is_empty());
        assert_eq!(plan.hit_probability, 0.0);
    }

    #[test]
    fn greedy_hand_simulation() {
        // Frequencies (5, 3, 2); the third keyword's posting list is
        // huge (capped at 200k, 1.6 MB), budget 16 bytes. The two
        // one-posting lists fit, giving hit probability 8/10.
        let w = weights(&[("k1", 5.0), ("k2", 3.0), ("k3", 2.0)]);
        let p = postings(&[("k1", 1), ("k2", 1), ("k3", 1_000_000_000)], 16);
        assert_eq!(p.length("k3"), Some(POSTING_LIST_CAP), "cap applies");
        let plan = greedy_cache(&w, &p, GreedyStop::FirstMisfit).unwrap();
        assert_eq!(plan.cached, ["k1", "k2"].iter().map(|s| s.to_string()).collect());
        assert!((plan.hit_probability - 0.8).abs() < 1e-15);
    }

    #[test]
    fn first_misfit_stops_but_skip_ahead_continues() {
        // Score order: a (10), b (20/3), c (6). b's 24-byte list busts
        // the 16-byte budget; the skip-ahead variant still takes c.
        let w = weights(&[("a", 10.0), ("b", 20.0), ("c", 6.0)]);
        let p = postings(&[("a", 1), ("b", 3), ("c", 1)], 16);
        let stop = greedy_cache(&w, &p, GreedyStop::FirstMisfit).unwrap();
        assert_eq!(stop.cached, ["a".to_string()].into());
        let skip = greedy_cache(&w, &p, GreedyStop::SkipAhead).unwrap();
        assert_eq!(skip.cached, ["a".to_string(), "c".to_string()].into());
    }

    #[test]
    fn zero_length_posting_lists_are_rejected() {
        let err = PostingListModel::new(
            [("a".to_string(), 0u64)].into_iter().collect(),
            8,
            100,
        );
        assert_eq!(err.unwrap_err(), AppsError::EmptyPostingList("a".into()));
    }

    #[test]
    fn cache_hit_probability_is_monotone_in_budget() {
        let w = weights(&[("a", 9.0), ("b", 7.0), ("c", 5.0), ("d", 1.0)]);
        let lengths = [("a", 3), ("b", 2), ("c", 4), ("d", 1)];
        let mut last = -1.0;
        for budget in (0..=100).step_by(4) {
            let p = postings(&lengths, budget);
            let plan = greedy_cache(&w, &p, GreedyStop::FirstMisfit).unwrap();
            assert!(plan.hit_probability >= last);
            last = plan.hit_probability;
        }
    }

    #[test]
    fn planning_from_truth_matches_direct_greedy() {
        let w = weights(&[("a", 9.0), ("b", 7.0), ("c", 5.0)]);
        let p = postings(&[("a", 3), ("b", 2), ("c", 4)], 40);
        let direct = greedy_cache(&w, &p, GreedyStop::FirstMisfit).unwrap();
        let hit = evaluate_cache(&w, &w, &p, GreedyStop::FirstMisfit).unwrap();
        assert_eq!(hit, direct.hit_probability);
    }

    #[test]
    fn empty_sanitized_workload_hits_nothing() {
        let w = weights(&[("a", 9.0)]);
        let p = postings(&[("a", 3)], 40);
        assert_eq!(evaluate_cache(&w, &Weights::new(), &p, GreedyStop::FirstMisfit).unwrap(), 0.0);
    }

    #[test]
    fn missing_keyword_costs_exactly_its_truth_mass() {
        // Hand-built 4-keyword instance: equal posting lengths, budget
        // for two lists. Truth picks {a, b}; the sanitized workload
        // misses b and prefers {a, c}; the difference in hit
        // probability is freq(b) - freq(c) over the total.
        let truth = weights(&[("a", 10.0), ("b", 8.0), ("c", 6.0), ("d", 1.0)]);
        let sanitized = weights(&[("a", 10.0), ("c", 6.0), ("d", 1.0)]);
        let p = postings(&[("a", 2), ("b", 2), ("c", 2), ("d", 2)], 32);
        let best = evaluate_cache(&truth, &truth, &p, GreedyStop::FirstMisfit).unwrap();
        let got = evaluate_cache(&truth, &sanitized, &p, GreedyStop::FirstMisfit).unwrap();
        let total = 25.0;
        assert!((best - 18.0 / total).abs() < 1e-15);
        assert!((got - 16.0 / total).abs() < 1e-15);
        assert!(((best - got) - (8.0 - 6.0) / total).abs() < 1e-15);
    }

    fn pair_weights(pairs: &[(&str, &str, f64)]) -> Weights {
        pairs.iter().map(|&(a, b, c)| (join_parts(a, b), c)).collect()
    }

    #[test]
    fn substitutions_rank_by_count() {
        let pairs = pair_weights(&[("q", "a", 5.0), ("q", "b", 3.0), ("other", "x", 9.0)]);
        let top1 = substitutions(&pairs, "q", 1);
        assert_eq!(top1.substitutions, vec!["a"]);
        let top9 = substitutions(&pairs, "q", 9);
        assert_eq!(top9.substitutions, vec!["a", "b"], "all successors, ranked");
        assert!(substitutions(&pairs, "unseen", 3).is_empty());
    }

    #[test]
    fn substitution_ties_break_lexicographically() {
        let pairs = pair_weights(&[("q", "zz", 2.0), ("q", "aa", 2.0)]);
        let top = substitutions(&pairs, "q", 2);
        assert_eq!(top.substitutions, vec!["aa", "zz"]);
    }

    #[test]
    fn perfect_sanitization_scores_one() {
        let pairs = pair_weights(&[
            ("q1", "a", 5.0),
            ("q1", "b", 3.0),
            ("q2", "c", 4.0),
        ]);
        let queries = vec!["q1".to_string(), "q2".to_string()];
        let eval = evaluate_substitutions(&pairs, &pairs, &queries, 2).unwrap();
        assert_eq!(eval.coverage, 1.0);
        let m = eval.ranking.unwrap();
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.ndcg, 1.0);
    }

    #[test]
    fn empty_sanitized_pairs_give_zero_coverage_and_no_average() {
        let pairs = pair_weights(&[("q1", "a", 5.0)]);
        let queries = vec!["q1".to_string()];
        let eval = evaluate_substitutions(&pairs, &Weights::new(), &queries, 2).unwrap();
        assert_eq!(eval.coverage, 0.0);
        assert!(eval.ranking.is_none(), "averages over an empty set are reported as absent");
    }

    #[test]
    fn one_query_losing_its_pairs_drops_coverage_to_four_fifths() {
        let truth = pair_weights(&[
            ("q1", "a", 5.0),
            ("q2", "b", 5.0),
            ("q3", "c", 5.0),
            ("q4", "d", 5.0),
            ("q5", "e", 5.0),
        ]);
        let mut sanitized = truth.clone();
        sanitized.remove(&join_parts("q3", "c"));
        let queries: Vec<String> = (1..=5).map(|i| format!("q{i}")).collect();
        let eval = evaluate_substitutions(&truth, &sanitized, &queries, 2).unwrap();
        assert_eq!(eval.truth_productive, 5);
        assert!((eval.coverage - 0.8).abs() < 1e-15);
    }
}
