//! Utility metrics: inaccuracy under a slack band, retention
//! probabilities, histogram distances, top-j coverage, and ranking
//! quality for query substitution.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::laplace_survival;
use crate::plan::ZealousPlan;
use crate::searchlog::{Histogram, ItemKind};

#[derive(Debug, Error, PartialEq)]
pub enum UtilityError {
    #[error("truth histogram is empty")]
    EmptyTruth,
    #[error("slack must satisfy xi >= 0 and tau* - xi >= 0")]
    BadSlack,
    #[error("ranking truth list is empty; metrics are undefined")]
    EmptyTruthRanking,
    #[error("ranking candidate list is empty; metrics are undefined")]
    EmptyCandidateRanking,
    #[error("top-j parameter must be at least 1")]
    BadTopJ,
}

/// Target threshold `τ*` with slack `ξ`: items above `τ*+ξ` are
/// very-frequent, items below `τ*-ξ` are very-infrequent, and the band
/// in between never counts against an algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackSpec {
    pub tau_star: f64,
    pub xi: f64,
}

impl SlackSpec {
    pub fn new(tau_star: f64, xi: f64) -> Result<Self, UtilityError> {
        if xi < 0.0 || tau_star - xi < 0.0 {
            return Err(UtilityError::BadSlack);
        }
        Ok(SlackSpec { tau_star, xi })
    }

    pub fn very_frequent(&self, count: f64) -> bool {
        count > self.tau_star + self.xi
    }

    pub fn very_infrequent(&self, count: f64) -> bool {
        count < self.tau_star - self.xi
    }
}

/// Average number of items an algorithm got wrong, split into the two
/// failure modes. `inaccuracy = retain_failures + filter_failures`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InaccuracyStats {
    pub inaccuracy: f64,
    /// Very-frequent items missing from the output.
    pub retain_failures: f64,
    /// Very-infrequent items present in the output.
    pub filter_failures: f64,
}

/// Average, over repeated runs of one algorithm, of the number of
/// very-infrequent items published plus very-frequent items dropped.
pub fn empirical_inaccuracy(
    truth: &Histogram,
    published_sets: &[BTreeSet<String>],
    slack: &SlackSpec,
) -> InaccuracyStats {
    let runs = published_sets.len().max(1) as f64;
    let mut retain = 0usize;
    let mut filter = 0usize;
    for out in published_sets {
        filter += out.iter().filter(|d| slack.very_infrequent(truth.get(d) as f64)).count();
        retain += truth
            .iter()
            .filter(|&(d, c)| slack.very_frequent(c as f64) && !out.contains(d))
            .count();
    }
    let retain_failures = retain as f64 / runs;
    let filter_failures = filter as f64 / runs;
    InaccuracyStats {
        inaccuracy: retain_failures + filter_failures,
        retain_failures,
        filter_failures,
    }
}

/// `P[count + Lap(λ) > τ′]`, the probability that an item with the
/// given pre-noise count survives to publication. Counts below `τ` are
/// removed before noise, so their probability is exactly 0.
pub fn retention_probability(count: f64, plan: &ZealousPlan) -> f64 {
    if count < plan.tau {
        0.0
    } else {
        laplace_survival(plan.tau_prime - count, plan.lambda)
    }
}

/// Distance between published counts and the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistanceMetric {
    /// Mean absolute difference of relative frequencies over the top-j
    /// items of the truth.
    AvgL1,
    /// `Σ q·ln(q/p)` with `q` the published and `p` the true relative
    /// frequencies, over the top-j items of the truth.
    KlDivergence,
    /// Published counts are first scaled so totals match, then absolute
    /// count differences are averaged over every item of the truth;
    /// missing items contribute their full count.
    AvgCountDiff,
}

/// How the AvgL1 distance aggregates per-item differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum L1Mode {
    /// Mean over the top-j items (default).
    #[default]
    PerItem,
    /// Sum over the top-j items.
    TotalMass,
}

pub fn count_distance(
    truth: &Histogram,
    published: &BTreeMap<String, f64>,
    metric: DistanceMetric,
    top_j: Option<usize>,
) -> Result<f64, UtilityError> {
    count_distance_with(truth, published, metric, top_j, L1Mode::PerItem)
}

pub fn count_distance_with(
    truth: &Histogram,
    published: &BTreeMap<String, f64>,
    metric: DistanceMetric,
    top_j: Option<usize>,
    l1_mode: L1Mode,
) -> Result<f64, UtilityError> {
    if truth.is_empty() {
        return Err(UtilityError::EmptyTruth);
    }
    match metric {
        DistanceMetric::AvgCountDiff => {
            let published_total: f64 = published.values().sum();
            let scale =
                if published_total > 0.0 { truth.total() as f64 / published_total } else { 0.0 };
            let sum: f64 = truth
                .iter()
                .map(|(item, c)| {
                    let scaled = scale * published.get(item).copied().unwrap_or(0.0);
                    (c as f64 - scaled).abs()
                })
                .sum();
            Ok(sum / truth.len() as f64)
        }
        DistanceMetric::AvgL1 | DistanceMetric::KlDivergence => {
            let top = truth.top_j(top_j.unwrap_or(truth.len()));
            let truth_total = truth.total() as f64;
            let published_total: f64 = published.values().sum();
            let mut acc = 0.0;
            for &(item, c) in &top {
                let p = c as f64 / truth_total;
                let q = if published_total > 0.0 {
                    published.get(item).copied().unwrap_or(0.0) / published_total
                } else {
                    0.0
                };
                match metric {
                    DistanceMetric::AvgL1 => acc += (p - q).abs(),
                    DistanceMetric::KlDivergence => {
                        if q > 0.0 {
                            acc += q * (q / p).ln();
                        }
                    }
                    DistanceMetric::AvgCountDiff => unreachable!(),
                }
            }
            if metric == DistanceMetric::AvgL1 && l1_mode == L1Mode::PerItem {
                acc /= top.len() as f64;
            }
            Ok(acc)
        }
    }
}

/// Fraction of the truth's top-j items that were published. When `j`
/// exceeds the number of distinct items, all items are used.
pub fn top_j_coverage<S: std::hash::BuildHasher>(
    truth: &Histogram,
    published: &std::collections::HashSet<String, S>,
    j: usize,
) -> Result<f64, UtilityError> {
    if j == 0 {
        return Err(UtilityError::BadTopJ);
    }
    if truth.is_empty() {
        return Err(UtilityError::EmptyTruth);
    }
    let top = truth.top_j(j.min(truth.len()));
    let hit = top.iter().filter(|(item, _)| published.contains(*item)).count();
    Ok(hit as f64 / top.len() as f64)
}

/// A query with its ranked substitution list (no duplicates, best first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: String,
    pub substitutions: Vec<String>,
}

impl RankedList {
    /// Build a list, dropping duplicate substitutions after their
    /// first appearance.
    pub fn new(query: impl Into<String>, substitutions: Vec<String>) -> Self {
        let mut seen = BTreeSet::new();
        let substitutions =
            substitutions.into_iter().filter(|s| seen.insert(s.clone())).collect();
        RankedList { query: query.into(), substitutions }
    }

    pub fn is_empty(&self) -> bool {
        self.substitutions.is_empty()
    }
}

/// Ranking agreement between a candidate list and the ground truth.
///
/// The mean-average-precision variant used here sums, over truth
/// positions `i`, the ratio `(i+1)/(r+1)` where `r` is the candidate
/// rank of the truth item; absent items contribute 0. The sum is not
/// normalized, so a perfect length-j list scores `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub precision: f64,
    pub recall: f64,
    pub map: f64,
    pub ndcg: f64,
}

pub fn ranking_metrics(
    truth: &RankedList,
    candidate: &RankedList,
    j: usize,
) -> Result<RankingMetrics, UtilityError> {
    if j == 0 {
        return Err(UtilityError::BadTopJ);
    }
    let truth_cut: Vec<&String> = truth.substitutions.iter().take(j).collect();
    let cand_cut: Vec<&String> = candidate.substitutions.iter().take(j).collect();
    if truth_cut.is_empty() {
        return Err(UtilityError::EmptyTruthRanking);
    }
    if cand_cut.is_empty() {
        return Err(UtilityError::EmptyCandidateRanking);
    }

    let cand_rank: BTreeMap<&str, usize> =
        cand_cut.iter().enumerate().map(|(r, s)| (s.as_str(), r)).collect();
    let truth_rank: BTreeMap<&str, usize> =
        truth_cut.iter().enumerate().map(|(r, s)| (s.as_str(), r)).collect();

    let overlap = truth_cut.iter().filter(|s| cand_rank.contains_key(s.as_str())).count() as f64;
    let precision = overlap / cand_cut.len() as f64;
    let recall = overlap / truth_cut.len() as f64;

    let map = truth_cut
        .iter()
        .enumerate()
        .map(|(i, s)| match cand_rank.get(s.as_str()) {
            Some(&r) => (i + 1) as f64 / (r + 1) as f64,
            None => 0.0,
        })
        .sum();

    // Graded relevance: a candidate item found at truth rank t is worth
    // j - t; the ideal ordering is the truth list itself.
    let dcg: f64 = cand_cut
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let rel = truth_rank.get(s.as_str()).map_or(0.0, |&t| (j - t) as f64);
            rel / ((i + 2) as f64).log2()
        })
        .sum();
    let idcg: f64 = (0..truth_cut.len()).map(|t| (j - t) as f64 / ((t + 2) as f64).log2()).sum();
    let ndcg = dcg / idcg;

    Ok(RankingMetrics { precision, recall, map, ndcg })
}

/// A full metric bundle for one (algorithm, parameter) point, as
/// emitted by evaluation sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct UtilityReport {
    pub kind: Option<ItemKind>,
    pub inaccuracy: f64,
    pub retain_failures: f64,
    pub filter_failures: f64,
    pub avg_l1: f64,
    pub kl_divergence: f64,
    pub top_j_coverage: f64,
    pub count_diff: f64,
}
