//! The two-threshold sanitizer and the follow-on click-count release.
//!
//! Steps, in order: cap every user at `m` distinct items, histogram
//! the selections per user, delete counts smaller than `τ`, add
//! `Lap(λ)` noise to each surviving count, delete noisy counts at or
//! most `τ′`, publish the rest. Noise is keyed by `(seed, item)`, so
//! the release is a pure function of `(log, plan, seed)` and items can
//! be processed in any order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{keyed_stream, laplace_sample};
use crate::plan::ZealousPlan;
use crate::searchlog::{
    build_histogram, join_parts, select_per_user, split_parts, ExtractOptions, Histogram,
    ItemKind, SearchLog,
};

/// Surviving items with their noisy counts, plus the plan and seed
/// that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizedHistogram {
    pub kind: ItemKind,
    pub entries: BTreeMap<String, f64>,
    pub plan: ZealousPlan,
    pub seed: u64,
}

impl SanitizedHistogram {
    /// Noisy counts as weights (e.g. for cache planning).
    pub fn to_weights(&self) -> BTreeMap<String, f64> {
        self.entries.clone()
    }

    pub fn published_items(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

#[derive(Debug, Error)]
pub enum SanitizeError {
    #[error("plan is for {plan_users} users but the log has {log_users}")]
    UserCountMismatch { plan_users: u64, log_users: u64 },
    #[error("click publishing needs a sanitized query histogram, got kind `{0}`")]
    NotQueryHistogram(ItemKind),
}

/// Steps 3–6 applied to an already-built user-level histogram.
///
/// The raw-count filter is strict (`c < τ` is deleted), the noisy
/// filter is not (`c̃ ≤ τ′` is deleted).
pub fn sanitize_histogram(
    histogram: &Histogram,
    plan: &ZealousPlan,
    seed: u64,
) -> SanitizedHistogram {
    let mut entries = BTreeMap::new();
    for (item, count) in histogram.iter() {
        if (count as f64) < plan.tau {
            continue;
        }
        let noise = laplace_sample(plan.lambda, &mut keyed_stream(seed, "noise", item));
        let noisy = count as f64 + noise;
        if noisy <= plan.tau_prime {
            continue;
        }
        entries.insert(item.to_string(), noisy);
    }
    SanitizedHistogram { kind: histogram.kind, entries, plan: plan.clone(), seed }
}

/// Run the full pipeline on a search log.
pub fn sanitize(
    log: &SearchLog,
    kind: ItemKind,
    plan: &ZealousPlan,
    seed: u64,
    opts: &ExtractOptions,
) -> Result<SanitizedHistogram, SanitizeError> {
    if plan.users != log.user_count() {
        return Err(SanitizeError::UserCountMismatch {
            plan_users: plan.users,
            log_users: log.user_count(),
        });
    }
    let selection = select_per_user(log, kind, plan.m, seed, opts);
    Ok(sanitize_histogram(&selection.histogram, plan, seed))
}

/// One noisy click count for a (query, rank) slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickCount {
    pub rank: usize,
    /// `None` when the query has fewer observed clicked urls than the
    /// requested depth; the slot still gets a noisy zero.
    pub url: Option<String>,
    pub noisy_count: f64,
}

/// Noisy click counts for every published query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickRelease {
    pub lambda: f64,
    pub top_n: usize,
    pub seed: u64,
    pub per_query: BTreeMap<String, Vec<ClickCount>>,
}

/// For each query already published by [`sanitize`], release the click
/// counts of its `top_n` most-clicked urls with `Lap(λ)` noise and no
/// thresholding. Missing url slots are released as noisy zeros.
pub fn publish_clicks(
    log: &SearchLog,
    frequent_queries: &SanitizedHistogram,
    top_n: usize,
    lambda: f64,
    seed: u64,
    opts: &ExtractOptions,
) -> Result<ClickRelease, SanitizeError> {
    if frequent_queries.kind != ItemKind::Query {
        return Err(SanitizeError::NotQueryHistogram(frequent_queries.kind));
    }
    let clicks = build_histogram(log, ItemKind::Click, opts);
    let mut by_query: BTreeMap<&str, Vec<(&str, u64)>> = BTreeMap::new();
    for (item, count) in clicks.iter() {
        if let Some((query, url)) = split_parts(item) {
            by_query.entry(query).or_default().push((url, count));
        }
    }

    let mut per_query = BTreeMap::new();
    for query in frequent_queries.published_items() {
        let mut urls = by_query.get(query).cloned().unwrap_or_default();
        urls.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        urls.truncate(top_n);
        let counts: Vec<ClickCount> = (0..top_n)
            .map(|rank| {
                let (url, raw) = match urls.get(rank) {
                    Some(&(url, c)) => (Some(url.to_string()), c as f64),
                    None => (None, 0.0),
                };
                let slot = url.clone().unwrap_or_else(|| format!("#rank{rank}"));
                let key = join_parts(query, &slot);
                let noise = laplace_sample(lambda, &mut keyed_stream(seed, "clicks", &key));
                ClickCount { rank, url, noisy_count: raw + noise }
            })
            .collect();
        per_query.insert(query.to_string(), counts);
    }
    Ok(ClickRelease { lambda, top_n, seed, per_query })
}
