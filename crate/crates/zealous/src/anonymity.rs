//! The k-query-anonymity baseline: drop queries posed by fewer than
//! `k` distinct users, then replace user ids with one fresh random
//! number per session.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

use crate::noise::keyed_stream;
use crate::searchlog::{
    build_histogram, canonical_query, sessions, ExtractOptions, Histogram, ItemKind, SearchEntry,
    SearchLog,
};

/// A search log whose user column holds per-session random numbers and
/// whose every query was posed by at least `k` distinct users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KQueryAnonymousLog {
    pub k: u32,
    /// Entries grouped by session; consecutive entries with the same
    /// id belong to one session.
    pub entries: Vec<SearchEntry>,
}

impl KQueryAnonymousLog {
    /// View the anonymous log as a search log whose "users" are the
    /// session numbers.
    pub fn to_log(&self) -> SearchLog {
        SearchLog::from_entries(self.entries.iter().cloned())
    }

    /// Same TSV layout as a raw log, with session numbers in the user
    /// column.
    pub fn to_tsv(&self) -> String {
        self.to_log().to_tsv()
    }

    pub fn session_count(&self) -> usize {
        self.to_log().user_count() as usize
    }
}

#[derive(Debug, Error)]
pub enum AnonymityError {
    #[error("a k-query anonymous log does not publish click data")]
    ClicksNotPublishable,
}

/// Drop entries whose query was posed by fewer than `k` distinct
/// users, split the survivors into sessions, and number the sessions
/// randomly (collision-free).
pub fn k_query_anonymize(
    log: &SearchLog,
    k: u32,
    seed: u64,
    opts: &ExtractOptions,
) -> KQueryAnonymousLog {
    assert!(k >= 1, "k must be at least 1");
    let query_users = build_histogram(log, ItemKind::Query, opts);

    let mut rng = keyed_stream(seed, "k-anon", "sessions");
    let mut used: HashSet<u64> = HashSet::new();
    let mut surviving_sessions: Vec<Vec<SearchEntry>> = Vec::new();
    for (_, history) in log.users() {
        for session in sessions(history, opts.session_gap) {
            let kept: Vec<SearchEntry> = session
                .iter()
                .filter(|e| {
                    query_users.get(&canonical_query(&e.query, opts.query_identity)) >= k as u64
                })
                .cloned()
                .collect();
            if !kept.is_empty() {
                surviving_sessions.push(kept);
            }
        }
    }

    // Random session order, then one fresh id per session.
    for i in (1..surviving_sessions.len()).rev() {
        surviving_sessions.swap(i, rng.random_range(0..=i));
    }
    let mut entries = Vec::new();
    for mut session in surviving_sessions {
        let id = loop {
            let candidate: u64 = rng.random();
            if used.insert(candidate) {
                break candidate;
            }
        };
        for e in &mut session {
            e.user_id = id.to_string();
        }
        entries.extend(session);
    }
    KQueryAnonymousLog { k, entries }
}

/// Histogram over the anonymous log's surviving entries, counting
/// distinct sessions. Click histograms are refused: the anonymous log
/// carries no usable click release.
pub fn histograms_from_anonymous(
    anon: &KQueryAnonymousLog,
    kind: ItemKind,
    opts: &ExtractOptions,
) -> Result<Histogram, AnonymityError> {
    if kind == ItemKind::Click {
        return Err(AnonymityError::ClicksNotPublishable);
    }
    Ok(build_histogram(&anon.to_log(), kind, opts))
}
