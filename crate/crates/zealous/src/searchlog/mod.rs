//! Search logs, item extraction, and user-level histograms.
//!
//! A search log is a set of per-user histories of `⟨user, query, time,
//! clicks⟩` entries. Histograms over a log count, for each item, the
//! number of *distinct users* whose history contains the item — never
//! the number of occurrences. Items come in four kinds: single
//! keywords, whole queries, consecutive query pairs within a session,
//! and (query, clicked-url) pairs.

mod ingest;
mod synth;

pub use ingest::{ingest_tsv, parse_log, Ingested, IngestError, IngestStats, LogFormat};
pub use synth::{generate_synthetic, CountSpec, SynthConfig, SynthError};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::noise::keyed_stream;

/// Separator between the two parts of a composite item (query pair or
/// click). Tabs cannot survive keyword normalization and cannot appear
/// inside a TSV field, so the encoding is unambiguous.
pub const ITEM_PART_SEPARATOR: char = '\t';

/// Join two item parts into one composite item string.
pub fn join_parts(a: &str, b: &str) -> String {
    format!("{a}{ITEM_PART_SEPARATOR}{b}")
}

/// Split a composite item into its two parts.
pub fn split_parts(item: &str) -> Option<(&str, &str)> {
    item.split_once(ITEM_PART_SEPARATOR)
}

/// One `⟨user, query, time, clicks⟩` record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchEntry {
    pub user_id: String,
    /// Normalized keywords, in the order they were typed. Never empty.
    pub query: Vec<String>,
    /// Seconds. Only differences matter (session splitting).
    pub time: i64,
    pub clicks: Vec<String>,
}

/// Lowercase a raw token and strip punctuation; `None` if nothing is left.
pub fn normalize_keyword(raw: &str) -> Option<String> {
    let kw: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect();
    if kw.is_empty() {
        None
    } else {
        Some(kw)
    }
}

/// Split raw query text on whitespace and normalize each token.
pub fn normalize_query(raw: &str) -> Vec<String> {
    raw.split_whitespace().filter_map(normalize_keyword).collect()
}

/// What counts as "the same query" when queries become items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum QueryIdentity {
    /// Keyword order preserved (default).
    #[default]
    Sequence,
    /// Keywords sorted and deduplicated.
    Set,
}

/// Options shared by all item-extraction paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    pub query_identity: QueryIdentity,
    /// A gap of strictly more than this many seconds between
    /// consecutive entries starts a new session.
    pub session_gap: i64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { query_identity: QueryIdentity::Sequence, session_gap: 1800 }
    }
}

/// Canonical string form of a query under the chosen identity.
pub fn canonical_query(keywords: &[String], identity: QueryIdentity) -> String {
    match identity {
        QueryIdentity::Sequence => keywords.join(" "),
        QueryIdentity::Set => {
            let set: BTreeSet<&str> = keywords.iter().map(String::as_str).collect();
            set.into_iter().collect::<Vec<_>>().join(" ")
        }
    }
}

/// The kind of item a histogram ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemKind {
    Keyword,
    Query,
    QueryPair,
    Click,
}

impl ItemKind {
    pub const ALL: [ItemKind; 4] =
        [ItemKind::Keyword, ItemKind::Query, ItemKind::QueryPair, ItemKind::Click];

    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::Keyword => "keyword",
            ItemKind::Query => "query",
            ItemKind::QueryPair => "query-pair",
            ItemKind::Click => "click",
        }
    }
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ItemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "keyword" | "keywords" => Ok(ItemKind::Keyword),
            "query" | "queries" => Ok(ItemKind::Query),
            "query-pair" | "querypair" | "query_pair" | "query-pairs" => Ok(ItemKind::QueryPair),
            "click" | "clicks" => Ok(ItemKind::Click),
            other => Err(format!("unknown item kind `{other}`")),
        }
    }
}

/// Per-user search histories, grouped by user id and time-sorted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchLog {
    users: BTreeMap<String, Vec<SearchEntry>>,
}

impl SearchLog {
    /// Group entries by user and sort each history by time. Entries
    /// with an empty query are dropped.
    pub fn from_entries<I: IntoIterator<Item = SearchEntry>>(entries: I) -> Self {
        let mut users: BTreeMap<String, Vec<SearchEntry>> = BTreeMap::new();
        for e in entries {
            if e.query.is_empty() {
                continue;
            }
            users.entry(e.user_id.clone()).or_default().push(e);
        }
        for history in users.values_mut() {
            history.sort_by_key(|e| e.time);
        }
        SearchLog { users }
    }

    /// Number of distinct users, `U`.
    pub fn user_count(&self) -> u64 {
        self.users.len() as u64
    }

    pub fn entry_count(&self) -> usize {
        self.users.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Users in id order with their time-sorted histories.
    pub fn users(&self) -> impl Iterator<Item = (&str, &[SearchEntry])> {
        self.users.iter().map(|(u, h)| (u.as_str(), h.as_slice()))
    }

    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }

    pub fn history(&self, user_id: &str) -> Option<&[SearchEntry]> {
        self.users.get(user_id).map(Vec::as_slice)
    }

    pub fn entries(&self) -> impl Iterator<Item = &SearchEntry> {
        self.users.values().flatten()
    }

    /// A copy with one user's history replaced (neighboring log).
    /// An empty replacement removes the user.
    pub fn with_history(&self, user_id: &str, history: Vec<SearchEntry>) -> SearchLog {
        let mut users = self.users.clone();
        if history.is_empty() {
            users.remove(user_id);
        } else {
            let mut history: Vec<SearchEntry> = history
                .into_iter()
                .map(|mut e| {
                    e.user_id = user_id.to_string();
                    e
                })
                .collect();
            history.sort_by_key(|e| e.time);
            users.insert(user_id.to_string(), history);
        }
        SearchLog { users }
    }

    /// Native TSV export: `user ⇥ keywords ⇥ time ⇥ url,url`. Users in
    /// id order, entries in time order, one `\n` per entry.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (user, history) in self.users() {
            for e in history {
                out.push_str(user);
                out.push('\t');
                out.push_str(&e.query.join(" "));
                out.push('\t');
                out.push_str(&e.time.to_string());
                out.push('\t');
                out.push_str(&e.clicks.join(","));
                out.push('\n');
            }
        }
        out
    }
}

/// Split one user's time-sorted history into sessions.
pub fn sessions<'a>(history: &'a [SearchEntry], gap: i64) -> Vec<&'a [SearchEntry]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..history.len() {
        if history[i].time - history[i - 1].time > gap {
            out.push(&history[start..i]);
            start = i;
        }
    }
    if !history.is_empty() {
        out.push(&history[start..]);
    }
    out
}

/// Items of `kind` contributed by one history (with repetitions).
fn items_of_history(history: &[SearchEntry], kind: ItemKind, opts: &ExtractOptions) -> Vec<String> {
    match kind {
        ItemKind::Keyword => {
            history.iter().flat_map(|e| e.query.iter().cloned()).collect()
        }
        ItemKind::Query => history
            .iter()
            .map(|e| canonical_query(&e.query, opts.query_identity))
            .collect(),
        ItemKind::QueryPair => {
            let mut items = Vec::new();
            for session in sessions(history, opts.session_gap) {
                for pair in session.windows(2) {
                    let a = canonical_query(&pair[0].query, opts.query_identity);
                    let b = canonical_query(&pair[1].query, opts.query_identity);
                    items.push(join_parts(&a, &b));
                }
            }
            items
        }
        ItemKind::Click => history
            .iter()
            .flat_map(|e| {
                let q = canonical_query(&e.query, opts.query_identity);
                e.clicks.iter().map(move |url| join_parts(&q, url)).collect::<Vec<_>>()
            })
            .collect(),
    }
}

/// Per-user item multisets for the given kind.
pub fn extract_items(
    log: &SearchLog,
    kind: ItemKind,
    opts: &ExtractOptions,
) -> BTreeMap<String, Vec<String>> {
    log.users()
        .map(|(user, history)| (user.to_string(), items_of_history(history, kind, opts)))
        .collect()
}

/// Map from item to the number of distinct users containing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub kind: ItemKind,
    counts: BTreeMap<String, u64>,
    pub domain_size_hint: Option<u64>,
}

impl Histogram {
    /// Build from per-user deduplicated item sets; zero counts never appear.
    pub fn from_user_items<'a, I, S>(kind: ItemKind, per_user: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = &'a String>,
    {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        for items in per_user {
            let distinct: BTreeSet<&String> = items.into_iter().collect();
            for item in distinct {
                *counts.entry(item.clone()).or_insert(0) += 1;
            }
        }
        Histogram { kind, counts, domain_size_hint: None }
    }

    pub fn from_counts(kind: ItemKind, counts: BTreeMap<String, u64>) -> Self {
        let counts = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        Histogram { kind, counts, domain_size_hint: None }
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn get(&self, item: &str) -> u64 {
        self.counts.get(item).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sum of all counts.
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(item, &c)| (item.as_str(), c))
    }

    /// Items by descending count, ties broken by item order; at most `j`.
    pub fn top_j(&self, j: usize) -> Vec<(&str, u64)> {
        let mut items: Vec<(&str, u64)> = self.iter().collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        items.truncate(j);
        items
    }

    /// Counts as `f64` weights, e.g. for cache planning.
    pub fn to_weights(&self) -> BTreeMap<String, f64> {
        self.counts.iter().map(|(item, &c)| (item.clone(), c as f64)).collect()
    }
}

/// Histogram of the full log: `c_k` = distinct users containing item `k`.
pub fn build_histogram(log: &SearchLog, kind: ItemKind, opts: &ExtractOptions) -> Histogram {
    let per_user = extract_items(log, kind, opts);
    Histogram::from_user_items(kind, per_user.values().map(|items| items.iter()))
}

/// Result of the per-user contribution cap: what each user contributed
/// and the histogram of those contributions.
#[derive(Debug, Clone)]
pub struct Selection {
    pub per_user: BTreeMap<String, BTreeSet<String>>,
    pub histogram: Histogram,
}

/// Cap each user at `m` distinct items, chosen uniformly at random from
/// their distinct items, and build the histogram of the selections.
///
/// The choice is keyed by `(seed, user)`, so it is deterministic and
/// unaffected by other users' histories.
pub fn select_per_user(
    log: &SearchLog,
    kind: ItemKind,
    m: u32,
    seed: u64,
    opts: &ExtractOptions,
) -> Selection {
    use rand::seq::IndexedRandom;
    assert!(m >= 1, "contribution bound m must be at least 1");
    let mut per_user: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (user, items) in extract_items(log, kind, opts) {
        let distinct: BTreeSet<String> = items.into_iter().collect();
        let selected: BTreeSet<String> = if distinct.len() <= m as usize {
            distinct
        } else {
            let pool: Vec<String> = distinct.into_iter().collect();
            let mut rng = keyed_stream(seed, "select", &user);
            pool.choose_multiple(&mut rng, m as usize).cloned().collect()
        };
        if !selected.is_empty() {
            per_user.insert(user, selected);
        }
    }
    let histogram = Histogram::from_user_items(kind, per_user.values().map(|s| s.iter()));
    Selection { per_user, histogram }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(user: &str, query: &str, time: i64, clicks: &[&str]) -> SearchEntry {
        SearchEntry {
            user_id: user.to_string(),
            query: normalize_query(query),
            time,
            clicks: clicks.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn normalization_lowercases_and_strips_punctuation() {
        assert_eq!(normalize_keyword("Foo!"), Some("foo".into()));
        assert_eq!(normalize_keyword("--"), None);
        assert_eq!(normalize_query("  New   York?  "), vec!["new", "york"]);
    }

    #[test]
    fn query_identity_modes() {
        let kws = normalize_query("b a b");
        assert_eq!(canonical_query(&kws, QueryIdentity::Sequence), "b a b");
        assert_eq!(canonical_query(&kws, QueryIdentity::Set), "a b");
    }

    #[test]
    fn sessions_split_on_idle_gap() {
        let h = vec![
            entry("u", "a", 0, &[]),
            entry("u", "b", 1800, &[]),
            entry("u", "c", 3601, &[]),
        ];
        let s = sessions(&h, 1800);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].len(), 2, "gap of exactly 1800 stays in the session");
        assert_eq!(s[1].len(), 1);
    }

    #[test]
    fn one_consecutive_pair() {
        let log = SearchLog::from_entries(vec![entry("u", "a b", 0, &[]), entry("u", "c", 60, &[])]);
        let items = extract_items(&log, ItemKind::QueryPair, &ExtractOptions::default());
        assert_eq!(items["u"], vec![join_parts("a b", "c")]);
    }

    #[test]
    fn single_query_has_no_pair() {
        let log = SearchLog::from_entries(vec![entry("u", "solo", 0, &[])]);
        let items = extract_items(&log, ItemKind::QueryPair, &ExtractOptions::default());
        assert!(items["u"].is_empty());
    }

    #[test]
    fn three_queries_in_one_session_make_two_pairs() {
        // Oracle: pairs enumerated by hand are (a,b) and (b,c).
        let log = SearchLog::from_entries(vec![
            entry("u", "a", 0, &[]),
            entry("u", "b", 10, &[]),
            entry("u", "c", 20, &[]),
        ]);
        let items = extract_items(&log, ItemKind::QueryPair, &ExtractOptions::default());
        assert_eq!(items["u"], vec![join_parts("a", "b"), join_parts("b", "c")]);
    }

    #[test]
    fn pair_count_is_sessions_minus_one_each() {
        let h = vec![
            entry("u", "a", 0, &[]),
            entry("u", "b", 10, &[]),
            entry("u", "c", 5000, &[]),
            entry("u", "d", 5010, &[]),
            entry("u", "e", 5020, &[]),
        ];
        let log = SearchLog::from_entries(h.clone());
        let items = extract_items(&log, ItemKind::QueryPair, &ExtractOptions::default());
        let expected: usize = sessions(&h, 1800).iter().map(|s| s.len() - 1).sum();
        assert_eq!(items["u"].len(), expected);
    }

    #[test]
    fn histogram_counts_users_not_occurrences() {
        let log = SearchLog::from_entries(vec![
            entry("u1", "foo", 0, &[]),
            entry("u1", "foo bar", 10, &[]),
            entry("u2", "foo", 0, &[]),
            entry("u2", "foo", 5, &[]),
        ]);
        let h = build_histogram(&log, ItemKind::Keyword, &ExtractOptions::default());
        assert_eq!(h.get("foo"), 2);
        assert_eq!(h.get("bar"), 1);
    }

    #[test]
    fn repeated_item_in_one_user_counts_once() {
        let entries: Vec<SearchEntry> = (0..5).map(|i| entry("u", "foo", i * 10, &[])).collect();
        let log = SearchLog::from_entries(entries);
        let h = build_histogram(&log, ItemKind::Keyword, &ExtractOptions::default());
        assert_eq!(h.get("foo"), 1);
    }

    #[test]
    fn click_items_pair_query_with_url() {
        let log = SearchLog::from_entries(vec![entry("u", "maps", 0, &["http://a", "http://b"])]);
        let items = extract_items(&log, ItemKind::Click, &ExtractOptions::default());
        assert_eq!(
            items["u"],
            vec![join_parts("maps", "http://a"), join_parts("maps", "http://b")]
        );
    }

    #[test]
    fn selection_keeps_everything_under_the_cap() {
        let log = SearchLog::from_entries(vec![entry("u", "a b c", 0, &[])]);
        let sel = select_per_user(&log, ItemKind::Keyword, 5, 1, &ExtractOptions::default());
        assert_eq!(sel.per_user["u"].len(), 3);
    }

    #[test]
    fn selection_caps_at_m() {
        let q = "k0 k1 k2 k3 k4 k5 k6 k7 k8 k9";
        let log = SearchLog::from_entries(vec![entry("u", q, 0, &[])]);
        let sel = select_per_user(&log, ItemKind::Keyword, 1, 1, &ExtractOptions::default());
        assert_eq!(sel.per_user["u"].len(), 1);
        assert_eq!(sel.histogram.total(), 1);
    }

    #[test]
    fn selection_is_deterministic_per_seed() {
        let q = "k0 k1 k2 k3 k4 k5 k6 k7 k8 k9";
        let log =
            SearchLog::from_entries(vec![entry("u", q, 0, &[]), entry("v", q, 0, &[])]);
        let opts = ExtractOptions::default();
        let a = select_per_user(&log, ItemKind::Keyword, 3, 9, &opts);
        let b = select_per_user(&log, ItemKind::Keyword, 3, 9, &opts);
        assert_eq!(a.histogram, b.histogram);
        assert_eq!(a.per_user, b.per_user);
        let c = select_per_user(&log, ItemKind::Keyword, 3, 10, &opts);
        assert!(a.per_user != c.per_user || a.histogram != c.histogram);
    }

    #[test]
    fn brute_force_membership_oracle_on_synthetic_log() {
        // Independent oracle: for each item, scan every user's raw
        // entries for containment, bypassing extract_items.
        let cfg = SynthConfig { users: 100, vocab: 50, ..SynthConfig::default() };
        let log = generate_synthetic(&cfg, 33).unwrap();
        let h = build_histogram(&log, ItemKind::Keyword, &ExtractOptions::default());
        assert!(!h.is_empty());
        for (kw, count) in h.iter() {
            let brute = log
                .users()
                .filter(|(_, history)| {
                    history.iter().any(|e| e.query.iter().any(|k| k == kw))
                })
                .count() as u64;
            assert_eq!(count, brute, "keyword {kw}");
        }
        let total_users_with_any = log.user_count();
        assert!(h.iter().all(|(_, c)| c >= 1 && c <= total_users_with_any));
    }
}
