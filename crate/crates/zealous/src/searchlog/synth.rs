//! Synthetic search logs with Zipf-distributed keyword popularity, for
//! desk-scale experiments.

use rand::Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::keyed_stream;

use super::{SearchEntry, SearchLog};

/// A small count distribution: either a constant or an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CountSpec {
    Fixed(u32),
    Uniform(u32, u32),
}

impl CountSpec {
    fn validate(self) -> Result<(), SynthError> {
        let ok = match self {
            CountSpec::Fixed(n) => n >= 1,
            CountSpec::Uniform(lo, hi) => lo >= 1 && lo <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(SynthError::BadCountSpec(self))
        }
    }

    fn sample<R: Rng>(self, rng: &mut R) -> u32 {
        match self {
            CountSpec::Fixed(n) => n,
            CountSpec::Uniform(lo, hi) => rng.random_range(lo..=hi),
        }
    }
}

impl std::str::FromStr for CountSpec {
    type Err = String;
    /// `"5"` is a constant; `"2..8"` is uniform over 2..=8.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some((lo, hi)) = s.split_once("..") {
            let lo = lo.trim().parse().map_err(|_| format!("bad range start `{lo}`"))?;
            let hi = hi.trim().parse().map_err(|_| format!("bad range end `{hi}`"))?;
            Ok(CountSpec::Uniform(lo, hi))
        } else {
            let n = s.trim().parse().map_err(|_| format!("bad count `{s}`"))?;
            Ok(CountSpec::Fixed(n))
        }
    }
}

impl std::fmt::Display for CountSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CountSpec::Fixed(n) => write!(f, "{n}"),
            CountSpec::Uniform(lo, hi) => write!(f, "{lo}..{hi}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: u64,
    /// Vocabulary size; keyword ranks are drawn Zipf over `1..=vocab`.
    pub vocab: u64,
    pub zipf_exponent: f64,
    pub queries_per_user: CountSpec,
    pub keywords_per_query: CountSpec,
    /// Probability that an entry records one clicked url.
    pub click_probability: f64,
    /// Probability that consecutive entries are separated by more than
    /// `session_gap` seconds.
    pub session_break_probability: f64,
    pub session_gap: i64,
    /// Size of the url universe clicks are drawn from (also Zipf).
    pub doc_corpus: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 1000,
            vocab: 1000,
            zipf_exponent: 1.0,
            queries_per_user: CountSpec::Uniform(2, 8),
            keywords_per_query: CountSpec::Uniform(1, 3),
            click_probability: 0.5,
            session_break_probability: 0.2,
            session_gap: 1800,
            doc_corpus: 10_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("users and vocab must both be at least 1")]
    EmptyDomain,
    #[error("zipf exponent must be positive and finite, got {0}")]
    BadExponent(f64),
    #[error("invalid count spec {0:?}")]
    BadCountSpec(CountSpec),
    #[error("probability out of [0, 1]: {0}")]
    BadProbability(f64),
}

fn pad_width(n: u64) -> usize {
    n.max(1).to_string().len()
}

/// Generate a reproducible log. Per-user randomness is keyed by
/// `(seed, user index)`, so two runs with the same seed produce
/// byte-identical TSV exports.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<SearchLog, SynthError> {
    if cfg.users < 1 || cfg.vocab < 1 {
        return Err(SynthError::EmptyDomain);
    }
    if !(cfg.zipf_exponent > 0.0) || !cfg.zipf_exponent.is_finite() {
        return Err(SynthError::BadExponent(cfg.zipf_exponent));
    }
    cfg.queries_per_user.validate()?;
    cfg.keywords_per_query.validate()?;
    for p in [cfg.click_probability, cfg.session_break_probability] {
        if !(0.0..=1.0).contains(&p) {
            return Err(SynthError::BadProbability(p));
        }
    }

    let kw_dist = Zipf::new(cfg.vocab as f64, cfg.zipf_exponent)
        .map_err(|_| SynthError::BadExponent(cfg.zipf_exponent))?;
    let doc_dist = Zipf::new(cfg.doc_corpus.max(1) as f64, cfg.zipf_exponent)
        .map_err(|_| SynthError::BadExponent(cfg.zipf_exponent))?;
    let kw_width = pad_width(cfg.vocab);
    let doc_width = pad_width(cfg.doc_corpus);
    let user_width = pad_width(cfg.users);

    let mut entries = Vec::new();
    for u in 0..cfg.users {
        let mut rng = keyed_stream(seed, "synth-user", &u.to_string());
        let user_id = format!("u{u:0user_width$}");
        let mut t: i64 = 1_700_000_000 + rng.random_range(0..86_400);
        for _ in 0..cfg.queries_per_user.sample(&mut rng) {
            let n_kw = cfg.keywords_per_query.sample(&mut rng);
            let query: Vec<String> = (0..n_kw)
                .map(|_| {
                    let rank = kw_dist.sample(&mut rng) as u64;
                    format!("kw{rank:0kw_width$}")
                })
                .collect();
            let clicks = if rng.random::<f64>() < cfg.click_probability {
                let doc = doc_dist.sample(&mut rng) as u64;
                vec![format!("https://docs.example/d{doc:0doc_width$}")]
            } else {
                Vec::new()
            };
            entries.push(SearchEntry { user_id: user_id.clone(), query, time: t, clicks });
            t += if rng.random::<f64>() < cfg.session_break_probability {
                cfg.session_gap + 1 + rng.random_range(0..600)
            } else {
                rng.random_range(5..300)
            };
        }
    }
    Ok(SearchLog::from_entries(entries))
}
