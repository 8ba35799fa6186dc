//! Experiment sweeps: the statistics tables and the two application
//! studies, emitted as plot-ready CSV.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;

use zealous::anonymity::k_query_anonymize;
use zealous::apps::{
    evaluate_cache, evaluate_substitutions, greedy_cache, GreedyStop, PostingListModel, Weights,
    POSTING_LIST_CAP,
};
use zealous::export::{
    atomic_write, read_posting_lengths, write_app_rows, write_metric_rows, AppRow, MetricRow,
    PlanJson,
};
use zealous::plan::plan_probabilistic;
use zealous::sanitizer::sanitize;
use zealous::searchlog::{
    build_histogram, generate_synthetic, ingest_tsv, CountSpec, ExtractOptions, Histogram,
    ItemKind, LogFormat, SearchLog, SynthConfig,
};
use zealous::utility::{count_distance, top_j_coverage, DistanceMetric};

use crate::config::{resolve, KvConfig};

#[derive(Args, Clone)]
pub struct SourceArgs {
    /// TSV search log to evaluate. Omit to generate a synthetic log.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "native")]
    format: LogFormat,
    #[arg(long)]
    users: Option<u64>,
    #[arg(long)]
    vocab: Option<u64>,
    #[arg(long)]
    zipf_exponent: Option<f64>,
    #[arg(long)]
    queries_per_user: Option<CountSpec>,
    #[arg(long)]
    keywords_per_query: Option<CountSpec>,
    #[arg(long)]
    click_probability: Option<f64>,
}

impl SourceArgs {
    fn load(&self, cfg: &KvConfig, seed: u64) -> Result<SearchLog> {
        let input = self.input.clone().or(cfg.get::<PathBuf>("input")?);
        if let Some(path) = input {
            let format = cfg.get::<LogFormat>("format")?.map_or(self.format, |c| {
                if self.input.is_some() { self.format } else { c }
            });
            return Ok(ingest_tsv(&path, format)?.log);
        }
        let defaults = SynthConfig::default();
        let synth = SynthConfig {
            users: resolve(self.users, cfg.get("users")?, 2000),
            vocab: resolve(self.vocab, cfg.get("vocab")?, defaults.vocab),
            zipf_exponent: resolve(
                self.zipf_exponent,
                cfg.get("zipf-exponent")?,
                defaults.zipf_exponent,
            ),
            queries_per_user: resolve(
                self.queries_per_user,
                cfg.get("queries-per-user")?,
                CountSpec::Uniform(1, 8),
            ),
            keywords_per_query: resolve(
                self.keywords_per_query,
                cfg.get("keywords-per-query")?,
                CountSpec::Uniform(1, 2),
            ),
            click_probability: resolve(
                self.click_probability,
                cfg.get("click-probability")?,
                defaults.click_probability,
            ),
            ..defaults
        };
        Ok(generate_synthetic(&synth, seed)?)
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<KvConfig> {
    match path {
        Some(p) => KvConfig::load(p),
        None => Ok(KvConfig::default()),
    }
}

fn config_header(command: &str, cfg: &KvConfig, seed: u64, extra: serde_json::Value) -> String {
    format!(
        "# {}\n",
        serde_json::json!({
            "command": command,
            "seed": seed,
            "config_file": cfg.echo(),
            "parameters": extra,
        })
    )
}

#[derive(Args)]
pub struct EvalArgs {
    /// Key-value config file; flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
    /// Item kinds to evaluate.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<ItemKind>>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Anonymity thresholds for the baseline rows.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<u32>>,
    /// Contribution bounds to sweep.
    #[arg(long, value_delimiter = ',')]
    ms: Option<Vec<u32>>,
    /// Top-j depths for precision and coverage.
    #[arg(long, value_delimiter = ',')]
    js: Option<Vec<usize>>,
    #[arg(long)]
    delta: Option<f64>,
    /// Also emit rows comparing the truth against itself (all zeros).
    #[arg(long)]
    identity_check: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

fn distance_rows(
    base: &MetricRow,
    truth: &Histogram,
    published: &Weights,
    js: &[usize],
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    let mut push = |metric: &str, j: Option<usize>, value: f64| {
        rows.push(MetricRow { metric: metric.into(), j, value, ..base.clone() });
    };
    push("distinct_items", None, published.len() as f64);
    push("total_items", None, published.values().sum());
    push(
        "avg_count_diff",
        None,
        count_distance(truth, published, DistanceMetric::AvgCountDiff, None)?,
    );
    let keys: HashSet<String> = published.keys().cloned().collect();
    for &j in js {
        push(
            "avg_l1",
            Some(j),
            count_distance(truth, published, DistanceMetric::AvgL1, Some(j))?,
        );
        push(
            "kl_divergence",
            Some(j),
            count_distance(truth, published, DistanceMetric::KlDivergence, Some(j))?,
        );
        push("coverage", Some(j), top_j_coverage(truth, &keys, j)?);
    }
    Ok(rows)
}

pub fn run_eval(args: EvalArgs, seed: u64) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let log = args.source.load(&cfg, seed)?;
    let kinds = resolve(args.kinds, cfg.get_list("kinds")?, ItemKind::ALL.to_vec());
    let epsilons = resolve(args.epsilons, cfg.get_list("epsilons")?, vec![1.0, 2.0, 5.0]);
    let ks = resolve(args.ks, cfg.get_list("ks")?, vec![10, 60]);
    let ms = resolve(args.ms, cfg.get_list("ms")?, vec![1]);
    let js = resolve(args.js, cfg.get_list("js")?, vec![10, 100]);
    let delta = resolve(args.delta, cfg.get("delta")?, 0.001);
    for (name, empty) in [
        ("kinds", kinds.is_empty()),
        ("epsilons", epsilons.is_empty()),
        ("ks", ks.is_empty()),
        ("ms", ms.is_empty()),
        ("js", js.is_empty()),
    ] {
        anyhow::ensure!(!empty, "sweep list `{name}` must not be empty");
    }
    let opts = ExtractOptions::default();

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;

    let truth: BTreeMap<ItemKind, Histogram> =
        kinds.iter().map(|&k| (k, build_histogram(&log, k, &opts))).collect();

    // Released rows, parallel over sweep points.
    let mut points: Vec<(ItemKind, u32, f64)> = Vec::new();
    for &kind in &kinds {
        for &m in &ms {
            for &e in &epsilons {
                points.push((kind, m, e));
            }
        }
    }
    let mut plans: Vec<PlanJson> = Vec::new();
    for &m in &ms {
        for &e in &epsilons {
            plans.push(PlanJson::from(&plan_probabilistic(e, delta, m, log.user_count(), None)?));
        }
    }
    let released: Result<Vec<Vec<MetricRow>>> = points
        .par_iter()
        .map(|&(kind, m, epsilon)| {
            let plan = plan_probabilistic(epsilon, delta, m, log.user_count(), None)?;
            let out = sanitize(&log, kind, &plan, seed, &opts)?;
            let base = MetricRow {
                kind: kind.to_string(),
                algorithm: "zealous".into(),
                m: Some(m),
                epsilon: Some(epsilon),
                k: None,
                j: None,
                metric: String::new(),
                value: 0.0,
            };
            Ok(distance_rows(&base, &truth[&kind], &out.entries, &js)?)
        })
        .collect();
    let mut rows: Vec<MetricRow> = released?.into_iter().flatten().collect();

    // Baseline rows: one anonymization per k, histograms per kind.
    for &k in &ks {
        let anon = k_query_anonymize(&log, k, seed, &opts);
        for &kind in kinds.iter().filter(|&&k| k != ItemKind::Click) {
            let hist = zealous::anonymity::histograms_from_anonymous(&anon, kind, &opts)
                .expect("click kinds are filtered out");
            let base = MetricRow {
                kind: kind.to_string(),
                algorithm: "k-anonymity".into(),
                m: None,
                epsilon: None,
                k: Some(k),
                j: None,
                metric: String::new(),
                value: 0.0,
            };
            rows.extend(distance_rows(&base, &truth[&kind], &hist.to_weights(), &js)?);
        }
    }

    if args.identity_check {
        for &kind in &kinds {
            let base = MetricRow {
                kind: kind.to_string(),
                algorithm: "identity".into(),
                m: None,
                epsilon: None,
                k: None,
                j: None,
                metric: String::new(),
                value: 0.0,
            };
            rows.extend(distance_rows(&base, &truth[&kind], &truth[&kind].to_weights(), &js)?);
        }
    }

    let header = config_header(
        "eval",
        &cfg,
        seed,
        serde_json::json!({
            "kinds": kinds.iter().map(|k| k.to_string()).collect::<Vec<_>>(),
            "epsilons": epsilons, "ks": ks, "ms": ms, "js": js, "delta": delta,
            "users": log.user_count(),
        }),
    );
    let mut buf = header.into_bytes();
    write_metric_rows(&rows, &mut buf)?;
    atomic_write(args.out_dir.join("metrics.csv"), &buf)?;
    atomic_write(
        args.out_dir.join("plans.json"),
        serde_json::to_string_pretty(&plans)?.as_bytes(),
    )?;
    println!(
        "wrote {} metric rows to {}",
        rows.len(),
        args.out_dir.join("metrics.csv").display()
    );
    Ok(())
}

#[derive(Args)]
pub struct CacheAppArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
    /// Contribution bound for the released workload.
    #[arg(long, short)]
    m: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<u32>>,
    #[arg(long)]
    delta: Option<f64>,
    /// Cache budget in bytes.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    bytes_per_posting: Option<u64>,
    /// Posting lengths as `keyword,length` CSV; synthesized when absent.
    #[arg(long)]
    postings: Option<PathBuf>,
    /// Rank exponent of the synthetic posting-length model.
    #[arg(long)]
    postings_exponent: Option<f64>,
    /// Keep packing past the first list that does not fit.
    #[arg(long)]
    skip_ahead: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Synthetic posting lengths: popular keywords appear in many
/// documents, so lengths decay with the workload rank.
fn synthetic_postings(truth: &Histogram, exponent: f64) -> BTreeMap<String, u64> {
    truth
        .top_j(truth.len())
        .iter()
        .enumerate()
        .map(|(rank, (kw, _))| {
            let len = (POSTING_LIST_CAP as f64 / ((rank + 1) as f64).powf(exponent)).round();
            (kw.to_string(), (len as u64).max(1))
        })
        .collect()
}

pub fn run_cache_app(args: CacheAppArgs, seed: u64) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let log = args.source.load(&cfg, seed)?;
    let m = resolve(args.m, cfg.get("m")?, 6);
    let epsilons = resolve(args.epsilons, cfg.get_list("epsilons")?, vec![1.0, 2.0, 5.0, 10.0]);
    let ks = resolve(args.ks, cfg.get_list("ks")?, vec![10, 60]);
    let delta = resolve(args.delta, cfg.get("delta")?, 0.001);
    let bytes_per_posting = resolve(args.bytes_per_posting, cfg.get("bytes-per-posting")?, 8);
    let budget = resolve(args.budget, cfg.get("budget")?, 1 << 30);
    let stop = if args.skip_ahead { GreedyStop::SkipAhead } else { GreedyStop::FirstMisfit };
    let opts = ExtractOptions::default();

    let truth = build_histogram(&log, ItemKind::Keyword, &opts);
    let lengths = match &args.postings {
        Some(path) => read_posting_lengths(std::fs::File::open(path)?)?,
        None => synthetic_postings(
            &truth,
            resolve(args.postings_exponent, cfg.get("postings-exponent")?, 1.0),
        ),
    };
    let postings = PostingListModel::new(lengths, bytes_per_posting, budget)?;
    let truth_weights = truth.to_weights();

    let mut rows = Vec::new();
    let mut push = |algorithm: &str, parameter: String, plan: &zealous::apps::CachePlan, hit: f64| {
        rows.push(AppRow {
            algorithm: algorithm.into(),
            parameter: parameter.clone(),
            metric: "hit_probability".into(),
            value: hit,
        });
        rows.push(AppRow {
            algorithm: algorithm.into(),
            parameter,
            metric: "cached_keywords".into(),
            value: plan.cached.len() as f64,
        });
    };

    let original = greedy_cache(&truth_weights, &postings, stop)?;
    push("original", "-".into(), &original, original.hit_probability);

    for &epsilon in &epsilons {
        let plan = plan_probabilistic(epsilon, delta, m, log.user_count(), None)?;
        let released = sanitize(&log, ItemKind::Keyword, &plan, seed, &opts)?;
        let cache = greedy_cache(&released.entries, &postings, stop).or_else(|e| match e {
            zealous::apps::AppsError::EmptyWorkload => Ok(zealous::apps::CachePlan {
                cached: Default::default(),
                bytes_used: 0,
                hit_probability: 0.0,
            }),
            other => Err(other),
        })?;
        let hit = evaluate_cache(&truth_weights, &released.entries, &postings, stop)?;
        push("zealous", format!("epsilon={epsilon} m={m}"), &cache, hit);
    }

    for &k in &ks {
        let anon = k_query_anonymize(&log, k, seed, &opts);
        let hist = zealous::anonymity::histograms_from_anonymous(&anon, ItemKind::Keyword, &opts)
            .expect("keyword histograms are always available");
        let weights = hist.to_weights();
        let cache = greedy_cache(&weights, &postings, stop)?;
        let hit = evaluate_cache(&truth_weights, &weights, &postings, stop)?;
        push("k-anonymity", format!("k={k}"), &cache, hit);
    }

    let header = config_header(
        "cache-app",
        &cfg,
        seed,
        serde_json::json!({
            "m": m, "epsilons": epsilons, "ks": ks, "delta": delta,
            "budget": budget, "bytes_per_posting": bytes_per_posting,
            "users": log.user_count(),
        }),
    );
    let mut buf = header.into_bytes();
    write_app_rows(&rows, &mut buf)?;
    atomic_write(&args.out, &buf)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct SubstAppArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, short)]
    m: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    js: Option<Vec<usize>>,
    /// Evaluate substitutions for this many of the truth's most
    /// frequent queries.
    #[arg(long)]
    eval_queries: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

pub fn run_subst_app(args: SubstAppArgs, seed: u64) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let log = args.source.load(&cfg, seed)?;
    let m = resolve(args.m, cfg.get("m")?, 1);
    let epsilons = resolve(args.epsilons, cfg.get_list("epsilons")?, vec![1.0, 2.0, 5.0]);
    let ks = resolve(args.ks, cfg.get_list("ks")?, vec![10, 60]);
    let js = resolve(args.js, cfg.get_list("js")?, vec![2, 5]);
    let top_queries = resolve(args.eval_queries, cfg.get("eval-queries")?, 50);
    let delta = resolve(args.delta, cfg.get("delta")?, 0.001);
    let opts = ExtractOptions::default();

    let truth_pairs = build_histogram(&log, ItemKind::QueryPair, &opts).to_weights();
    let queries = build_histogram(&log, ItemKind::Query, &opts);
    let eval_queries: Vec<String> =
        queries.top_j(top_queries).iter().map(|(q, _)| q.to_string()).collect();

    let mut rows = Vec::new();
    let mut emit = |algorithm: &str, parameter: String, eval: &zealous::apps::SubstitutionEval| {
        let mut push = |metric: &str, value: f64| {
            rows.push(AppRow {
                algorithm: algorithm.into(),
                parameter: parameter.clone(),
                metric: metric.into(),
                value,
            });
        };
        push("coverage", eval.coverage);
        if let Some(ranking) = &eval.ranking {
            push("precision", ranking.precision);
            push("recall", ranking.recall);
            push("map", ranking.map);
            push("ndcg", ranking.ndcg);
        }
    };

    for &j in &js {
        let ideal = evaluate_substitutions(&truth_pairs, &truth_pairs, &eval_queries, j)?;
        emit("original", format!("j={j}"), &ideal);
        for &epsilon in &epsilons {
            let plan = plan_probabilistic(epsilon, delta, m, log.user_count(), None)?;
            let released = sanitize(&log, ItemKind::QueryPair, &plan, seed, &opts)?;
            let eval = evaluate_substitutions(&truth_pairs, &released.entries, &eval_queries, j)?;
            emit("zealous", format!("epsilon={epsilon} m={m} j={j}"), &eval);
        }
        for &k in &ks {
            let anon = k_query_anonymize(&log, k, seed, &opts);
            let hist =
                zealous::anonymity::histograms_from_anonymous(&anon, ItemKind::QueryPair, &opts)
                    .expect("query pairs are always available");
            let eval =
                evaluate_substitutions(&truth_pairs, &hist.to_weights(), &eval_queries, j)?;
            emit("k-anonymity", format!("k={k} j={j}"), &eval);
        }
    }

    let header = config_header(
        "subst-app",
        &cfg,
        seed,
        serde_json::json!({
            "m": m, "epsilons": epsilons, "ks": ks, "js": js,
            "eval_queries": top_queries, "delta": delta, "users": log.user_count(),
        }),
    );
    let mut buf = header.into_bytes();
    write_app_rows(&rows, &mut buf)?;
    atomic_write(&args.out, &buf)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_postings_decay_with_rank() {
        let hist = Histogram::from_counts(
            ItemKind::Keyword,
            [("top".to_string(), 100u64), ("mid".to_string(), 10), ("rare".to_string(), 1)]
                .into_iter()
                .collect(),
        );
        let lengths = synthetic_postings(&hist, 1.0);
        assert_eq!(lengths["top"], POSTING_LIST_CAP);
        assert!(lengths["mid"] < lengths["top"]);
        assert!(lengths["rare"] >= 1);
    }

}
