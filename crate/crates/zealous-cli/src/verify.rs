//! The `verify` subcommand: privacy checks that must all pass, with a
//! nonzero exit code on any violation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use zealous::analysis::{
    check_implication, counterexample_a_hat, release_set_probability, verify_prob_dp,
    OracleInstance,
};
use zealous::export::atomic_write;
use zealous::noise::keyed_stream;
use zealous::plan::{plan_probabilistic, ZealousPlan};
use zealous::sanitizer::sanitize;
use zealous::searchlog::{
    build_histogram, normalize_query, ExtractOptions, ItemKind, SearchEntry, SearchLog,
};

#[derive(Args)]
pub struct VerifyArgs {
    /// Number of randomized small instances.
    #[arg(long, default_value_t = 20)]
    instances: u64,
    /// Output samples per instance for the density-ratio obligation.
    #[arg(long, default_value_t = 10_000)]
    sample_points: usize,
    /// Sanitizer runs for the Monte-Carlo agreement check.
    #[arg(long, default_value_t = 20_000)]
    mc_runs: u64,
    /// Write the verdict report JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn entry(user: &str, text: &str, time: i64) -> SearchEntry {
    SearchEntry {
        user_id: user.to_string(),
        query: normalize_query(text),
        time,
        clicks: Vec::new(),
    }
}

fn log_from_sets(sets: &[BTreeSet<usize>]) -> SearchLog {
    let mut entries = Vec::new();
    for (u, items) in sets.iter().enumerate() {
        for (i, item) in items.iter().enumerate() {
            entries.push(entry(&format!("u{u}"), &format!("item{item}"), i as i64 * 10));
        }
    }
    SearchLog::from_entries(entries)
}

fn random_instance(rng: &mut ChaCha12Rng) -> OracleInstance {
    loop {
        let m = rng.random_range(1..=3u32);
        let users = rng.random_range(2..=6usize);
        let domain_n = rng.random_range((m as usize + 1).max(4)..=8);
        let draw_set = |max_items: u32, rng: &mut ChaCha12Rng| -> BTreeSet<usize> {
            let k = rng.random_range(0..=max_items) as usize;
            let mut items = BTreeSet::new();
            while items.len() < k {
                items.insert(rng.random_range(0..domain_n));
            }
            items
        };
        let mut sets = Vec::new();
        for _ in 0..users {
            let mut s = draw_set(m, rng);
            while s.is_empty() {
                s = draw_set(m, rng);
            }
            sets.push(s);
        }
        let log = log_from_sets(&sets);
        let replacement = draw_set(m, rng);
        if replacement == sets[0] {
            continue;
        }
        let neighbor = log.with_history(
            "u0",
            replacement
                .iter()
                .enumerate()
                .map(|(i, item)| entry("u0", &format!("item{item}"), i as i64 * 10))
                .collect(),
        );
        let epsilon = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        let delta = [0.01, 0.05][rng.random_range(0..2)];
        let tau = [Some(1.0), Some(2.0), None][rng.random_range(0..3)];
        let plan = plan_probabilistic(epsilon, delta, m, users as u64, tau).unwrap();
        let domain = (0..domain_n).map(|i| format!("item{i}")).collect();
        return OracleInstance::new(
            domain,
            log,
            neighbor,
            plan,
            ItemKind::Keyword,
            ExtractOptions::default(),
        )
        .expect("generated instance must validate");
    }
}

/// The bundled verification fixture: four items at counts 5, 6, 7, 2
/// under (m = 2, lambda = 2, tau = 2, tau' = 6).
fn fixture() -> (SearchLog, ZealousPlan) {
    let mut sets: Vec<BTreeSet<usize>> = Vec::new();
    for _ in 0..5 {
        sets.push([0, 1].into());
    }
    sets.push([1, 2].into());
    for _ in 0..2 {
        sets.push([2, 3].into());
    }
    for _ in 0..4 {
        sets.push([2].into());
    }
    let log = log_from_sets(&sets);
    let plan = ZealousPlan::from_raw(2, 2.0, 2.0, 6.0, log.user_count()).unwrap();
    (log, plan)
}

pub fn run(args: VerifyArgs, seed: u64) -> Result<()> {
    let mut violations: Vec<String> = Vec::new();
    let mut report = serde_json::Map::new();
    let opts = ExtractOptions::default();

    // 1. Random small instances: both prob-DP obligations plus the
    //    implication to indistinguishability.
    let mut rng = keyed_stream(seed, "verify", "instances");
    let mut instance_reports = Vec::new();
    for i in 0..args.instances {
        let instance = random_instance(&mut rng);
        let prob = verify_prob_dp(&instance, args.sample_points, seed ^ (i + 1));
        let implication = check_implication(&instance, args.sample_points / 4, seed ^ (i + 101));
        if !prob.pass {
            violations.push(format!("instance {i}: probabilistic-privacy obligations failed"));
        }
        if !implication.pass {
            violations.push(format!("instance {i}: implication check failed"));
        }
        instance_reports.push(serde_json::json!({
            "index": i,
            "prob_dp": prob,
            "implication": implication,
        }));
    }
    report.insert("instances".into(), serde_json::Value::Array(instance_reports));

    // 2. A deliberately broken plan must be caught.
    {
        let log = log_from_sets(&[[0].into(), [0].into(), [1].into(), [1].into()]);
        let neighbor = log.with_history("u0", vec![entry("u0", "item1", 0)]);
        let honest = plan_probabilistic(1.0, 0.05, 1, 4, Some(2.0)).unwrap();
        let mut broken = honest.clone();
        broken.tau_prime = broken.tau + (honest.tau_prime - honest.tau) / 2.0;
        let instance = OracleInstance::new(
            vec!["item0".into(), "item1".into()],
            log,
            neighbor,
            broken,
            ItemKind::Keyword,
            opts,
        )
        .unwrap();
        let prob = verify_prob_dp(&instance, 1000, seed ^ 0xbad);
        if prob.obligation_a.pass {
            violations.push("broken plan slipped through obligation (a)".into());
        }
        report.insert("broken_plan_caught".into(), serde_json::json!(!prob.obligation_a.pass));
    }

    // 3. Monte-Carlo agreement between the sanitizer and the exact
    //    release-set law on the bundled fixture.
    {
        let (log, plan) = fixture();
        let hist = build_histogram(&log, ItemKind::Keyword, &opts);
        let mut frequency: BTreeMap<Vec<String>, u64> = BTreeMap::new();
        for run in 0..args.mc_runs {
            let out = sanitize(&log, ItemKind::Keyword, &plan, seed ^ (run + 7), &opts).unwrap();
            *frequency.entry(out.entries.keys().cloned().collect()).or_insert(0) += 1;
        }
        let items = ["item0", "item1", "item2", "item3"];
        let mut worst_z = 0.0f64;
        for mask in 0u32..16 {
            let subset: BTreeSet<String> = items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, s)| s.to_string())
                .collect();
            let p = release_set_probability(&hist, &plan, &subset);
            let observed = frequency
                .get(&subset.iter().cloned().collect::<Vec<_>>())
                .copied()
                .unwrap_or(0) as f64
                / args.mc_runs as f64;
            let sigma = (p * (1.0 - p) / args.mc_runs as f64).sqrt();
            let z = (observed - p).abs() / sigma.max(1e-12);
            worst_z = worst_z.max(z);
            if z > 3.0 {
                violations
                    .push(format!("release-set {subset:?}: deviation {z:.2} sigma from the law"));
            }
        }
        report.insert("monte_carlo_worst_sigma".into(), serde_json::json!(worst_z));
    }

    // 4. The resampling counterexample separates the two definitions.
    {
        let domain: Vec<String> = (0..11).map(|i| format!("h{i}")).collect();
        let log = SearchLog::from_entries(vec![entry("u0", "h0", 0), entry("u1", "h3", 0)]);
        let a_hat = counterexample_a_hat(&domain, &log, seed)?;
        if (a_hat.max_event_gap - 0.1).abs() > 1e-9 {
            violations.push("counterexample event gap is not 1/(|D|-1)".into());
        }
        if a_hat.witness.prob_under_neighbor != 0.0 || a_hat.witness.prob_under_log <= 0.0 {
            violations.push("counterexample breach witness malformed".into());
        }
        report.insert("counterexample".into(), serde_json::to_value(&a_hat)?);
    }

    report.insert("violations".into(), serde_json::json!(violations));
    report.insert("pass".into(), serde_json::json!(violations.is_empty()));
    let rendered = serde_json::to_string_pretty(&serde_json::Value::Object(report))?;
    println!("{rendered}");
    if let Some(path) = &args.json {
        atomic_write(path, rendered.as_bytes())?;
    }
    if !violations.is_empty() {
        bail!("verification failed: {}", violations.join("; "));
    }
    Ok(())
}
