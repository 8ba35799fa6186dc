//! Command-line surface: ingest and generate logs, plan release
//! parameters, sanitize and anonymize, verify guarantees, and run the
//! evaluation sweeps.

mod config;
mod experiments;
mod verify;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use zealous::export;
use zealous::plan::{
    achieved_delta, achieved_delta_prime, plan_indistinguishable, plan_probabilistic,
    tau_prime_for, ZealousPlan,
};
use zealous::sanitizer::{publish_clicks, sanitize};
use zealous::searchlog::{
    generate_synthetic, ingest_tsv, CountSpec, ExtractOptions, ItemKind, LogFormat, SearchLog,
    SynthConfig,
};

#[derive(Parser)]
#[command(
    name = "zealous",
    version,
    about = "Privacy-preserving publication of frequent search-log items"
)]
struct Cli {
    /// Master seed. Overrides the ZEALOUS_SEED environment variable;
    /// defaults to 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a TSV search log and report ingest statistics.
    Ingest(IngestArgs),
    /// Generate a reproducible synthetic search log.
    Generate(GenerateArgs),
    /// Compute release parameters and achieved guarantees.
    Plan(PlanArgs),
    /// Run the two-threshold release on a log.
    Sanitize(SanitizeArgs),
    /// Produce the k-query-anonymous baseline of a log.
    Anonymize(AnonymizeArgs),
    /// Verify the privacy guarantees numerically on small instances.
    Verify(verify::VerifyArgs),
    /// Sweep privacy parameters and emit utility metrics as CSV.
    Eval(experiments::EvalArgs),
    /// Index-caching application study.
    CacheApp(experiments::CacheAppArgs),
    /// Query-substitution application study.
    SubstApp(experiments::SubstAppArgs),
}

fn resolve_seed(cli_seed: Option<u64>) -> u64 {
    cli_seed
        .or_else(|| std::env::var("ZEALOUS_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0)
}

fn main() -> Result<()> {
    // Die quietly when a pipe reader (head, less) closes early.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let seed = resolve_seed(cli.seed);
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Generate(args) => cmd_generate(args, seed),
        Command::Plan(args) => cmd_plan(args),
        Command::Sanitize(args) => cmd_sanitize(args, seed),
        Command::Anonymize(args) => cmd_anonymize(args, seed),
        Command::Verify(args) => verify::run(args, seed),
        Command::Eval(args) => experiments::run_eval(args, seed),
        Command::CacheApp(args) => experiments::run_cache_app(args, seed),
        Command::SubstApp(args) => experiments::run_subst_app(args, seed),
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// Input layout: `native` (user, query, seconds, clicks) or `aol`.
    #[arg(long, default_value = "native")]
    format: LogFormat,
    /// Re-export the parsed log as native TSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a histogram of this item kind.
    #[arg(long)]
    kind: Option<ItemKind>,
    /// Where to write the histogram (JSON lines; `.csv` writes CSV).
    #[arg(long)]
    histogram: Option<PathBuf>,
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let ingested = ingest_tsv(&args.input, args.format)?;
    println!("{}", serde_json::to_string_pretty(&ingested.stats)?);
    if let Some(out) = &args.out {
        export::atomic_write(out, ingested.log.to_tsv().as_bytes())?;
    }
    if let Some(path) = &args.histogram {
        let kind = args.kind.context("--histogram requires --kind")?;
        let hist =
            zealous::searchlog::build_histogram(&ingested.log, kind, &ExtractOptions::default());
        let mut buf = Vec::new();
        if path.extension().is_some_and(|e| e == "csv") {
            export::write_histogram_csv(&hist, &mut buf)?;
        } else {
            export::write_histogram_jsonl(&hist, &mut buf)?;
        }
        export::atomic_write(path, &buf)?;
    }
    Ok(())
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    users: u64,
    #[arg(long, default_value_t = 1000)]
    vocab: u64,
    #[arg(long, default_value_t = 1.0)]
    zipf_exponent: f64,
    /// Count spec: a constant like `5` or a range like `2..8`.
    #[arg(long, default_value = "2..8")]
    queries_per_user: CountSpec,
    #[arg(long, default_value = "1..3")]
    keywords_per_query: CountSpec,
    #[arg(long, default_value_t = 0.5)]
    click_probability: f64,
    #[arg(long, default_value_t = 0.2)]
    session_break_probability: f64,
    #[arg(long, default_value_t = 1800)]
    session_gap: i64,
    #[arg(long, default_value_t = 10_000)]
    doc_corpus: u64,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_generate(args: GenerateArgs, seed: u64) -> Result<()> {
    let cfg = SynthConfig {
        users: args.users,
        vocab: args.vocab,
        zipf_exponent: args.zipf_exponent,
        queries_per_user: args.queries_per_user,
        keywords_per_query: args.keywords_per_query,
        click_probability: args.click_probability,
        session_break_probability: args.session_break_probability,
        session_gap: args.session_gap,
        doc_corpus: args.doc_corpus,
    };
    let log = generate_synthetic(&cfg, seed)?;
    export::atomic_write(&args.out, log.to_tsv().as_bytes())?;
    println!(
        "{}",
        serde_json::json!({
            "users": log.user_count(),
            "entries": log.entry_count(),
            "seed": seed,
            "config": cfg,
            "out": args.out,
        })
    );
    Ok(())
}

#[derive(Args)]
struct PlanArgs {
    /// Probabilistic-privacy target epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Probabilistic-privacy target delta.
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    /// Indistinguishability target epsilon'.
    #[arg(long)]
    epsilon_prime: Option<f64>,
    /// Indistinguishability target delta'.
    #[arg(long)]
    delta_prime: Option<f64>,
    /// Inverse mode: fix the noise scale instead of a target.
    #[arg(long)]
    lambda: Option<f64>,
    /// Inverse mode: fix the post-noise threshold.
    #[arg(long)]
    tau_prime: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, short)]
    m: u32,
    #[arg(long)]
    users: Option<u64>,
    /// Tabulate tau' for every integer tau in `LO..HI` (inclusive).
    #[arg(long)]
    sweep_tau: Option<String>,
    /// Write the plan JSON here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_plan(plan: &ZealousPlan, out: Option<&PathBuf>) -> Result<()> {
    println!("  m        = {}", plan.m);
    println!("  lambda   = {}", plan.lambda);
    println!("  tau      = {}", plan.tau);
    println!("  tau'     = {}", plan.tau_prime);
    println!("  users    = {}", plan.users);
    println!("  prob-dp  : epsilon = {}, delta = {:e}", plan.epsilon, plan.delta);
    println!("  indist.  : epsilon' = {}, delta' = {:e}", plan.epsilon_prime, plan.delta_prime);
    if plan.is_degenerate() {
        eprintln!("warning: a computed delta exceeded 1 and was clamped; the plan gives no protection");
    }
    let json = serde_json::to_string_pretty(&export::PlanJson::from(plan))?;
    println!("{json}");
    if let Some(path) = out {
        export::atomic_write(path, json.as_bytes())?;
    }
    Ok(())
}

fn cmd_plan(args: PlanArgs) -> Result<()> {
    let inverse = args.lambda.is_some() || args.tau_prime.is_some();
    let forward_prob = args.epsilon.is_some();
    let forward_ind = args.epsilon_prime.is_some() || args.delta_prime.is_some();
    if [inverse, forward_prob, forward_ind].iter().filter(|&&b| b).count() != 1 {
        bail!(
            "choose exactly one mode: --epsilon (probabilistic), \
             --epsilon-prime/--delta-prime (indistinguishability), \
             or --lambda/--tau-prime (inverse)"
        );
    }

    if let Some(range) = &args.sweep_tau {
        let epsilon = args.epsilon.context("--sweep-tau needs --epsilon")?;
        let users = args.users.context("--sweep-tau needs --users")?;
        let (lo, hi) = range
            .split_once("..")
            .and_then(|(a, b)| Some((a.parse::<u32>().ok()?, b.parse::<u32>().ok()?)))
            .context("--sweep-tau expects LO..HI with integers")?;
        println!("tau      tau'");
        let mut best = (0u32, f64::INFINITY);
        for tau in lo..=hi {
            let tp = tau_prime_for(epsilon, args.delta, args.m, users, tau as f64)?;
            if tp < best.1 {
                best = (tau, tp);
            }
            println!("{tau:<8} {tp:.4}");
        }
        println!("minimum at tau = {} (tau' = {:.4})", best.0, best.1);
        let plan = plan_probabilistic(epsilon, args.delta, args.m, users, Some(best.0 as f64))?;
        return print_plan(&plan, args.out.as_ref());
    }

    let plan = if inverse {
        let lambda = args.lambda.context("inverse mode needs --lambda")?;
        let tau_prime = args.tau_prime.context("inverse mode needs --tau-prime")?;
        let tau = args.tau.unwrap_or(1.0);
        let users = args.users.context("inverse mode needs --users")?;
        let (eps, delta) = achieved_delta(lambda, tau, tau_prime, args.m, users);
        let (eps_p, delta_p) = achieved_delta_prime(lambda, tau_prime, args.m);
        println!("achieved: ({eps}, {delta:e})-probabilistic privacy");
        println!("achieved: ({eps_p}, {delta_p:e})-indistinguishability");
        ZealousPlan::from_raw(args.m, lambda, tau, tau_prime, users)?
    } else if forward_prob {
        let epsilon = args.epsilon.unwrap();
        let users = args.users.context("probabilistic mode needs --users")?;
        plan_probabilistic(epsilon, args.delta, args.m, users, args.tau)?
    } else {
        let eps_p = args.epsilon_prime.context("indistinguishability mode needs --epsilon-prime")?;
        let delta_p = args.delta_prime.context("indistinguishability mode needs --delta-prime")?;
        plan_indistinguishable(eps_p, delta_p, args.m, args.users.unwrap_or(1))?
    };
    print_plan(&plan, args.out.as_ref())
}

#[derive(Args)]
struct SanitizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "native")]
    format: LogFormat,
    #[arg(long, default_value = "keyword")]
    kind: ItemKind,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    #[arg(long, short, default_value_t = 1)]
    m: u32,
    #[arg(long)]
    tau: Option<f64>,
    /// Raw-parameter mode (with --tau and --tau-prime).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau_prime: Option<f64>,
    /// Output JSON release.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV variant.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// For query releases: also publish noisy click counts of the top
    /// ranked urls per published query.
    #[arg(long)]
    clicks_out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    top_docs: usize,
    /// Session idle gap in seconds.
    #[arg(long, default_value_t = 1800)]
    session_gap: i64,
}

fn load_log(path: &PathBuf, format: LogFormat) -> Result<SearchLog> {
    let ingested = ingest_tsv(path, format)?;
    if ingested.stats.malformed_lines > 0 {
        eprintln!(
            "warning: {} of {} lines malformed",
            ingested.stats.malformed_lines, ingested.stats.total_lines
        );
    }
    Ok(ingested.log)
}

fn cmd_sanitize(args: SanitizeArgs, seed: u64) -> Result<()> {
    let log = load_log(&args.input, args.format)?;
    let opts = ExtractOptions { session_gap: args.session_gap, ..ExtractOptions::default() };
    let plan = match (args.epsilon, args.lambda) {
        (Some(eps), None) => {
            plan_probabilistic(eps, args.delta, args.m, log.user_count(), args.tau)?
        }
        (None, Some(lambda)) => {
            let tau = args.tau.context("raw mode needs --tau")?;
            let tau_prime = args.tau_prime.context("raw mode needs --tau-prime")?;
            ZealousPlan::from_raw(args.m, lambda, tau, tau_prime, log.user_count())?
        }
        _ => bail!("give either --epsilon (planned) or --lambda with --tau/--tau-prime (raw)"),
    };
    let release = sanitize(&log, args.kind, &plan, seed, &opts)?;
    let mut buf = Vec::new();
    export::write_sanitized_json(&release, &mut buf)?;
    export::atomic_write(&args.out, &buf)?;
    if let Some(csv) = &args.csv {
        let mut buf = Vec::new();
        export::write_sanitized_csv(&release, &mut buf)?;
        export::atomic_write(csv, &buf)?;
    }
    if let Some(clicks_out) = &args.clicks_out {
        let clicks = publish_clicks(&log, &release, args.top_docs, plan.lambda, seed, &opts)?;
        export::atomic_write(clicks_out, serde_json::to_string_pretty(&clicks)?.as_bytes())?;
    }
    println!(
        "{}",
        serde_json::json!({
            "kind": args.kind,
            "published_items": release.entries.len(),
            "plan": export::PlanJson::from(&plan),
            "seed": seed,
            "out": args.out,
        })
    );
    Ok(())
}

#[derive(Args)]
struct AnonymizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "native")]
    format: LogFormat,
    #[arg(long, short)]
    k: u32,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1800)]
    session_gap: i64,
}

fn cmd_anonymize(args: AnonymizeArgs, seed: u64) -> Result<()> {
    let log = load_log(&args.input, args.format)?;
    let opts = ExtractOptions { session_gap: args.session_gap, ..ExtractOptions::default() };
    let anon = zealous::anonymity::k_query_anonymize(&log, args.k, seed, &opts);
    export::atomic_write(&args.out, anon.to_tsv().as_bytes())?;
    println!(
        "{}",
        serde_json::json!({
            "k": args.k,
            "sessions": anon.session_count(),
            "entries": anon.entries.len(),
            "seed": seed,
            "out": args.out,
        })
    );
    Ok(())
}
