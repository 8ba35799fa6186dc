//! Exact verification of the sanitizer's guarantees on oracle
//! instances.
//!
//! On a valid instance the sanitizer's output distribution factorizes
//! over items: an item with pre-noise count `c ≥ τ` is published with
//! probability `P[c + Lap(λ) > τ′]`, independently of all others, and
//! published items carry a Laplace-density noisy count. Everything
//! here is computed from that factorization; the sampler is never
//! consulted, so these functions are an independent check on it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::noise::{laplace_cdf, laplace_log_density, laplace_survival};
use crate::plan::ZealousPlan;
use crate::searchlog::Histogram;

use super::OracleInstance;

/// Tolerance for floating-point comparisons of log-ratios and
/// probability sums.
const EPS: f64 = 1e-9;

/// Probability that the published item set is exactly `subset`.
///
/// The product runs over items with `c_k ≥ τ`: `p_k` for members,
/// `1 - p_k` for the rest, with `p_k = P[c_k + Lap(λ) > τ′]`. Subsets
/// containing an item below `τ` have probability zero.
pub fn release_set_probability(
    histogram: &Histogram,
    plan: &ZealousPlan,
    subset: &BTreeSet<String>,
) -> f64 {
    let mut prob = 1.0;
    let mut covered = 0usize;
    for (item, count) in histogram.iter() {
        let c = count as f64;
        if c < plan.tau {
            continue;
        }
        let p = laplace_survival(plan.tau_prime - c, plan.lambda);
        if subset.contains(item) {
            covered += 1;
            prob *= p;
        } else {
            prob *= 1.0 - p;
        }
    }
    if covered != subset.len() {
        // Some requested item is absent or below tau: impossible.
        return 0.0;
    }
    prob
}

/// Pre-noise candidates of a histogram: items with `c ≥ τ`, paired
/// with their publish probability.
fn candidates(histogram: &Histogram, plan: &ZealousPlan) -> Vec<(String, f64, f64)> {
    histogram
        .iter()
        .filter(|&(_, c)| (c as f64) >= plan.tau)
        .map(|(item, c)| {
            let c = c as f64;
            (item.to_string(), c, laplace_survival(plan.tau_prime - c, plan.lambda))
        })
        .collect()
}

/// Every subset of the union of both logs' candidate items. Meant for
/// exhaustive event enumeration on small instances.
pub fn all_release_sets(instance: &OracleInstance) -> Vec<BTreeSet<String>> {
    let mut items: BTreeSet<String> = BTreeSet::new();
    for hist in [instance.histogram(), instance.neighbor_histogram()] {
        for (item, _, _) in candidates(&hist, &instance.plan) {
            items.insert(item);
        }
    }
    let items: Vec<String> = items.into_iter().collect();
    let n = items.len();
    assert!(n < 24, "exhaustive enumeration over {n} candidates would be too large");
    (0u32..(1 << n))
        .map(|mask| {
            items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, s)| s.clone())
                .collect()
        })
        .collect()
}

/// The first proof obligation: the probability that the output leaves
/// the safe set `Ω` (outputs free of items whose count is exactly `τ`)
/// must not exceed the plan's `δ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObligationA {
    /// Exact `P[Z(S) ∉ Ω]`, product form.
    pub prob_outside: f64,
    /// The closed form `1 - (1 - e^{-(τ′-τ)/λ}/2)^{|K|}`.
    pub closed_form: f64,
    /// `|K|`: number of items with count exactly `τ`.
    pub boundary_items: usize,
    pub delta: f64,
    pub pass: bool,
}

/// One sampled output with its log-density ratio.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmegaSample {
    pub published: Vec<(String, f64)>,
    pub log_ratio: f64,
}

/// The second proof obligation: for outputs inside `Ω`, the joint
/// densities under the two neighboring logs differ by at most `e^ε`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObligationB {
    pub epsilon: f64,
    pub samples: usize,
    pub max_abs_log_ratio: f64,
    pub pass: bool,
    pub counterexample: Option<OmegaSample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbDpReport {
    pub obligation_a: ObligationA,
    pub obligation_b: ObligationB,
    pub pass: bool,
}

/// Verify the plan's declared `(ε, δ)`-probabilistic privacy on an
/// instance: obligation (a) exactly, obligation (b) on `sample_points`
/// outputs drawn from `Ω` with noisy counts on a fixed grid above `τ′`.
pub fn verify_prob_dp(instance: &OracleInstance, sample_points: usize, seed: u64) -> ProbDpReport {
    use rand::Rng;
    let plan = &instance.plan;
    let hist = instance.histogram();
    let neighbor_hist = instance.neighbor_histogram();
    let cand: Vec<(String, f64, f64)> = candidates(&hist, plan);
    let neighbor_cand: Vec<(String, f64, f64)> = candidates(&neighbor_hist, plan);

    // Obligation (a): K = items with count exactly tau.
    let boundary: Vec<&(String, f64, f64)> =
        cand.iter().filter(|(_, c, _)| *c == plan.tau).collect();
    let prob_outside = 1.0 - boundary.iter().map(|(_, _, p)| 1.0 - p).product::<f64>();
    let p_gap = 0.5 * (-(plan.tau_prime - plan.tau) / plan.lambda).exp();
    let closed_form = 1.0 - (1.0 - p_gap).powi(boundary.len() as i32);
    let obligation_a = ObligationA {
        prob_outside,
        closed_form,
        boundary_items: boundary.len(),
        delta: plan.delta,
        pass: prob_outside <= plan.delta + EPS,
    };

    // Obligation (b): log-density of an output (T, x) is the sum of
    // published-item densities plus dropped-candidate log-CDFs.
    let log_density = |cands: &[(String, f64, f64)], published: &BTreeMap<String, f64>| -> f64 {
        let mut acc = 0.0;
        for (item, c, _) in cands {
            match published.get(item) {
                Some(&x) => acc += laplace_log_density(x - c, plan.lambda),
                None => acc += laplace_cdf(plan.tau_prime - c, plan.lambda).ln(),
            }
        }
        acc
    };
    let neighbor_items: BTreeSet<&str> =
        neighbor_cand.iter().map(|(item, _, _)| item.as_str()).collect();

    let grid = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
    let allowed: Vec<&(String, f64, f64)> =
        cand.iter().filter(|(_, c, _)| *c != plan.tau).collect();
    let mut rng = crate::noise::keyed_stream(seed, "oracle", "omega-samples");
    let mut max_abs_log_ratio: f64 = 0.0;
    let mut counterexample = None;
    for _ in 0..sample_points {
        let mut published = BTreeMap::new();
        for (item, _, _) in &allowed {
            if rng.random::<bool>() {
                let x = plan.tau_prime + grid[rng.random_range(0..grid.len())] * plan.lambda;
                published.insert(item.clone(), x);
            }
        }
        // A published item missing from the neighbor's candidates makes
        // the ratio infinite; record it as a violation.
        if published.keys().any(|item| !neighbor_items.contains(item.as_str())) {
            counterexample = Some(OmegaSample {
                published: published.into_iter().collect(),
                log_ratio: f64::INFINITY,
            });
            max_abs_log_ratio = f64::INFINITY;
            break;
        }
        let ratio = log_density(&cand, &published) - log_density(&neighbor_cand, &published);
        if ratio.abs() > max_abs_log_ratio {
            max_abs_log_ratio = ratio.abs();
            if ratio.abs() > plan.epsilon + EPS {
                counterexample = Some(OmegaSample {
                    published: published.into_iter().collect(),
                    log_ratio: ratio,
                });
            }
        }
    }
    let obligation_b = ObligationB {
        epsilon: plan.epsilon,
        samples: sample_points,
        max_abs_log_ratio,
        pass: max_abs_log_ratio <= plan.epsilon + EPS,
        counterexample,
    };

    let pass = obligation_a.pass && obligation_b.pass;
    ProbDpReport { obligation_a, obligation_b, pass }
}

/// Result of checking `P[A(S) ∈ O] ≤ e^ε P[A(S′) ∈ O] + δ` over a
/// family of events (both directions).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndistReport {
    pub epsilon: f64,
    pub delta: f64,
    pub events: usize,
    /// Largest value of `P[O] - e^ε P'[O] - δ` seen (negative when the
    /// bound holds everywhere).
    pub worst_margin: f64,
    pub pass: bool,
    pub violating_event: Option<Vec<Vec<String>>>,
}

fn indist_over_events(
    instance: &OracleInstance,
    events: &[Vec<BTreeSet<String>>],
    epsilon: f64,
    delta: f64,
) -> IndistReport {
    let hist = instance.histogram();
    let neighbor_hist = instance.neighbor_histogram();
    let plan = &instance.plan;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut violating_event = None;
    for event in events {
        let p: f64 =
            event.iter().map(|set| release_set_probability(&hist, plan, set)).sum();
        let q: f64 =
            event.iter().map(|set| release_set_probability(&neighbor_hist, plan, set)).sum();
        for (a, b) in [(p, q), (q, p)] {
            let margin = a - epsilon.exp() * b - delta;
            if margin > worst_margin {
                worst_margin = margin;
                if margin > EPS {
                    violating_event = Some(
                        event.iter().map(|set| set.iter().cloned().collect()).collect(),
                    );
                }
            }
        }
    }
    IndistReport {
        epsilon,
        delta,
        events: events.len(),
        worst_margin,
        pass: worst_margin <= EPS,
        violating_event,
    }
}

/// Check the plan's declared `(ε′, δ′)`-indistinguishability over the
/// given release-set events. Meaningful for plans with `τ = 1`, where
/// that guarantee is defined.
pub fn verify_indistinguishability(
    instance: &OracleInstance,
    events: &[Vec<BTreeSet<String>>],
) -> IndistReport {
    indist_over_events(instance, events, instance.plan.epsilon_prime, instance.plan.delta_prime)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImplicationReport {
    pub prob_dp: ProbDpReport,
    /// False when the precondition (prob-DP verified) failed; the
    /// implication is then not applicable and `indist` is `None`.
    pub applicable: bool,
    pub indist: Option<IndistReport>,
    pub pass: bool,
}

/// Numeric version of "probabilistic privacy implies
/// indistinguishability with the same parameters": after verifying
/// prob-DP, check the `(ε, δ)` indistinguishability bound over *all*
/// release-set events at once.
///
/// Exhaustiveness without enumerating the double-exponential family of
/// events: the worst event in each direction is the set of release
/// sets where one density exceeds `e^ε` times the other, so it
/// suffices to sum the positive parts over all release sets.
pub fn check_implication(
    instance: &OracleInstance,
    sample_points: usize,
    seed: u64,
) -> ImplicationReport {
    let prob_dp = verify_prob_dp(instance, sample_points, seed);
    if !prob_dp.pass {
        return ImplicationReport { prob_dp, applicable: false, indist: None, pass: true };
    }
    let plan = &instance.plan;
    let hist = instance.histogram();
    let neighbor_hist = instance.neighbor_histogram();
    let e_eps = plan.epsilon.exp();
    let mut excess_forward = 0.0;
    let mut excess_backward = 0.0;
    let sets = all_release_sets(instance);
    for set in &sets {
        let p = release_set_probability(&hist, plan, set);
        let q = release_set_probability(&neighbor_hist, plan, set);
        excess_forward += (p - e_eps * q).max(0.0);
        excess_backward += (q - e_eps * p).max(0.0);
    }
    let worst = excess_forward.max(excess_backward);
    let indist = IndistReport {
        epsilon: plan.epsilon,
        delta: plan.delta,
        events: sets.len(),
        worst_margin: worst - plan.delta,
        pass: worst <= plan.delta + EPS,
        violating_event: None,
    };
    let pass = indist.pass;
    ImplicationReport { prob_dp, applicable: true, indist: Some(indist), pass }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use crate::plan::{plan_indistinguishable, plan_probabilistic};
    use crate::searchlog::{ExtractOptions, ItemKind};

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn item_at_tau_prime_is_a_coin_flip() {
        let log = log_of(&[("u1", &["a"]), ("u2", &["a"]), ("u3", &["a"])]);
        let plan = crate::plan::ZealousPlan::from_raw(1, 1.0, 1.0, 3.0, 3).unwrap();
        let hist = crate::searchlog::build_histogram(&log, ItemKind::Keyword, &ExtractOptions::default());
        let p = release_set_probability(&hist, &plan, &set(&["a"]));
        assert!((p - 0.5).abs() < 1e-15);
        let p_empty = release_set_probability(&hist, &plan, &set(&[]));
        assert!((p_empty - 0.5).abs() < 1e-15);
    }

    #[test]
    fn all_below_tau_means_empty_output() {
        let log = log_of(&[("u1", &["a"]), ("u2", &["b"])]);
        let plan = crate::plan::ZealousPlan::from_raw(1, 1.0, 5.0, 8.0, 2).unwrap();
        let hist = crate::searchlog::build_histogram(&log, ItemKind::Keyword, &ExtractOptions::default());
        assert_eq!(release_set_probability(&hist, &plan, &set(&[])), 1.0);
        assert_eq!(release_set_probability(&hist, &plan, &set(&["a"])), 0.0);
    }

    #[test]
    fn two_fair_items_make_four_quarter_subsets() {
        // Both counts sit exactly at tau', so each survives with
        // probability 1/2 independently.
        let log = log_of(&[
            ("u1", &["a", "b"]),
            ("u2", &["a", "b"]),
            ("u3", &["a", "b"]),
        ]);
        let plan = crate::plan::ZealousPlan::from_raw(2, 1.0, 1.0, 3.0, 3).unwrap();
        let hist = crate::searchlog::build_histogram(&log, ItemKind::Keyword, &ExtractOptions::default());
        for subset in [set(&[]), set(&["a"]), set(&["b"]), set(&["a", "b"])] {
            let p = release_set_probability(&hist, &plan, &subset);
            assert!((p - 0.25).abs() < 1e-15, "subset {subset:?} has p = {p}");
        }
    }

    #[test]
    fn release_set_probabilities_sum_to_one() {
        let instance = four_item_instance();
        let hist = instance.histogram();
        let total: f64 = all_release_sets(&instance)
            .iter()
            .map(|s| release_set_probability(&hist, &instance.plan, s))
            .sum();
        assert!((total - 1.0).abs() < 1e-12, "total probability {total}");
    }

    #[test]
    fn identical_logs_give_unit_ratios() {
        // Bypass the neighbor validation: call the density machinery
        // with S' = S by constructing an instance whose neighbor differs
        // in a user that holds no items of the tested kind ... simplest
        // honest check: neighbor differs in a fresh user with a unique
        // below-tau item, which cancels in both factorizations.
        let log = log_of(&[("u1", &["a"]), ("u2", &["a"]), ("u3", &["a"])]);
        let neighbor = log.with_history("u9", vec![entry("u9", "z", 0)]);
        let plan = plan_probabilistic(1.0, 0.05, 1, 3, Some(2.0)).unwrap();
        let instance = OracleInstance::new(
            vec!["a".into(), "z".into()],
            log,
            neighbor,
            plan,
            ItemKind::Keyword,
            ExtractOptions::default(),
        )
        .unwrap();
        // "z" has count 1 < tau = 2 in the neighbor, so the candidate
        // sets coincide and every ratio is exactly 1.
        let report = verify_prob_dp(&instance, 2000, 5);
        assert!(report.pass);
        assert_eq!(report.obligation_b.max_abs_log_ratio, 0.0);
    }

    #[test]
    fn oracle_passes_on_its_contract_instance() {
        let instance = four_item_instance();
        let report = verify_prob_dp(&instance, 10_000, 11);
        assert!(report.obligation_a.pass, "{:?}", report.obligation_a);
        assert!(report.obligation_b.pass, "{:?}", report.obligation_b);
        assert!(
            (report.obligation_a.prob_outside - report.obligation_a.closed_form).abs() < 1e-12
        );
    }

    #[test]
    fn halved_gap_with_boundary_items_fails_obligation_a() {
        // Keep the declared delta but halve the threshold gap; an item
        // sitting exactly at tau then leaks more than delta.
        let log = log_of(&[("u1", &["a"]), ("u2", &["a"]), ("u3", &["b"]), ("u4", &["b"])]);
        let neighbor = log.with_history("u4", vec![entry("u4", "a", 0)]);
        let honest = plan_probabilistic(1.0, 0.05, 1, 4, Some(2.0)).unwrap();
        let mut broken = honest.clone();
        broken.tau_prime = broken.tau + (honest.tau_prime - honest.tau) / 2.0;
        let instance = OracleInstance::new(
            vec!["a".into(), "b".into()],
            log,
            neighbor,
            broken,
            ItemKind::Keyword,
            ExtractOptions::default(),
        )
        .unwrap();
        let report = verify_prob_dp(&instance, 1000, 3);
        assert_eq!(report.obligation_a.boundary_items, 2, "both counts sit at tau");
        assert!(!report.obligation_a.pass, "broken plan must fail: {:?}", report.obligation_a);
    }

    #[test]
    fn trivial_events_always_hold() {
        let instance = four_item_instance();
        let all = all_release_sets(&instance);
        let everything = vec![all.clone()];
        let empty: Vec<Vec<BTreeSet<String>>> = vec![Vec::new()];
        for events in [everything, empty] {
            let report = verify_indistinguishability(&instance, &events);
            assert!(report.pass, "{report:?}");
        }
    }

    #[test]
    fn singleton_events_pass_on_a_tau_one_plan() {
        // tau = 1 instance checked against its achieved (eps', delta').
        let log = log_of(&[
            ("u1", &["a", "b"]),
            ("u2", &["a", "c"]),
            ("u3", &["a", "b"]),
            ("u4", &["b", "c"]),
        ]);
        let neighbor = log.with_history("u2", vec![entry("u2", "b", 0), entry("u2", "c", 10)]);
        let plan = plan_indistinguishable(2.0, 1e-3, 2, 4).unwrap();
        let instance = OracleInstance::new(
            vec!["a".into(), "b".into(), "c".into()],
            log,
            neighbor,
            plan,
            ItemKind::Keyword,
            ExtractOptions::default(),
        )
        .unwrap();
        let singletons: Vec<Vec<BTreeSet<String>>> =
            all_release_sets(&instance).into_iter().map(|s| vec![s]).collect();
        let report = verify_indistinguishability(&instance, &singletons);
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn implication_holds_on_the_contract_instance() {
        let instance = four_item_instance();
        let report = check_implication(&instance, 5000, 17);
        assert!(report.applicable);
        assert!(report.pass, "{:?}", report.indist);
    }

    #[test]
    fn implication_is_not_applicable_when_prob_dp_fails() {
        let log = log_of(&[("u1", &["a"]), ("u2", &["a"]), ("u3", &["b"]), ("u4", &["b"])]);
        let neighbor = log.with_history("u4", vec![entry("u4", "a", 0)]);
        let honest = plan_probabilistic(1.0, 0.05, 1, 4, Some(2.0)).unwrap();
        let mut broken = honest.clone();
        broken.tau_prime = broken.tau + (honest.tau_prime - honest.tau) / 2.0;
        let instance = OracleInstance::new(
            vec!["a".into(), "b".into()],
            log,
            neighbor,
            broken,
            ItemKind::Keyword,
            ExtractOptions::default(),
        )
        .unwrap();
        let report = check_implication(&instance, 500, 3);
        assert!(!report.applicable);
        assert!(report.indist.is_none());
        assert!(report.pass, "skipped implication reports as not-applicable, not failed");
    }
}
