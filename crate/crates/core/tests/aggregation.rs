use std::collections::BTreeMap;

use approx::assert_relative_eq;
use moral_core::fairness::{ndkl, ndkl_of_groups, ndkl_upper_bound, DyadicPools};
use moral_core::group::GroupDistribution;
use moral_core::moral::{
    gap_experiment, moral_aggregate, moral_aggregate_weighted, synthetic_candidates,
    worst_case_ranking, TraceStep,
};
use moral_core::oracle::{
    enumerate_ndkl_extremes, enumerate_ndkl_extremes_with, multinomial, verify_trace, MultisetSpec,
    OracleReport,
};
use moral_core::ranking::{GroupedCandidateSet, ScoredCandidate};
use moral_core::{Error, GroupId, Pair};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const A: GroupId = GroupId::new(0, 0);
const B: GroupId = GroupId::new(0, 1);
const C: GroupId = GroupId::new(1, 1);

fn dist(entries: &[(GroupId, f64)]) -> GroupDistribution<f64> {
    GroupDistribution::new(entries.iter().copied().collect()).unwrap()
}

fn spec(entries: &[(GroupId, usize)]) -> MultisetSpec {
    MultisetSpec::new(entries.iter().copied().collect())
}

#[test]
fn balanced_pair_reaches_multiset_minimum() {
    let target = dist(&[(A, 0.5), (B, 0.5)]);
    let counts = BTreeMap::from([(A, 2), (B, 2)]);
    let out = moral_aggregate(&synthetic_candidates::<f64>(&counts), &target, 4).unwrap();
    let labels = out.ranking.groups();
    assert_eq!(labels, vec![A, B, A, B]);
    let oracle = enumerate_ndkl_extremes(&spec(&[(A, 2), (B, 2)]), &target).unwrap();
    assert_eq!(oracle.permutations_examined, 6);
    assert_relative_eq!(
        ndkl(&out.ranking, &target, None).unwrap(),
        oracle.min_value,
        epsilon = 1e-12
    );
}

#[test]
fn three_groups_match_multiset_minimum() {
    let target = dist(&[(A, 0.5), (B, 0.3), (C, 0.2)]);
    let counts = BTreeMap::from([(A, 20), (B, 20), (C, 20)]);
    let out = moral_aggregate(&synthetic_candidates::<f64>(&counts), &target, 10).unwrap();
    let labels = out.ranking.groups();
    let tally = |g| labels.iter().filter(|&&x| x == g).count();
    assert_eq!((tally(A), tally(B), tally(C)), (5, 3, 2));
    let oracle = enumerate_ndkl_extremes(&spec(&[(A, 5), (B, 3), (C, 2)]), &target).unwrap();
    assert_eq!(oracle.permutations_examined, 2520);
    assert_relative_eq!(
        ndkl(&out.ranking, &target, None).unwrap(),
        oracle.min_value,
        epsilon = 1e-12
    );
}

#[test]
fn worst_case_matches_oracle_maximum_on_two_by_two() {
    let target = dist(&[(A, 0.5), (B, 0.5)]);
    let counts = BTreeMap::from([(A, 2), (B, 2)]);
    let worst = worst_case_ranking(&counts, &target).unwrap();
    let oracle = enumerate_ndkl_extremes(&spec(&[(A, 2), (B, 2)]), &target).unwrap();
    assert_relative_eq!(
        ndkl(&worst, &target, None).unwrap(),
        oracle.max_value,
        epsilon = 1e-12
    );
    assert!(oracle.argmax == vec![A, A, B, B] || oracle.argmax == vec![B, B, A, A]);
}

#[test]
fn one_of_each_is_symmetric() {
    let target = dist(&[(A, 0.5), (B, 0.5)]);
    let oracle = enumerate_ndkl_extremes(&spec(&[(A, 1), (B, 1)]), &target).unwrap();
    assert_eq!(oracle.permutations_examined, 2);
    assert_eq!(oracle.min_value, oracle.max_value);
    assert_relative_eq!(oracle.min_value, 0.4250, epsilon = 1e-4);
}

#[test]
fn enumeration_counts_are_multinomial() {
    let target = dist(&[(A, 0.5), (B, 0.3), (C, 0.2)]);
    for counts in [[1, 1, 1], [3, 0, 2], [2, 2, 3], [4, 1, 1]] {
        let s = spec(&[(A, counts[0]), (B, counts[1]), (C, counts[2])]);
        let mut visited = 0u128;
        let r = enumerate_ndkl_extremes_with(&s, &target, 14, |_, _| visited += 1).unwrap();
        assert_eq!(r.permutations_examined, multinomial(counts));
        assert_eq!(visited, r.permutations_examined);
        assert!(r.min_value <= r.max_value);
        assert!(r.max_value <= ndkl_upper_bound(&target).unwrap());
    }
}

#[test]
fn oracle_agrees_with_metric_per_sequence() {
    let target = dist(&[(A, 0.6), (B, 0.25), (C, 0.15)]);
    let s = spec(&[(A, 3), (B, 2), (C, 2)]);
    enumerate_ndkl_extremes_with(&s, &target, 14, |labels, value| {
        let metric = ndkl_of_groups(labels, &target, None).unwrap();
        assert!(
            (metric - value).abs() <= 1e-12,
            "{labels:?}: {metric} vs {value}"
        );
    })
    .unwrap();
}

#[test]
fn guard_override() {
    let target = dist(&[(A, 0.9), (B, 0.1)]);
    let s = spec(&[(A, 14), (B, 1)]);
    assert!(matches!(
        enumerate_ndkl_extremes(&s, &target),
        Err(Error::TooLarge { n: 15, .. })
    ));
    let r = enumerate_ndkl_extremes_with(&s, &target, 15, |_, _| {}).unwrap();
    assert_eq!(r.permutations_examined, 15);
}

#[test]
fn oracle_report_json_shape() {
    let target = dist(&[(A, 0.5), (B, 0.5)]);
    let r = enumerate_ndkl_extremes(&spec(&[(A, 2), (B, 2)]), &target).unwrap();
    let report = OracleReport::new(&r, &target).unwrap();
    let json: serde_json::Value = serde_json::to_value(&report).unwrap();
    let keys: Vec<&str> = json
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    assert_eq!(keys.len(), 6);
    for k in ["min", "max", "argmin", "argmax", "bound", "examined"] {
        assert!(keys.contains(&k), "{k}");
    }
    assert_eq!(json["argmin"][0], "0-0");
    assert_relative_eq!(report.bound, 2f64.ln(), epsilon = 1e-12);
}

fn mixed_candidates() -> GroupedCandidateSet<f64> {
    let mut all = Vec::new();
    let mut next = 0;
    for (g, scores) in [
        (A, vec![0.95, 0.9, 0.2, 0.1, 0.05]),
        (B, vec![0.99, 0.98, 0.97, 0.96]),
        (C, vec![0.5, 0.4, 0.3]),
    ] {
        for s in scores {
            all.push(ScoredCandidate::new(
                Pair {
                    u: next,
                    v: next + 1,
                },
                s,
                g,
                false,
            ));
            next += 2;
        }
    }
    GroupedCandidateSet::new([A, B, C], all).unwrap()
}

#[test]
fn greedy_trace_verifies_clean() {
    let target = dist(&[(A, 0.5), (B, 0.2), (C, 0.3)]);
    let out = moral_aggregate(&mixed_candidates(), &target, 12).unwrap();
    let report = verify_trace(&out.trace, &target);
    assert_eq!(report.steps_checked, 12);
    assert!(report.is_clean());
}

#[test]
fn planted_fault_is_reported_at_its_step() {
    let target = dist(&[(A, 0.5), (B, 0.2), (C, 0.3)]);
    let mut trace = moral_aggregate(&mixed_candidates(), &target, 6)
        .unwrap()
        .trace;
    // first step picks A; force the least fitting group instead
    assert_eq!(trace.steps[0].group, A);
    trace.steps[0].group = B;
    let report = verify_trace(&trace, &target);
    let v = report.first_violation().expect("violation");
    assert_eq!(v.position, 1);
    assert_eq!(v.chosen, B);
    assert_eq!(v.best, A);
}

#[test]
fn score_only_trace_violates_fairness_rule_where_they_disagree() {
    let target = dist(&[(A, 0.5), (B, 0.2), (C, 0.3)]);
    let weighted = moral_aggregate_weighted(&mixed_candidates(), &target, 12, 0.0).unwrap();
    let report = verify_trace(&weighted.trace, &target);
    // recompute independently which steps disagree with the fairness rule
    let disagreements: Vec<usize> = weighted
        .trace
        .steps
        .iter()
        .filter(|s: &&TraceStep<f64>| {
            let best = s
                .tentative_kl
                .iter()
                .map(|(_, kl)| *kl)
                .fold(f64::INFINITY, f64::min);
            let chosen = s
                .tentative_kl
                .iter()
                .find(|(g, _)| *g == s.group)
                .unwrap()
                .1;
            chosen > best + 1e-12
        })
        .map(|s| s.position)
        .collect();
    assert!(!disagreements.is_empty());
    let reported: Vec<usize> = report.violations.iter().map(|v| v.position).collect();
    assert_eq!(reported, disagreements);
}

#[test]
fn zero_lambda_takes_best_normalized_head() {
    let target = dist(&[(A, 0.5), (B, 0.2), (C, 0.3)]);
    let out = moral_aggregate_weighted(&mixed_candidates(), &target, 12, 0.0).unwrap();
    for step in &out.trace.steps {
        let min = step
            .objective
            .iter()
            .map(|(_, o)| *o)
            .fold(f64::INFINITY, f64::min);
        let chosen = step
            .objective
            .iter()
            .find(|(g, _)| *g == step.group)
            .unwrap()
            .1;
        assert_eq!(chosen, min);
    }
}

#[test]
fn gap_at_two_hundred_on_german_like_pools() {
    let target = dist(&[(A, 0.61), (B, 0.20), (C, 0.19)]);
    let curve = gap_experiment(&target, DyadicPools::from_target(&target, 10_000), &[200]).unwrap();
    assert!(curve.worst_ndkl[0] >= 2.0 * curve.greedy_ndkl[0]);
    // regression values from an oracle-checked run
    assert_relative_eq!(curve.greedy_ndkl[0], 0.024098132734398748, epsilon = 1e-9);
    assert_relative_eq!(curve.worst_ndkl[0], 0.8024947667775089, epsilon = 1e-9);
    assert_eq!(curve.delta_dp[0], curve.worst_delta_dp[0]);
    assert_eq!(curve.prec[0], 1.0);
    assert!(curve
        .to_csv()
        .starts_with("k,greedy_ndkl,worst_ndkl,delta_dp,prec\n200,"));
}

#[test]
fn gap_rejects_infeasible_cutoff() {
    let target = dist(&[(A, 0.5), (B, 0.5)]);
    let pools = DyadicPools { intra: 3, inter: 3 };
    assert!(matches!(
        gap_experiment(&target, pools, &[7]),
        Err(Error::InfeasibleK { k: 7, pool: 6 })
    ));
}

fn target_strategy() -> impl Strategy<Value = GroupDistribution<f64>> {
    prop::collection::vec(0.05f64..1.0, 3)
        .prop_map(|w| GroupDistribution::from_weights([A, B, C].into_iter().zip(w)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn greedy_dominates_worst_and_random_orders(
        target in target_strategy(),
        counts in prop::collection::vec(0usize..12, 3),
        seed in any::<u64>(),
    ) {
        let counts: BTreeMap<GroupId, usize> = [A, B, C].into_iter().zip(counts).collect();
        let n: usize = counts.values().sum();
        prop_assume!(n > 0);
        let greedy = moral_aggregate(&synthetic_candidates::<f64>(&counts), &target, n).unwrap();
        prop_assert!(verify_trace(&greedy.trace, &target).is_clean());
        let g = ndkl(&greedy.ranking, &target, None).unwrap();
        let w = ndkl(&worst_case_ranking(&counts, &target).unwrap(), &target, None).unwrap();
        prop_assert!(g <= w + 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels = greedy.ranking.groups();
        for _ in 0..1000 {
            labels.shuffle(&mut rng);
            prop_assert!(g <= ndkl_of_groups(&labels, &target, None).unwrap() + 1e-12);
        }
    }

    #[test]
    fn within_group_order_and_exhaustion(
        target in target_strategy(),
        sizes in prop::collection::vec(0usize..6, 3),
        n in 1usize..25,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all = Vec::new();
        let mut next = 0;
        for (g, size) in [A, B, C].into_iter().zip(&sizes) {
            for _ in 0..*size {
                let score: f64 = rand::Rng::gen(&mut rng);
                all.push(ScoredCandidate::new(Pair { u: next, v: next + 1 }, score, g, false));
                next += 2;
            }
        }
        let set = GroupedCandidateSet::new([A, B, C], all).unwrap();
        prop_assume!(!set.is_empty());
        let out = moral_aggregate(&set, &target, n).unwrap();
        prop_assert_eq!(out.ranking.len(), n.min(set.total_len()));
        prop_assert_eq!(out.exhausted, n > set.total_len());
        for g in [A, B, C] {
            let got: Vec<Pair> = out.ranking.entries().iter().filter(|c| c.group == g).map(|c| c.pair()).collect();
            let want: Vec<Pair> = set.list(g).iter().take(got.len()).map(|c| c.pair()).collect();
            prop_assert_eq!(got, want);
        }
        for (i, step) in out.trace.steps.iter().enumerate() {
            let taken_before = out.ranking.entries()[..i].iter().filter(|c| c.group == step.group).count();
            prop_assert!(taken_before < set.list(step.group).len());
        }
    }

    #[test]
    fn unit_lambda_is_plain_aggregation(target in target_strategy(), sizes in prop::collection::vec(1usize..6, 3)) {
        let counts: BTreeMap<GroupId, usize> = [A, B, C].into_iter().zip(sizes).collect();
        let set = synthetic_candidates::<f64>(&counts);
        let n = set.total_len();
        prop_assert_eq!(
            moral_aggregate(&set, &target, n).unwrap(),
            moral_aggregate_weighted(&set, &target, n, 1.0).unwrap()
        );
    }
}

#[test]
fn top_hundred_follows_german_proportions() {
    let target = dist(&[(A, 0.61), (B, 0.20), (C, 0.19)]);
    let counts = BTreeMap::from([(A, 200), (B, 200), (C, 200)]);
    let out = moral_aggregate(&synthetic_candidates::<f64>(&counts), &target, 100).unwrap();
    let top = moral_core::fairness::top_k_proportions(&out.ranking, 100).unwrap();
    for (g, p) in target.iter() {
        assert!((top.mass(g) - p).abs() <= 0.05, "{g}: {}", top.mass(g));
    }
}
