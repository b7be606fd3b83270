//! Exposure-aware aggregation of per-group candidate lists, plus the
//! constructions used to contrast it with demographic parity: the optimal
//! selection-rate mix, the block-ordered worst case and the gap sweep.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{delta_dp_selection, ndkl, DyadicClass, DyadicPools, IndexedTarget};
use crate::group::{GroupDistribution, GroupId, NodeId, Pair};
use crate::ranking::{GroupedCandidateSet, Ranking, ScoredCandidate};
use crate::scalar::Scalar;
use crate::split::largest_remainder;
use crate::utility::{precision_at_k, RelevanceVector};

/// One placement decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: Deserialize<'de>"))]
pub struct TraceStep<F> {
    /// 1-based output position.
    pub position: usize,
    pub group: GroupId,
    /// KL of the tentative prefix distribution for every group that still
    /// had candidates, in group order.
    pub tentative_kl: Vec<(GroupId, F)>,
    /// Value that was minimized; equals `tentative_kl` when `lambda == 1`.
    pub objective: Vec<(GroupId, F)>,
    pub pair: Pair,
    pub tie_break_used: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: Deserialize<'de>"))]
pub struct AggregationTrace<F> {
    pub steps: Vec<TraceStep<F>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation<F> {
    pub ranking: Ranking<F>,
    pub trace: AggregationTrace<F>,
    /// Every list ran dry before `n` entries were placed.
    pub exhausted: bool,
}

/// Min-max normalized score within one list; constant lists map to 1.
fn normalized_scores<F: Scalar>(list: &[ScoredCandidate<F>]) -> Vec<F> {
    let hi = list.iter().map(|c| c.score).fold(F::neg_infinity(), F::max);
    let lo = list.iter().map(|c| c.score).fold(F::infinity(), F::min);
    let span = hi - lo;
    list.iter()
        .map(|c| {
            if span > F::zero() {
                (c.score - lo) / span
            } else {
                F::one()
            }
        })
        .collect()
}

/// Greedy aggregation: at each position, place the head of the group whose
/// tentative prefix distribution is closest (in KL) to `target`.
///
/// Ties on KL go to the head with the higher within-group normalized score,
/// then to the lower group id. Stops early, with `exhausted` set, when every
/// list is empty.
pub fn moral_aggregate<F: Scalar>(
    candidates: &GroupedCandidateSet<F>,
    target: &GroupDistribution<F>,
    n: usize,
) -> Result<Aggregation<F>> {
    aggregate(candidates, target, n, F::one())
}

/// Greedy aggregation minimizing `λ·KL + (1 − λ)·(1 − ŝ)` per step, where `ŝ`
/// is the head's min-max normalized score within its own list.
pub fn moral_aggregate_weighted<F: Scalar>(
    candidates: &GroupedCandidateSet<F>,
    target: &GroupDistribution<F>,
    n: usize,
    lambda: F,
) -> Result<Aggregation<F>> {
    if !(lambda >= F::zero() && lambda <= F::one()) {
        return Err(Error::LambdaOutOfRange(lambda.to_f64().unwrap_or(f64::NAN)));
    }
    aggregate(candidates, target, n, lambda)
}

fn aggregate<F: Scalar>(
    candidates: &GroupedCandidateSet<F>,
    target: &GroupDistribution<F>,
    n: usize,
    lambda: F,
) -> Result<Aggregation<F>> {
    if n == 0 {
        return Err(Error::Config("output size must be at least 1".into()));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let active: Vec<(GroupId, &[ScoredCandidate<F>])> = candidates
        .lists()
        .iter()
        .filter(|(_, l)| !l.is_empty())
        .map(|(&g, l)| (g, l.as_slice()))
        .collect();
    for (g, _) in &active {
        if target.mass(*g) <= F::zero() {
            return Err(Error::ZeroTargetMass(*g));
        }
    }
    let index = IndexedTarget::new(target, active.iter().map(|(g, _)| *g));
    let slots: Vec<usize> = active.iter().map(|(g, _)| index.index(*g)).collect();
    let normalized: Vec<Vec<F>> = active.iter().map(|(_, l)| normalized_scores(l)).collect();
    let mut heads = vec![0usize; active.len()];
    let mut counts = vec![0usize; index.groups.len()];
    let mut entries = Vec::with_capacity(n.min(candidates.total_len()));
    let mut steps = Vec::with_capacity(entries.capacity());
    let mut exhausted = false;

    for t in 1..=n {
        let available: Vec<usize> = (0..active.len())
            .filter(|&i| heads[i] < active[i].1.len())
            .collect();
        if available.is_empty() {
            exhausted = true;
            break;
        }
        let mut kls = Vec::with_capacity(available.len());
        let mut objectives = Vec::with_capacity(available.len());
        for &i in &available {
            counts[slots[i]] += 1;
            let kl = index.kl_counts(&counts, t);
            counts[slots[i]] -= 1;
            let objective = if lambda == F::one() {
                kl
            } else {
                lambda * kl + (F::one() - lambda) * (F::one() - normalized[i][heads[i]])
            };
            kls.push(kl);
            objectives.push(objective);
        }
        let best = objectives.iter().copied().fold(F::infinity(), F::min);
        let slack = F::tie_tolerance() * best.abs().max(F::one());
        let tied: Vec<usize> = (0..available.len())
            .filter(|&j| objectives[j] <= best + slack)
            .collect();
        // available is in ascending group order, so the first maximum wins the id tie-break
        let mut pick = tied[0];
        for &j in &tied[1..] {
            let (a, b) = (available[j], available[pick]);
            if normalized[a][heads[a]] > normalized[b][heads[b]] {
                pick = j;
            }
        }
        let chosen = available[pick];
        let entry = active[chosen].1[heads[chosen]];
        heads[chosen] += 1;
        counts[slots[chosen]] += 1;
        entries.push(entry);
        steps.push(TraceStep {
            position: t,
            group: active[chosen].0,
            tentative_kl: available
                .iter()
                .zip(&kls)
                .map(|(&i, &kl)| (active[i].0, kl))
                .collect(),
            objective: available
                .iter()
                .zip(&objectives)
                .map(|(&i, &o)| (active[i].0, o))
                .collect(),
            pair: entry.pair(),
            tie_break_used: tied.len() > 1,
        });
    }
    Ok(Aggregation {
        ranking: Ranking::from_entries_unchecked(entries),
        trace: AggregationTrace { steps },
        exhausted,
    })
}

/// All-relevant synthetic candidates with the given per-group counts.
/// Scores decrease within each list; pairs are disjoint across the set.
pub fn synthetic_candidates<F: Scalar>(
    counts: &BTreeMap<GroupId, usize>,
) -> GroupedCandidateSet<F> {
    let mut next: NodeId = 0;
    let mut all = Vec::new();
    for (&g, &c) in counts {
        for j in 0..c {
            let pair = Pair {
                u: next,
                v: next + 1,
            };
            next += 2;
            all.push(ScoredCandidate::new(pair, F::from_count(c - j), g, true));
        }
    }
    GroupedCandidateSet::new(counts.keys().copied(), all).expect("synthetic pairs are unique")
}

/// Intra count `x` minimizing `|x / intra − (k − x) / inter|`, with the
/// resulting selection-rate gap. Searched exhaustively over feasible `x`
/// using exact integer comparisons; ties go to the smaller `x`.
pub fn optimal_dp_proportions<F: Scalar>(
    k: usize,
    pool_intra: usize,
    pool_inter: usize,
) -> Result<(usize, F)> {
    let pool = pool_intra + pool_inter;
    if k > pool {
        return Err(Error::InfeasibleK { k, pool });
    }
    let lo = k.saturating_sub(pool_inter);
    let hi = k.min(pool_intra);
    // |x/I − (k−x)/J| · I·J = |x·J − (k−x)·I|
    let gap = |x: usize| {
        (x as i128 * pool_inter as i128 - (k - x) as i128 * pool_intra as i128).unsigned_abs()
    };
    let x = (lo..=hi)
        .min_by_key(|&x| (gap(x), x))
        .expect("non-empty feasible range");
    let rate = |sel: usize, pool: usize| {
        if pool == 0 {
            F::zero()
        } else {
            F::from_count(sel) / F::from_count(pool)
        }
    };
    Ok((x, (rate(x, pool_intra) - rate(k - x, pool_inter)).abs()))
}

/// Contiguous group blocks, rarest target mass first (ties by group id).
pub fn worst_case_ranking<F: Scalar>(
    group_counts: &BTreeMap<GroupId, usize>,
    target: &GroupDistribution<F>,
) -> Result<Ranking<F>> {
    let mut order: Vec<(GroupId, usize)> = group_counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(&g, &c)| (g, c))
        .collect();
    for (g, _) in &order {
        if target.mass(*g) <= F::zero() {
            return Err(Error::ZeroTargetMass(*g));
        }
    }
    order.sort_by(|a, b| {
        target
            .mass(a.0)
            .partial_cmp(&target.mass(b.0))
            .unwrap()
            .then(a.0.cmp(&b.0))
    });
    let labels: Vec<GroupId> = order
        .iter()
        .flat_map(|&(g, c)| std::iter::repeat_n(g, c))
        .collect();
    Ok(Ranking::from_groups(&labels))
}

/// Splits `k` selections into per-group counts: the intra share follows the
/// optimal selection-rate mix, and each dyadic class is divided among its
/// groups in proportion to their target mass (largest remainder).
pub fn optimal_dp_group_counts<F: Scalar>(
    target: &GroupDistribution<F>,
    pools: DyadicPools,
    k: usize,
) -> Result<BTreeMap<GroupId, usize>> {
    let (x, _) = optimal_dp_proportions::<F>(k, pools.intra, pools.inter)?;
    let mut counts = BTreeMap::new();
    for (class, total) in [(DyadicClass::Intra, x), (DyadicClass::Inter, k - x)] {
        let members: Vec<(GroupId, F)> = target
            .iter()
            .filter(|&(g, p)| DyadicClass::of(g) == class && p > F::zero())
            .collect();
        if total == 0 {
            continue;
        }
        if members.is_empty() {
            return Err(Error::Config(format!(
                "target has no {class:?} group with positive mass"
            )));
        }
        let weights: Vec<f64> = members.iter().map(|(_, p)| p.to_f64().unwrap()).collect();
        for ((g, _), c) in members.iter().zip(largest_remainder(total, &weights)) {
            counts.insert(*g, c);
        }
    }
    Ok(counts)
}

impl DyadicPools {
    /// Pools of `total` candidates split by the target's intra/inter mass.
    pub fn from_target<F: Scalar>(target: &GroupDistribution<F>, total: usize) -> Self {
        let intra_mass: f64 = target
            .iter()
            .filter(|(g, _)| g.is_intra())
            .map(|(_, p)| p.to_f64().unwrap())
            .sum();
        let intra = ((total as f64) * intra_mass).round() as usize;
        DyadicPools {
            intra: intra.min(total),
            inter: total - intra.min(total),
        }
    }
}

/// Published edge-group mixes of common fairness benchmarks, in percent:
/// `(name, inter, 0-0, 1-1)`.
pub const GROUP_MIX_PRESETS: [(&str, f64, f64, f64); 6] = [
    ("facebook", 42.0, 44.0, 14.0),
    ("german", 20.0, 61.0, 19.0),
    ("nba", 27.0, 63.0, 10.0),
    ("pokec_n", 5.0, 66.0, 29.0),
    ("pokec_z", 5.0, 58.0, 37.0),
    ("credit", 12.0, 86.0, 2.0),
];

/// Target distribution of a named preset.
pub fn preset_target<F: Scalar>(name: &str) -> Result<GroupDistribution<F>> {
    let (_, inter, intra0, intra1) = GROUP_MIX_PRESETS
        .iter()
        .find(|p| p.0 == name)
        .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
    GroupDistribution::from_weights([
        (GroupId::new(0, 0), F::lit(*intra0)),
        (GroupId::new(0, 1), F::lit(*inter)),
        (GroupId::new(1, 1), F::lit(*intra1)),
    ])
}

/// NDKL of the greedy and block-ordered rankings that share the optimal
/// selection-rate mix at each cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCurve<F> {
    pub k_grid: Vec<usize>,
    pub greedy_ndkl: Vec<F>,
    pub worst_ndkl: Vec<F>,
    pub delta_dp: Vec<F>,
    pub worst_delta_dp: Vec<F>,
    pub prec: Vec<F>,
    pub worst_prec: Vec<F>,
}

impl<F: Scalar> GapCurve<F> {
    /// Plot-ready CSV: `k,greedy_ndkl,worst_ndkl,delta_dp,prec`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,greedy_ndkl,worst_ndkl,delta_dp,prec\n");
        for i in 0..self.k_grid.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.k_grid[i],
                self.greedy_ndkl[i],
                self.worst_ndkl[i],
                self.delta_dp[i],
                self.prec[i]
            ));
        }
        out
    }
}

pub fn gap_experiment<F: Scalar>(
    target: &GroupDistribution<F>,
    pools: DyadicPools,
    k_grid: &[usize],
) -> Result<GapCurve<F>> {
    let mut curve = GapCurve {
        k_grid: k_grid.to_vec(),
        greedy_ndkl: Vec::new(),
        worst_ndkl: Vec::new(),
        delta_dp: Vec::new(),
        worst_delta_dp: Vec::new(),
        prec: Vec::new(),
        worst_prec: Vec::new(),
    };
    for &k in k_grid {
        if k == 0 {
            return Err(Error::InfeasibleK {
                k,
                pool: pools.total(),
            });
        }
        let counts = optimal_dp_group_counts(target, pools, k)?;
        let greedy = moral_aggregate(&synthetic_candidates::<F>(&counts), target, k)?.ranking;
        let worst = worst_case_ranking(&counts, target)?;
        for (ranking, nd, dp, prec) in [
            (
                &greedy,
                &mut curve.greedy_ndkl,
                &mut curve.delta_dp,
                &mut curve.prec,
            ),
            (
                &worst,
                &mut curve.worst_ndkl,
                &mut curve.worst_delta_dp,
                &mut curve.worst_prec,
            ),
        ] {
            nd.push(ndkl(ranking, target, None)?);
            dp.push(delta_dp_selection(ranking, k, pools)?);
            let rel = RelevanceVector::from_ranking(ranking, k)?;
            prec.push(precision_at_k(&rel, k)?);
        }
    }
    Ok(curve)
}
