//! Group-exposure fairness metrics: KL divergence, prefix distributions,
//! NDKL and its upper bound, and demographic-parity diagnostics.
//!
//! KL divergence uses the natural logarithm. The positional discount of NDKL
//! is `1 / log2(k + 1)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupDistribution, GroupId};
use crate::ranking::Ranking;
use crate::scalar::Scalar;

/// `D_KL(q || p) = Σ q_i ln(q_i / p_i)` with `0 ln 0 = 0`.
///
/// Groups missing from either side have zero mass there.
pub fn kl_divergence<F: Scalar>(q: &GroupDistribution<F>, p: &GroupDistribution<F>) -> Result<F> {
    let mut total = F::zero();
    for (g, qi) in q.iter() {
        if qi <= F::zero() {
            continue;
        }
        let pi = p.mass(g);
        if pi <= F::zero() {
            return Err(Error::ZeroTargetMass(g));
        }
        total = total + qi * (qi / pi).ln();
    }
    Ok(total.max(F::zero()))
}

/// Position discount `1 / log2(k + 1)` for 1-based `k`.
pub fn discount<F: Scalar>(k: usize) -> F {
    F::one() / F::from_count(k + 1).log2()
}

/// Target masses laid out by group index, for the counting inner loops.
#[derive(Debug, Clone)]
pub(crate) struct IndexedTarget<F> {
    pub groups: Vec<GroupId>,
    pub mass: Vec<F>,
}

impl<F: Scalar> IndexedTarget<F> {
    pub fn new(target: &GroupDistribution<F>, extra: impl IntoIterator<Item = GroupId>) -> Self {
        let mut set: BTreeSet<GroupId> = target.groups().collect();
        set.extend(extra);
        let groups: Vec<GroupId> = set.into_iter().collect();
        let mass = groups.iter().map(|&g| target.mass(g)).collect();
        IndexedTarget { groups, mass }
    }

    pub fn index(&self, g: GroupId) -> usize {
        self.groups
            .binary_search(&g)
            .expect("group registered in target index")
    }

    /// KL of `counts / total` against the target.
    pub fn kl_counts(&self, counts: &[usize], total: usize) -> F {
        let t = F::from_count(total);
        let mut kl = F::zero();
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                let q = F::from_count(c) / t;
                kl = kl + q * (q / self.mass[i]).ln();
            }
        }
        kl.max(F::zero())
    }
}

/// Group distribution of the top-`k` positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixDistribution<F> {
    pub k: usize,
    pub counts: BTreeMap<GroupId, usize>,
    pub fractions: BTreeMap<GroupId, F>,
}

/// One prefix distribution per position, listing every group that occurs
/// anywhere in the ranking.
pub fn prefix_distributions<F: Scalar>(ranking: &Ranking<F>) -> Result<Vec<PrefixDistribution<F>>> {
    if ranking.is_empty() {
        return Err(Error::EmptyRanking);
    }
    let mut counts: BTreeMap<GroupId, usize> =
        ranking.entries().iter().map(|c| (c.group, 0)).collect();
    let mut out = Vec::with_capacity(ranking.len());
    for (i, c) in ranking.entries().iter().enumerate() {
        *counts.get_mut(&c.group).unwrap() += 1;
        let k = i + 1;
        let kf = F::from_count(k);
        let fractions = counts
            .iter()
            .map(|(&g, &n)| (g, F::from_count(n) / kf))
            .collect();
        out.push(PrefixDistribution {
            k,
            counts: counts.clone(),
            fractions,
        });
    }
    Ok(out)
}

/// Fractions at position `k`, as a distribution.
pub fn top_k_proportions<F: Scalar>(
    ranking: &Ranking<F>,
    k: usize,
) -> Result<GroupDistribution<F>> {
    if ranking.is_empty() || k == 0 {
        return Err(Error::EmptyRanking);
    }
    if k > ranking.len() {
        return Err(Error::KOutOfRange {
            k,
            len: ranking.len(),
        });
    }
    let mut counts: BTreeMap<GroupId, usize> =
        ranking.entries().iter().map(|c| (c.group, 0)).collect();
    for c in &ranking.entries()[..k] {
        *counts.get_mut(&c.group).unwrap() += 1;
    }
    GroupDistribution::from_counts(&counts)
}

/// NDKL of a ranking against `target`, truncated at `k_max` (default: the
/// whole ranking).
///
/// `NDKL = (1/Z) Σ_k D_KL(π̂_k || π) / log2(k + 1)` with `Z = Σ_k 1/log2(k + 1)`.
pub fn ndkl<F: Scalar>(
    ranking: &Ranking<F>,
    target: &GroupDistribution<F>,
    k_max: Option<usize>,
) -> Result<F> {
    ndkl_of_groups(&ranking.groups(), target, k_max)
}

/// [`ndkl`] over a bare sequence of group labels.
pub fn ndkl_of_groups<F: Scalar>(
    labels: &[GroupId],
    target: &GroupDistribution<F>,
    k_max: Option<usize>,
) -> Result<F> {
    if labels.is_empty() {
        return Err(Error::EmptyRanking);
    }
    let cutoff = k_max.unwrap_or(labels.len());
    if cutoff == 0 || cutoff > labels.len() {
        return Err(Error::KOutOfRange {
            k: cutoff,
            len: labels.len(),
        });
    }
    let prefix = &labels[..cutoff];
    for &g in prefix {
        if target.mass(g) <= F::zero() {
            return Err(Error::ZeroTargetMass(g));
        }
    }
    let index = IndexedTarget::new(target, prefix.iter().copied());
    let mut counts = vec![0usize; index.groups.len()];
    let mut weighted = F::zero();
    let mut z = F::zero();
    for (i, &g) in prefix.iter().enumerate() {
        counts[index.index(g)] += 1;
        let k = i + 1;
        let w = discount::<F>(k);
        weighted = weighted + w * index.kl_counts(&counts, k);
        z = z + w;
    }
    Ok((weighted / z).max(F::zero()))
}

/// `max_i ln(1 / π_i)` over the listed groups; an upper bound on NDKL for
/// any ranking, since every prefix KL obeys it.
pub fn ndkl_upper_bound<F: Scalar>(target: &GroupDistribution<F>) -> Result<F> {
    let mut bound = F::zero();
    for (g, p) in target.iter() {
        if p <= F::zero() {
            return Err(Error::ZeroTargetMass(g));
        }
        bound = bound.max((F::one() / p).ln());
    }
    Ok(bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DyadicClass {
    Intra,
    Inter,
}

impl DyadicClass {
    /// Same-attribute groups are intra, mixed groups inter.
    pub fn of(group: GroupId) -> Self {
        if group.is_intra() {
            DyadicClass::Intra
        } else {
            DyadicClass::Inter
        }
    }
}

/// Candidate pool sizes per dyadic class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DyadicPools {
    pub intra: usize,
    pub inter: usize,
}

impl DyadicPools {
    pub fn from_sizes(sizes: &BTreeMap<GroupId, usize>) -> Self {
        let mut pools = DyadicPools::default();
        for (&g, &n) in sizes {
            match DyadicClass::of(g) {
                DyadicClass::Intra => pools.intra += n,
                DyadicClass::Inter => pools.inter += n,
            }
        }
        pools
    }

    pub fn total(&self) -> usize {
        self.intra + self.inter
    }
}

fn selection_rate<F: Scalar>(class: &'static str, selected: usize, pool: usize) -> Result<F> {
    if selected > pool {
        return Err(Error::PoolSmallerThanSelected {
            class,
            selected,
            pool,
        });
    }
    if pool == 0 {
        return Ok(F::zero());
    }
    Ok(F::from_count(selected) / F::from_count(pool))
}

/// `|x_intra / |C_intra| - x_inter / |C_inter||` over the top `k`.
pub fn delta_dp_selection<F: Scalar>(
    ranking: &Ranking<F>,
    k: usize,
    pools: DyadicPools,
) -> Result<F> {
    delta_dp_selection_of_groups(&ranking.groups(), k, pools)
}

pub fn delta_dp_selection_of_groups<F: Scalar>(
    labels: &[GroupId],
    k: usize,
    pools: DyadicPools,
) -> Result<F> {
    if k > labels.len() {
        return Err(Error::KOutOfRange {
            k,
            len: labels.len(),
        });
    }
    let intra = labels[..k].iter().filter(|g| g.is_intra()).count();
    let inter = k - intra;
    let a: F = selection_rate("intra", intra, pools.intra)?;
    let b: F = selection_rate("inter", inter, pools.inter)?;
    Ok((a - b).abs())
}

fn mean<F: Scalar>(xs: &[F]) -> Result<F> {
    if xs.is_empty() {
        return Err(Error::EmptyGroup);
    }
    Ok(xs.iter().copied().sum::<F>() / F::from_count(xs.len()))
}

/// `|mean(intra) - mean(inter)|`: demographic parity over raw scores.
pub fn delta_dp_score<F: Scalar>(scores_intra: &[F], scores_inter: &[F]) -> Result<F> {
    Ok((mean(scores_intra)? - mean(scores_inter)?).abs())
}

/// Largest pairwise gap between group mean scores. Empty groups are skipped.
pub fn delta_max<F: Scalar>(scores_by_group: &BTreeMap<GroupId, Vec<F>>) -> Result<F> {
    let means: Vec<F> = scores_by_group
        .values()
        .filter(|s| !s.is_empty())
        .map(|s| mean(s))
        .collect::<Result<_>>()?;
    if means.len() < 2 {
        return Err(Error::FewerThanTwoGroups);
    }
    let hi = means.iter().copied().fold(F::neg_infinity(), F::max);
    let lo = means.iter().copied().fold(F::infinity(), F::min);
    Ok(hi - lo)
}

/// Scores of the top `k` entries split by dyadic class.
pub fn scores_by_class<F: Scalar>(ranking: &Ranking<F>, k: usize) -> (Vec<F>, Vec<F>) {
    let mut intra = Vec::new();
    let mut inter = Vec::new();
    for c in ranking.entries().iter().take(k) {
        match DyadicClass::of(c.group) {
            DyadicClass::Intra => intra.push(c.score),
            DyadicClass::Inter => inter.push(c.score),
        }
    }
    (intra, inter)
}

/// Scores of the top `k` entries per group.
pub fn scores_by_group<F: Scalar>(ranking: &Ranking<F>, k: usize) -> BTreeMap<GroupId, Vec<F>> {
    let mut out: BTreeMap<GroupId, Vec<F>> = BTreeMap::new();
    for c in ranking.entries().iter().take(k) {
        out.entry(c.group).or_default().push(c.score);
    }
    out
}
