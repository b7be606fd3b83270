//! Brute-force ground truth for small instances.
//!
//! NDKL is recomputed here from scratch for every prefix, without touching
//! the incremental code in [`crate::fairness`], so the two can be checked
//! against each other.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::ndkl_upper_bound;
use crate::group::{GroupDistribution, GroupId};
use crate::moral::AggregationTrace;
use crate::scalar::Scalar;

/// Largest multiset enumerated without an explicit override.
pub const DEFAULT_GUARD: usize = 14;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultisetSpec {
    pub group_counts: BTreeMap<GroupId, usize>,
}

impl MultisetSpec {
    pub fn new(group_counts: BTreeMap<GroupId, usize>) -> Self {
        let group_counts = group_counts.into_iter().filter(|&(_, c)| c > 0).collect();
        MultisetSpec { group_counts }
    }

    pub fn n(&self) -> usize {
        self.group_counts.values().sum()
    }

    /// Lexicographically smallest arrangement.
    pub fn sorted_labels(&self) -> Vec<GroupId> {
        self.group_counts
            .iter()
            .flat_map(|(&g, &c)| std::iter::repeat_n(g, c))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeResult<F> {
    pub min_value: F,
    pub max_value: F,
    pub argmin: Vec<GroupId>,
    pub argmax: Vec<GroupId>,
    pub permutations_examined: u128,
}

/// `n! / Π c_i!`.
pub fn multinomial(counts: impl IntoIterator<Item = usize>) -> u128 {
    let mut result: u128 = 1;
    let mut placed: u128 = 0;
    for c in counts {
        for i in 1..=c as u128 {
            placed += 1;
            // exact at every step: the running value is a binomial product
            result = result * placed / i;
        }
    }
    result
}

/// Steps `labels` to the next lexicographic arrangement; false after the last.
fn next_permutation<T: Ord>(labels: &mut [T]) -> bool {
    if labels.len() < 2 {
        return false;
    }
    let mut i = labels.len() - 1;
    while i > 0 && labels[i - 1] >= labels[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = labels.len() - 1;
    while labels[j] <= labels[i - 1] {
        j -= 1;
    }
    labels.swap(i - 1, j);
    labels[i..].reverse();
    true
}

/// Straightforward NDKL: every prefix distribution is recounted from scratch.
pub fn reference_ndkl<F: Scalar>(labels: &[GroupId], target: &BTreeMap<GroupId, F>) -> F {
    let mut numerator = F::zero();
    let mut z = F::zero();
    for k in 1..=labels.len() {
        let mut counts: BTreeMap<GroupId, usize> = BTreeMap::new();
        for g in &labels[..k] {
            *counts.entry(*g).or_default() += 1;
        }
        let mut kl = F::zero();
        for (g, c) in counts {
            let q = F::from_count(c) / F::from_count(k);
            kl = kl + q * (q / target[&g]).ln();
        }
        let w = F::one() / (F::from_count(k) + F::one()).log2();
        numerator = numerator + w * kl;
        z = z + w;
    }
    numerator / z
}

/// Exact NDKL extremes over all distinct arrangements of `spec`, guarded at
/// [`DEFAULT_GUARD`] items.
pub fn enumerate_ndkl_extremes<F: Scalar>(
    spec: &MultisetSpec,
    target: &GroupDistribution<F>,
) -> Result<ExtremeResult<F>> {
    enumerate_ndkl_extremes_with(spec, target, DEFAULT_GUARD, |_, _| {})
}

/// As [`enumerate_ndkl_extremes`] with an explicit size limit; `visit` sees
/// every arrangement together with its NDKL.
pub fn enumerate_ndkl_extremes_with<F: Scalar>(
    spec: &MultisetSpec,
    target: &GroupDistribution<F>,
    limit: usize,
    mut visit: impl FnMut(&[GroupId], F),
) -> Result<ExtremeResult<F>> {
    let n = spec.n();
    if n > limit {
        return Err(Error::TooLarge { n, limit });
    }
    if n == 0 {
        return Err(Error::EmptyRanking);
    }
    let mut masses = BTreeMap::new();
    for &g in spec.group_counts.keys() {
        let p = target.mass(g);
        if p <= F::zero() {
            return Err(Error::ZeroTargetMass(g));
        }
        masses.insert(g, p);
    }
    let mut labels = spec.sorted_labels();
    let first = reference_ndkl(&labels, &masses);
    let mut result = ExtremeResult {
        min_value: first,
        max_value: first,
        argmin: labels.clone(),
        argmax: labels.clone(),
        permutations_examined: 0,
    };
    loop {
        let value = reference_ndkl(&labels, &masses);
        visit(&labels, value);
        result.permutations_examined += 1;
        if value < result.min_value {
            result.min_value = value;
            result.argmin.clone_from(&labels);
        }
        if value > result.max_value {
            result.max_value = value;
            result.argmax.clone_from(&labels);
        }
        if !next_permutation(&mut labels) {
            break;
        }
    }
    Ok(result)
}

/// JSON shape of an oracle run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub min: f64,
    pub max: f64,
    pub argmin: Vec<GroupId>,
    pub argmax: Vec<GroupId>,
    pub bound: f64,
    pub examined: u128,
}

impl OracleReport {
    pub fn new<F: Scalar>(
        result: &ExtremeResult<F>,
        target: &GroupDistribution<F>,
    ) -> Result<Self> {
        Ok(OracleReport {
            min: result.min_value.to_f64().unwrap(),
            max: result.max_value.to_f64().unwrap(),
            argmin: result.argmin.clone(),
            argmax: result.argmax.clone(),
            bound: ndkl_upper_bound(&target.support())?.to_f64().unwrap(),
            examined: result.permutations_examined,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation<F> {
    pub position: usize,
    pub chosen: GroupId,
    pub chosen_kl: F,
    pub best: GroupId,
    pub best_kl: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport<F> {
    pub steps_checked: usize,
    pub violations: Vec<Violation<F>>,
}

impl<F> VerificationReport<F> {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<&Violation<F>> {
        self.violations.first()
    }
}

/// Replays a trace and checks that every step picked a group of minimal
/// tentative KL among the groups the step listed as available. Recorded KL
/// values are ignored; only the sequence of choices is trusted.
pub fn verify_trace<F: Scalar>(
    trace: &AggregationTrace<F>,
    target: &GroupDistribution<F>,
) -> VerificationReport<F> {
    let mut placed: BTreeMap<GroupId, usize> = BTreeMap::new();
    let mut violations = Vec::new();
    for (i, step) in trace.steps.iter().enumerate() {
        let t = i + 1;
        let mut best: Option<(GroupId, F)> = None;
        let mut chosen_kl = F::infinity();
        for &(g, _) in &step.tentative_kl {
            let mut counts = placed.clone();
            *counts.entry(g).or_default() += 1;
            let kl = counts
                .iter()
                .filter(|(_, &c)| c > 0)
                .map(|(&h, &c)| {
                    let q = F::from_count(c) / F::from_count(t);
                    q * (q / target.mass(h)).ln()
                })
                .fold(F::zero(), |a, b| a + b);
            if g == step.group {
                chosen_kl = kl;
            }
            if best.is_none_or(|(_, b)| kl < b) {
                best = Some((g, kl));
            }
        }
        if let Some((best_group, best_kl)) = best {
            let slack = F::tie_tolerance() * best_kl.abs().max(F::one());
            if chosen_kl.is_nan() || chosen_kl > best_kl + slack {
                violations.push(Violation {
                    position: step.position,
                    chosen: step.group,
                    chosen_kl,
                    best: best_group,
                    best_kl,
                });
            }
        }
        *placed.entry(step.group).or_default() += 1;
    }
    VerificationReport {
        steps_checked: trace.steps.len(),
        violations,
    }
}
