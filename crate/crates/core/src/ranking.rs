//! Scored candidates, per-group candidate lists and rankings.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupId, NodeId, Pair};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate<F> {
    pub u: NodeId,
    pub v: NodeId,
    pub score: F,
    pub group: GroupId,
    /// The pair is a held-out true edge.
    pub relevant: bool,
}

impl<F: Scalar> ScoredCandidate<F> {
    pub fn new(pair: Pair, score: F, group: GroupId, relevant: bool) -> Self {
        ScoredCandidate {
            u: pair.u,
            v: pair.v,
            score,
            group,
            relevant,
        }
    }

    pub fn pair(&self) -> Pair {
        Pair {
            u: self.u,
            v: self.v,
        }
    }
}

/// Descending score, then ascending `(u, v)`.
pub fn by_score_desc<F: Scalar>(a: &ScoredCandidate<F>, b: &ScoredCandidate<F>) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| (a.u, a.v).cmp(&(b.u, b.v)))
}

/// One score-sorted candidate list per group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedCandidateSet<F> {
    lists: BTreeMap<GroupId, Vec<ScoredCandidate<F>>>,
}

impl<F: Scalar> GroupedCandidateSet<F> {
    /// Routes candidates to their group's list and sorts each list.
    ///
    /// Every group in `groups` gets a (possibly empty) list.
    pub fn new(
        groups: impl IntoIterator<Item = GroupId>,
        candidates: impl IntoIterator<Item = ScoredCandidate<F>>,
    ) -> Result<Self> {
        let mut lists: BTreeMap<GroupId, Vec<ScoredCandidate<F>>> =
            groups.into_iter().map(|g| (g, Vec::new())).collect();
        let mut seen = BTreeSet::new();
        for c in candidates {
            if !c.score.is_finite() {
                return Err(Error::NonFiniteScore(c.u, c.v));
            }
            if !seen.insert(c.pair()) {
                return Err(Error::DuplicatePair(c.u, c.v));
            }
            lists.entry(c.group).or_default().push(c);
        }
        for list in lists.values_mut() {
            list.sort_by(by_score_desc);
        }
        Ok(GroupedCandidateSet { lists })
    }

    pub fn lists(&self) -> &BTreeMap<GroupId, Vec<ScoredCandidate<F>>> {
        &self.lists
    }

    pub fn list(&self, group: GroupId) -> &[ScoredCandidate<F>] {
        self.lists.get(&group).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn groups(&self) -> impl Iterator<Item = GroupId> + '_ {
        self.lists.keys().copied()
    }

    pub fn total_len(&self) -> usize {
        self.lists.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_len() == 0
    }

    pub fn sizes(&self) -> BTreeMap<GroupId, usize> {
        self.lists.iter().map(|(&g, l)| (g, l.len())).collect()
    }

    pub fn positives(&self) -> usize {
        self.lists.values().flatten().filter(|c| c.relevant).count()
    }

    /// Single ranking that merges all groups by raw score (the "naive"
    /// baseline that ignores score-scale differences between groups).
    pub fn naive_merge(&self, n: usize) -> Ranking<F> {
        let mut all: Vec<ScoredCandidate<F>> = self.lists.values().flatten().copied().collect();
        all.sort_by(by_score_desc);
        all.truncate(n);
        Ranking { entries: all }
    }
}

/// Ordered candidates, position 1 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: Deserialize<'de>"))]
pub struct Ranking<F> {
    entries: Vec<ScoredCandidate<F>>,
}

impl<F: Scalar> Ranking<F> {
    pub fn new(entries: Vec<ScoredCandidate<F>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &entries {
            if !seen.insert(c.pair()) {
                return Err(Error::DuplicatePair(c.u, c.v));
            }
        }
        Ok(Ranking { entries })
    }

    /// Ranking of synthetic, all-relevant candidates carrying the given
    /// group labels. Entry `i` gets the pair `(2i, 2i + 1)` and a score
    /// decreasing with position.
    pub fn from_groups(labels: &[GroupId]) -> Self {
        let n = labels.len();
        let entries = labels
            .iter()
            .enumerate()
            .map(|(i, &g)| ScoredCandidate {
                u: 2 * i as NodeId,
                v: 2 * i as NodeId + 1,
                score: F::from_count(n - i),
                group: g,
                relevant: true,
            })
            .collect();
        Ranking { entries }
    }

    pub(crate) fn from_entries_unchecked(entries: Vec<ScoredCandidate<F>>) -> Self {
        Ranking { entries }
    }

    pub fn entries(&self) -> &[ScoredCandidate<F>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn groups(&self) -> Vec<GroupId> {
        self.entries.iter().map(|c| c.group).collect()
    }

    pub fn flags(&self) -> Vec<bool> {
        self.entries.iter().map(|c| c.relevant).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(u: u32, v: u32, score: f64, g: (u32, u32)) -> ScoredCandidate<f64> {
        ScoredCandidate::new(
            Pair::new(u, v).unwrap(),
            score,
            GroupId::new(g.0, g.1),
            false,
        )
    }

    #[test]
    fn lists_are_sorted_with_lexicographic_ties() {
        let set = GroupedCandidateSet::new(
            [GroupId::new(0, 0)],
            vec![
                cand(3, 4, 0.5, (0, 0)),
                cand(1, 2, 0.9, (0, 0)),
                cand(0, 5, 0.5, (0, 0)),
            ],
        )
        .unwrap();
        let order: Vec<(u32, u32)> = set
            .list(GroupId::new(0, 0))
            .iter()
            .map(|c| (c.u, c.v))
            .collect();
        assert_eq!(order, vec![(1, 2), (0, 5), (3, 4)]);
    }

    #[test]
    fn duplicates_and_nan_are_rejected() {
        let dup =
            GroupedCandidateSet::new([], vec![cand(0, 1, 0.1, (0, 0)), cand(0, 1, 0.2, (0, 0))]);
        assert!(matches!(dup, Err(Error::DuplicatePair(0, 1))));
        let nan = GroupedCandidateSet::new([], vec![cand(0, 1, f64::NAN, (0, 0))]);
        assert!(matches!(nan, Err(Error::NonFiniteScore(0, 1))));
    }

    #[test]
    fn empty_candidates_keep_group_lists() {
        let set = GroupedCandidateSet::<f64>::new([GroupId::new(0, 0), GroupId::new(0, 1)], vec![])
            .unwrap();
        assert_eq!(set.lists().len(), 2);
        assert!(set.is_empty());
    }

    #[test]
    fn naive_merge_orders_by_raw_score() {
        let set = GroupedCandidateSet::new(
            [],
            vec![
                cand(0, 1, 0.2, (0, 0)),
                cand(2, 3, 0.9, (0, 1)),
                cand(4, 5, 0.5, (1, 1)),
            ],
        )
        .unwrap();
        let r = set.naive_merge(2);
        assert_eq!(r.groups(), vec![GroupId::new(0, 1), GroupId::new(1, 1)]);
    }
}
