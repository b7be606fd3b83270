//! Edge groups, node pairs and distributions over groups.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type NodeId = u32;

/// Unordered pair of attribute values, stored with `a <= b`.
///
/// For a binary attribute this yields three groups: `0-0`, `0-1` and `1-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId {
    a: u32,
    b: u32,
}

impl GroupId {
    pub const fn new(x: u32, y: u32) -> Self {
        if x <= y {
            GroupId { a: x, b: y }
        } else {
            GroupId { a: y, b: x }
        }
    }

    pub const fn attributes(self) -> (u32, u32) {
        (self.a, self.b)
    }

    /// Both endpoints share the attribute value.
    pub const fn is_intra(self) -> bool {
        self.a == self.b
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}

impl FromStr for GroupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("group id `{s}` is not of the form a-b"));
        let (x, y) = s.trim().split_once('-').ok_or_else(bad)?;
        let x = x.trim().parse().map_err(|_| bad())?;
        let y = y.trim().parse().map_err(|_| bad())?;
        Ok(GroupId::new(x, y))
    }
}

impl Serialize for GroupId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroupId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Unordered node pair with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub u: NodeId,
    pub v: NodeId,
}

impl Pair {
    /// Canonicalizes `(x, y)`; returns `None` for a self loop.
    pub fn new(x: NodeId, y: NodeId) -> Option<Self> {
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Some(Pair { u: x, v: y }),
            std::cmp::Ordering::Greater => Some(Pair { u: y, v: x }),
            std::cmp::Ordering::Equal => None,
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}", self.u, self.v)
    }
}

/// Probability vector over edge groups.
///
/// Groups may carry zero mass; they stay listed so callers see the zero
/// explicitly instead of an absent key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Serialize", deserialize = "F: Deserialize<'de>"))]
pub struct GroupDistribution<F> {
    probabilities: BTreeMap<GroupId, F>,
}

impl<F: Scalar> GroupDistribution<F> {
    /// Validates non-negativity and unit mass.
    pub fn new(probabilities: BTreeMap<GroupId, F>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidDistribution("no groups".into()));
        }
        let mut total = F::zero();
        for (g, &p) in &probabilities {
            if !p.is_finite() || p < F::zero() {
                return Err(Error::InvalidDistribution(format!(
                    "mass {p} for group {g}"
                )));
            }
            total = total + p;
        }
        if (total - F::one()).abs() > F::mass_tolerance() {
            return Err(Error::InvalidDistribution(format!("masses sum to {total}")));
        }
        Ok(GroupDistribution { probabilities })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: impl IntoIterator<Item = (GroupId, F)>) -> Result<Self> {
        let weights: BTreeMap<GroupId, F> = weights.into_iter().collect();
        let total: F = weights.values().copied().sum();
        if weights.values().any(|w| !w.is_finite() || *w < F::zero()) {
            return Err(Error::InvalidDistribution(
                "negative or non-finite weight".into(),
            ));
        }
        if total <= F::zero() {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Self::new(weights.into_iter().map(|(g, w)| (g, w / total)).collect())
    }

    /// Fractions of the given counts; zero counts stay listed.
    pub fn from_counts(counts: &BTreeMap<GroupId, usize>) -> Result<Self> {
        let total: usize = counts.values().sum();
        if total == 0 {
            return Err(Error::EmptyEdgeSet);
        }
        let total = F::from_count(total);
        Ok(GroupDistribution {
            probabilities: counts
                .iter()
                .map(|(&g, &c)| (g, F::from_count(c) / total))
                .collect(),
        })
    }

    /// Point mass on one group.
    pub fn point_mass(group: GroupId) -> Self {
        GroupDistribution {
            probabilities: BTreeMap::from([(group, F::one())]),
        }
    }

    /// Mass of `group`; unlisted groups have zero mass.
    pub fn mass(&self, group: GroupId) -> F {
        self.probabilities
            .get(&group)
            .copied()
            .unwrap_or_else(F::zero)
    }

    pub fn groups(&self) -> impl Iterator<Item = GroupId> + '_ {
        self.probabilities.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (GroupId, F)> + '_ {
        self.probabilities.iter().map(|(&g, &p)| (g, p))
    }

    pub fn as_map(&self) -> &BTreeMap<GroupId, F> {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Restriction to groups with positive mass.
    pub fn support(&self) -> Self {
        GroupDistribution {
            probabilities: self
                .probabilities
                .iter()
                .filter(|(_, p)| **p > F::zero())
                .map(|(&g, &p)| (g, p))
                .collect(),
        }
    }

    /// `(p + eps) / (1 + n * eps)` over the listed groups plus `extra` groups.
    ///
    /// Only applied when a caller opts in; observed groups with zero target
    /// mass are otherwise reported as errors.
    pub fn smoothed(&self, eps: F, extra: impl IntoIterator<Item = GroupId>) -> Self {
        let mut probabilities = self.probabilities.clone();
        for g in extra {
            probabilities.entry(g).or_insert_with(F::zero);
        }
        let norm = F::one() + eps * F::from_count(probabilities.len());
        for p in probabilities.values_mut() {
            *p = (*p + eps) / norm;
        }
        GroupDistribution { probabilities }
    }

    /// Converts to another scalar type.
    pub fn cast<G: Scalar>(&self) -> GroupDistribution<G> {
        GroupDistribution {
            probabilities: self
                .probabilities
                .iter()
                .map(|(&g, p)| {
                    (
                        g,
                        G::from_f64(p.to_f64().unwrap_or(0.0)).unwrap_or_else(G::zero),
                    )
                })
                .collect(),
        }
    }
}

/// Default epsilon for [`GroupDistribution::smoothed`].
pub const SMOOTHING_EPS: f64 = 1e-9;
