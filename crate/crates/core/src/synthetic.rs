//! Seeded community graphs with a binary sensitive attribute and a chosen
//! edge-group mix.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SensitiveGraph;
use crate::group::{GroupId, NodeId, Pair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub nodes: usize,
    /// Fraction of nodes with attribute 1.
    pub attribute_fraction: f64,
    pub communities: usize,
    /// Expected fraction of each group's edges that fall inside a community.
    pub community_share: f64,
    pub average_degree: f64,
    /// Expected share of edges per group.
    pub group_shares: BTreeMap<GroupId, f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            nodes: 2000,
            attribute_fraction: 0.4,
            communities: 50,
            community_share: 0.7,
            average_degree: 20.0,
            group_shares: BTreeMap::from([
                (GroupId::new(0, 0), 0.6),
                (GroupId::new(0, 1), 0.2),
                (GroupId::new(1, 1), 0.2),
            ]),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic graph: {m}")));
        if self.nodes < 4 || self.communities == 0 {
            return bad("need at least 4 nodes and one community");
        }
        if !(0.0..=1.0).contains(&self.attribute_fraction)
            || !(0.0..=1.0).contains(&self.community_share)
        {
            return bad("fractions must lie in [0, 1]");
        }
        if self.average_degree.is_nan() || self.average_degree <= 0.0 {
            return bad("average degree must be positive");
        }
        let sum: f64 = self.group_shares.values().sum();
        if (sum - 1.0).abs() > 1e-9 || self.group_shares.values().any(|&s| s < 0.0) {
            return bad("group shares must be non-negative and sum to 1");
        }
        if self.group_shares.keys().any(|g| g.attributes().1 > 1) {
            return bad("group shares refer to a non-binary attribute");
        }
        Ok(())
    }
}

/// Draws a graph: attributes and community labels are assigned at random,
/// then every node pair becomes an edge independently with a probability
/// that depends on its group and on whether it shares a community.
/// Probabilities come from exact pair counts, so group shares match
/// `group_shares` in expectation (up to capping at 1).
pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<SensitiveGraph> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.nodes;
    let ones = (n as f64 * config.attribute_fraction).round() as usize;
    let mut attributes: Vec<u32> = (0..n).map(|i| u32::from(i < ones)).collect();
    attributes.shuffle(&mut rng);
    let community: Vec<usize> = (0..n)
        .map(|_| rng.gen_range(0..config.communities))
        .collect();

    // exact pair counts per (group, same community)
    let mut sizes = vec![[0u64; 2]; config.communities];
    for i in 0..n {
        sizes[community[i]][attributes[i] as usize] += 1;
    }
    let total_of = |a: usize| sizes.iter().map(|s| s[a]).sum::<u64>();
    let (n0, n1) = (total_of(0), total_of(1));
    let choose2 = |x: u64| x * x.saturating_sub(1) / 2;
    let mut inside: BTreeMap<GroupId, u64> = BTreeMap::new();
    let mut all: BTreeMap<GroupId, u64> = BTreeMap::new();
    for (g, total) in [
        (GroupId::new(0, 0), choose2(n0)),
        (GroupId::new(0, 1), n0 * n1),
        (GroupId::new(1, 1), choose2(n1)),
    ] {
        let (a, b) = g.attributes();
        let within: u64 = sizes
            .iter()
            .map(|s| {
                if a == b {
                    choose2(s[a as usize])
                } else {
                    s[0] * s[1]
                }
            })
            .sum();
        inside.insert(g, within);
        all.insert(g, total);
    }

    let edges_expected = n as f64 * config.average_degree / 2.0;
    let prob = |expected: f64, pairs: u64| {
        if pairs == 0 {
            0.0
        } else {
            (expected / pairs as f64).min(1.0)
        }
    };
    let mut p_in = BTreeMap::new();
    let mut p_out = BTreeMap::new();
    for (&g, &within) in &inside {
        let share = config.group_shares.get(&g).copied().unwrap_or(0.0);
        let target = share * edges_expected;
        p_in.insert(g, prob(target * config.community_share, within));
        p_out.insert(
            g,
            prob(target * (1.0 - config.community_share), all[&g] - within),
        );
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let g = GroupId::new(attributes[u], attributes[v]);
            let p = if community[u] == community[v] {
                p_in[&g]
            } else {
                p_out[&g]
            };
            if rng.gen::<f64>() < p {
                edges.push(Pair {
                    u: u as NodeId,
                    v: v as NodeId,
                });
            }
        }
    }
    SensitiveGraph::from_attributes(attributes, edges)
}
