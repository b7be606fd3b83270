//! Stratified edge splits and per-group negative sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{format_edges, load_edges, SensitiveGraph};
use crate::group::{GroupId, Pair};
use crate::io::write_atomic;

/// Train / validation / test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            valid: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, valid, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        let ok = parts.iter().all(|x| x.is_finite() && *x > 0.0)
            && (parts.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidRatios(parts.to_vec()))
        }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: BTreeSet<Pair>,
    pub valid: BTreeSet<Pair>,
    pub test: BTreeSet<Pair>,
    pub seed: u64,
}

/// Apportions `total` items to `weights` by largest remainder. Ties in the
/// fractional part go to the earlier slot.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = quotas[i] - quotas[i].floor();
        let fj = quotas[j] - quotas[j].floor();
        fj.partial_cmp(&fi).unwrap().then(i.cmp(&j))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Splits the graph's edges group by group so each part keeps the graph's
/// group proportions up to one edge per group.
pub fn stratified_split(
    graph: &SensitiveGraph,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitResult> {
    ratios.validate()?;
    let mut by_group: BTreeMap<GroupId, Vec<Pair>> = BTreeMap::new();
    for e in graph.edges() {
        by_group
            .entry(graph.edge_group(e.u, e.v)?)
            .or_default()
            .push(*e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitResult {
        train: BTreeSet::new(),
        valid: BTreeSet::new(),
        test: BTreeSet::new(),
        seed,
    };
    for (group, mut edges) in by_group {
        if edges.len() < 3 {
            return Err(Error::GroupTooSmall(group, edges.len()));
        }
        edges.shuffle(&mut rng);
        let sizes = largest_remainder(edges.len(), &ratios.as_array());
        let (train, rest) = edges.split_at(sizes[0]);
        let (valid, test) = rest.split_at(sizes[1]);
        out.train.extend(train);
        out.valid.extend(valid);
        out.test.extend(test);
    }
    Ok(out)
}

/// Contents of `manifest.json` written next to the split edge files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub counts: BTreeMap<GroupId, [usize; 3]>,
}

impl SplitManifest {
    pub fn new(graph: &SensitiveGraph, split: &SplitResult, ratios: SplitRatios) -> Result<Self> {
        let parts = [&split.train, &split.valid, &split.test];
        let mut counts: BTreeMap<GroupId, [usize; 3]> = BTreeMap::new();
        for (i, part) in parts.iter().enumerate() {
            for (g, c) in graph.group_counts(part.iter())? {
                counts.entry(g).or_default()[i] = c;
            }
        }
        Ok(SplitManifest {
            seed: split.seed,
            ratios,
            counts,
        })
    }
}

/// Writes `train.tsv`, `valid.tsv`, `test.tsv` and `manifest.json` into `dir`.
pub fn write_split(
    dir: &Path,
    graph: &SensitiveGraph,
    split: &SplitResult,
    ratios: SplitRatios,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(
        &dir.join("train.tsv"),
        format_edges(&split.train).as_bytes(),
    )?;
    write_atomic(
        &dir.join("valid.tsv"),
        format_edges(&split.valid).as_bytes(),
    )?;
    write_atomic(&dir.join("test.tsv"), format_edges(&split.test).as_bytes())?;
    let manifest = SplitManifest::new(graph, split, ratios)?;
    write_atomic(
        &dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(())
}

/// Reads a split written by [`write_split`].
pub fn read_split(dir: &Path) -> Result<SplitResult> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: SplitManifest = serde_json::from_str(&text)?;
    Ok(SplitResult {
        train: load_edges(&dir.join("train.tsv"))?,
        valid: load_edges(&dir.join("valid.tsv"))?,
        test: load_edges(&dir.join("test.tsv"))?,
        seed: manifest.seed,
    })
}

/// Samples non-edges uniformly within each requested group.
///
/// Sparse groups use rejection sampling; when the request is at least half of
/// the available non-edges, the group's non-edges are enumerated instead.
pub fn sample_negatives(
    graph: &SensitiveGraph,
    per_group: &BTreeMap<GroupId, usize>,
    seed: u64,
) -> Result<BTreeSet<Pair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair_counts = graph.pair_counts();
    let edge_counts = graph.group_counts(graph.edges())?;
    let mut out = BTreeSet::new();
    for (&group, &requested) in per_group {
        if requested == 0 {
            continue;
        }
        let total = pair_counts.get(&group).copied().unwrap_or(0);
        let available =
            total.saturating_sub(edge_counts.get(&group).copied().unwrap_or(0) as u64) as usize;
        if requested > available {
            return Err(Error::NotEnoughNonEdges {
                group,
                requested,
                available,
            });
        }
        let (a, b) = group.attributes();
        let left = graph.nodes_with_attribute(a);
        let right = if a == b {
            left.clone()
        } else {
            graph.nodes_with_attribute(b)
        };

        let mut chosen = BTreeSet::new();
        if requested.saturating_mul(2) <= available {
            while chosen.len() < requested {
                let pair = if a == b {
                    let i = rng.gen_range(0..left.len());
                    let mut j = rng.gen_range(0..left.len() - 1);
                    if j >= i {
                        j += 1;
                    }
                    Pair::new(left[i], left[j])
                } else {
                    Pair::new(
                        left[rng.gen_range(0..left.len())],
                        right[rng.gen_range(0..right.len())],
                    )
                };
                let pair = pair.expect("distinct endpoints");
                if !graph.has_edge(pair) {
                    chosen.insert(pair);
                }
            }
        } else {
            let mut all = Vec::with_capacity(available);
            for (i, &x) in left.iter().enumerate() {
                let partners = if a == b { &right[i + 1..] } else { &right[..] };
                for &y in partners {
                    let pair = Pair::new(x, y).expect("distinct endpoints");
                    if !graph.has_edge(pair) {
                        all.push(pair);
                    }
                }
            }
            chosen.extend(all.choose_multiple(&mut rng, requested).copied());
        }
        out.extend(chosen);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(u: u32, v: u32) -> Pair {
        Pair::new(u, v).unwrap()
    }

    fn path_graph(n: u32, attr: impl Fn(u32) -> u32) -> SensitiveGraph {
        let attrs = (0..n).map(attr).collect();
        SensitiveGraph::from_attributes(attrs, (0..n - 1).map(|i| p(i, i + 1))).unwrap()
    }

    #[test]
    fn largest_remainder_preserves_total() {
        assert_eq!(largest_remainder(100, &[0.7, 0.1, 0.2]), vec![70, 10, 20]);
        assert_eq!(largest_remainder(3, &[0.7, 0.1, 0.2]), vec![2, 0, 1]);
        assert_eq!(
            largest_remainder(7, &[1.0, 1.0, 1.0]).iter().sum::<usize>(),
            7
        );
    }

    #[test]
    fn single_group_hundred_edges() {
        let g = path_graph(101, |_| 0);
        let s = stratified_split(&g, SplitRatios::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (70, 10, 20));
        let union: BTreeSet<Pair> = s
            .train
            .iter()
            .chain(&s.valid)
            .chain(&s.test)
            .copied()
            .collect();
        assert_eq!(&union, g.edges());
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let g = path_graph(200, |i| i % 2);
        let a = stratified_split(&g, SplitRatios::default(), 42).unwrap();
        let b = stratified_split(&g, SplitRatios::default(), 42).unwrap();
        let c = stratified_split(&g, SplitRatios::default(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn tiny_group_cannot_be_stratified() {
        // two 0-0 edges, rest 0-1
        let g = SensitiveGraph::from_attributes(
            vec![0, 0, 0, 1],
            [p(0, 1), p(1, 2), p(2, 3), p(0, 3), p(1, 3)],
        )
        .unwrap();
        assert!(matches!(
            stratified_split(&g, SplitRatios::default(), 0),
            Err(Error::GroupTooSmall(grp, 2)) if grp == GroupId::new(0, 0)
        ));
    }

    #[test]
    fn bad_ratios_rejected() {
        assert!(SplitRatios::new(0.7, 0.2, 0.2).is_err());
        assert!(SplitRatios::new(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let n = 5;
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| p(i, j)));
        let g = SensitiveGraph::from_attributes(vec![0; n as usize], edges).unwrap();
        let req = BTreeMap::from([(GroupId::new(0, 0), 1)]);
        assert!(matches!(
            sample_negatives(&g, &req, 0),
            Err(Error::NotEnoughNonEdges { available: 0, .. })
        ));
    }

    #[test]
    fn empty_graph_only_candidates() {
        let g = SensitiveGraph::from_attributes(vec![1, 1, 0, 0], []).unwrap();
        let req = BTreeMap::from([(GroupId::new(1, 1), 1)]);
        let got = sample_negatives(&g, &req, 9).unwrap();
        assert_eq!(got.into_iter().collect::<Vec<_>>(), vec![p(0, 1)]);
    }

    #[test]
    fn exhausting_a_group_returns_every_non_edge() {
        let g = SensitiveGraph::from_attributes(vec![0, 0, 0, 1], [p(0, 1)]).unwrap();
        let req = BTreeMap::from([(GroupId::new(0, 0), 2)]);
        let got = sample_negatives(&g, &req, 3).unwrap();
        assert_eq!(got, BTreeSet::from([p(0, 2), p(1, 2)]));
    }
}
