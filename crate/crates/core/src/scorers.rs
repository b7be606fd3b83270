//! Link scorers: neighborhood heuristics, embedding dot products and
//! ingestion of externally computed scores.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::SensitiveGraph;
use crate::group::{GroupId, NodeId, Pair};
use crate::ranking::{GroupedCandidateSet, ScoredCandidate};
use crate::scalar::Scalar;

fn intersection<'a>(a: &'a [NodeId], b: &'a [NodeId]) -> impl Iterator<Item = NodeId> + 'a {
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || {
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let w = a[i];
                    i += 1;
                    j += 1;
                    return Some(w);
                }
            }
        }
        None
    })
}

/// `|N(u) ∩ N(v)|`.
pub fn common_neighbors<F: Scalar>(graph: &SensitiveGraph, u: NodeId, v: NodeId) -> Result<F> {
    let (nu, nv) = (graph.neighbors(u)?, graph.neighbors(v)?);
    Ok(F::from_count(intersection(nu, nv).count()))
}

/// `Σ 1 / ln deg(w)` over shared neighbors `w`. A shared neighbor touches both
/// endpoints, so its degree is at least 2.
pub fn adamic_adar<F: Scalar>(graph: &SensitiveGraph, u: NodeId, v: NodeId) -> Result<F> {
    let (nu, nv) = (graph.neighbors(u)?, graph.neighbors(v)?);
    let mut total = F::zero();
    for w in intersection(nu, nv) {
        total = total + F::one() / F::from_count(graph.degree(w)?).ln();
    }
    Ok(total)
}

/// Number of paths `u - x - y - v` with `x != v`, `y != u`.
///
/// Used in place of common neighbors on the bipartite subgraph of a mixed
/// group, where two endpoints of different attributes cannot share a
/// neighbor.
pub fn path3_count<F: Scalar>(graph: &SensitiveGraph, u: NodeId, v: NodeId) -> Result<F> {
    let nv = graph.neighbors(v)?;
    let mut count = 0usize;
    for &x in graph.neighbors(u)? {
        if x == v {
            continue;
        }
        count += intersection(graph.neighbors(x)?, nv)
            .filter(|&y| y != u)
            .count();
    }
    Ok(F::from_count(count))
}

/// Degree-penalized path count: each path `u - x - y - v` contributes
/// `1 / ln(deg(x) deg(y))`. Both inner nodes have degree at least 2.
pub fn path3_adamic_adar<F: Scalar>(graph: &SensitiveGraph, u: NodeId, v: NodeId) -> Result<F> {
    let nv = graph.neighbors(v)?;
    let mut total = F::zero();
    for &x in graph.neighbors(u)? {
        if x == v {
            continue;
        }
        let dx = F::from_count(graph.degree(x)?);
        for y in intersection(graph.neighbors(x)?, nv).filter(|&y| y != u) {
            total = total + F::one() / (dx * F::from_count(graph.degree(y)?)).ln();
        }
    }
    Ok(total)
}

/// Node embeddings of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings<F> {
    dim: usize,
    vectors: HashMap<NodeId, Vec<F>>,
}

impl<F: Scalar> Embeddings<F> {
    pub fn new(dim: usize, vectors: HashMap<NodeId, Vec<F>>) -> Result<Self> {
        if let Some(bad) = vectors.values().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch(dim, bad.len()));
        }
        Ok(Embeddings { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, node: NodeId) -> Result<&[F]> {
        self.vectors
            .get(&node)
            .map(Vec::as_slice)
            .ok_or(Error::MissingEmbedding(node))
    }

    /// Parses `n dim` followed by `node_id v1 ... vdim` lines.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::malformed(origin, 1, "missing header"))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::malformed(origin, hline, "header must be `n dim`"))
            })
            .collect::<Result<_>>()?;
        let [n, dim] = head[..] else {
            return Err(Error::malformed(origin, hline, "header must be `n dim`"));
        };
        let mut vectors = HashMap::with_capacity(n);
        for (line_no, line) in lines {
            let mut fields = line.split_whitespace();
            let node: NodeId = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::malformed(origin, line_no, "bad node id"))?;
            let values: Vec<F> = fields
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .and_then(F::from_f64)
                        .ok_or_else(|| {
                            Error::malformed(origin, line_no, format!("bad value `{s}`"))
                        })
                })
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(Error::DimensionMismatch(dim, values.len()));
            }
            vectors.insert(node, values);
        }
        if vectors.len() != n {
            return Err(Error::malformed(
                origin,
                hline,
                format!("header declares {n} rows, found {}", vectors.len()),
            ));
        }
        Ok(Embeddings { dim, vectors })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Inner product of the two nodes' embeddings.
pub fn embedding_dot<F: Scalar>(embeddings: &Embeddings<F>, u: NodeId, v: NodeId) -> Result<F> {
    let (a, b) = (embeddings.get(u)?, embeddings.get(v)?);
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x * y).sum())
}

#[derive(Debug, Clone)]
pub enum Scorer<F> {
    CommonNeighbors,
    AdamicAdar,
    Embedding(Embeddings<F>),
}

impl<F: Scalar> Scorer<F> {
    fn heuristic(
        &self,
        graph: &SensitiveGraph,
        u: NodeId,
        v: NodeId,
        bipartite: bool,
    ) -> Result<F> {
        match (self, bipartite) {
            (Scorer::CommonNeighbors, false) => common_neighbors(graph, u, v),
            (Scorer::CommonNeighbors, true) => path3_count(graph, u, v),
            (Scorer::AdamicAdar, false) => adamic_adar(graph, u, v),
            (Scorer::AdamicAdar, true) => path3_adamic_adar(graph, u, v),
            (Scorer::Embedding(e), _) => embedding_dot(e, u, v),
        }
    }
}

/// Scores every candidate and routes it to its group's list.
///
/// `graph` holds the training edges. With `decoupled`, heuristic scorers see
/// only the training edges of the candidate's own group; for a mixed group
/// that subgraph is bipartite, so the heuristic switches to its length-3 path
/// form. Embedding scores do not depend on the flag.
pub fn score_candidates<F: Scalar>(
    graph: &SensitiveGraph,
    candidates: &[Pair],
    relevant: &BTreeSet<Pair>,
    scorer: &Scorer<F>,
    decoupled: bool,
) -> Result<GroupedCandidateSet<F>> {
    let mut restricted: BTreeMap<GroupId, SensitiveGraph> = BTreeMap::new();
    let mut scored = Vec::with_capacity(candidates.len());
    for &pair in candidates {
        let group = graph.edge_group(pair.u, pair.v)?;
        let score = if decoupled && !matches!(scorer, Scorer::Embedding(_)) {
            let sub = restricted
                .entry(group)
                .or_insert_with(|| graph.restrict_to_group(group));
            scorer.heuristic(sub, pair.u, pair.v, !group.is_intra())?
        } else {
            scorer.heuristic(graph, pair.u, pair.v, false)?
        };
        scored.push(ScoredCandidate::new(
            pair,
            score,
            group,
            relevant.contains(&pair),
        ));
    }
    GroupedCandidateSet::new(graph.groups(), scored)
}

/// Parses `u<TAB>v<TAB>score` lines into grouped candidates. Relevance is
/// membership in `test_edges`.
pub fn parse_scores<F: Scalar>(
    text: &str,
    origin: &str,
    graph: &SensitiveGraph,
    test_edges: &BTreeSet<Pair>,
) -> Result<GroupedCandidateSet<F>> {
    let mut seen = BTreeSet::new();
    let mut scored = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 3 {
            return Err(Error::malformed(
                origin,
                line_no,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let node = |s: &str| {
            s.parse::<NodeId>()
                .map_err(|_| Error::malformed(origin, line_no, format!("`{s}` is not a node id")))
        };
        let (u, v) = (node(fields[0])?, node(fields[1])?);
        let score = fields[2]
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .and_then(F::from_f64)
            .ok_or_else(|| {
                Error::malformed(
                    origin,
                    line_no,
                    format!("`{}` is not a finite score", fields[2]),
                )
            })?;
        let pair = Pair::new(u, v).ok_or_else(|| Error::SelfLoop {
            path: origin.to_string(),
            line: line_no,
            node: u,
        })?;
        if !seen.insert(pair) {
            return Err(Error::DuplicatePair(pair.u, pair.v));
        }
        let group = graph.edge_group(u, v)?;
        scored.push(ScoredCandidate::new(
            pair,
            score,
            group,
            test_edges.contains(&pair),
        ));
    }
    GroupedCandidateSet::new(graph.groups(), scored)
}

pub fn ingest_scores<F: Scalar>(
    score_file: &Path,
    graph: &SensitiveGraph,
    test_edges: &BTreeSet<Pair>,
) -> Result<GroupedCandidateSet<F>> {
    let text = std::fs::read_to_string(score_file).map_err(|e| Error::io(score_file, e))?;
    parse_scores(&text, &score_file.display().to_string(), graph, test_edges)
}

/// Renders a score file, groups in canonical order, each list best first.
pub fn format_scores<F: Scalar>(set: &GroupedCandidateSet<F>) -> String {
    let mut out = String::new();
    for c in set.lists().values().flatten() {
        out.push_str(&format!("{}\t{}\t{}\n", c.u, c.v, c.score));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(u: u32, v: u32) -> Pair {
        Pair::new(u, v).unwrap()
    }

    fn star(leaves: u32) -> SensitiveGraph {
        SensitiveGraph::from_attributes(vec![0; leaves as usize + 1], (1..=leaves).map(|l| p(0, l)))
            .unwrap()
    }

    #[test]
    fn common_neighbor_cases() {
        let tri =
            SensitiveGraph::from_attributes(vec![0, 0, 0], [p(0, 1), p(1, 2), p(0, 2)]).unwrap();
        assert_eq!(common_neighbors::<f64>(&tri, 0, 1).unwrap(), 1.0);
        let split = SensitiveGraph::from_attributes(vec![0, 0, 0, 0], [p(0, 1), p(2, 3)]).unwrap();
        assert_eq!(common_neighbors::<f64>(&split, 0, 3).unwrap(), 0.0);
        let s = star(4);
        assert_eq!(common_neighbors::<f64>(&s, 0, 2).unwrap(), 0.0);
        assert_eq!(common_neighbors::<f64>(&s, 1, 2).unwrap(), 1.0);
        assert!(matches!(
            common_neighbors::<f64>(&s, 1, 99),
            Err(Error::UnknownNode(99))
        ));
    }

    #[test]
    fn adamic_adar_cases() {
        // 0 and 1 share 2 (degree 2) and 3 (degree 3, also tied to 4)
        let g = SensitiveGraph::from_attributes(
            vec![0; 5],
            [p(0, 2), p(1, 2), p(0, 3), p(1, 3), p(3, 4)],
        )
        .unwrap();
        let expected = 1.0 / 2f64.ln() + 1.0 / 3f64.ln();
        assert_relative_eq!(
            adamic_adar::<f64>(&g, 0, 1).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_relative_eq!(expected, 2.3530, epsilon = 1e-4);

        let path = SensitiveGraph::from_attributes(vec![0; 3], [p(0, 1), p(1, 2)]).unwrap();
        assert_relative_eq!(
            adamic_adar::<f64>(&path, 0, 2).unwrap(),
            1.0 / 2f64.ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(1.0 / 2f64.ln(), std::f64::consts::LOG2_E, epsilon = 1e-12);
        assert_eq!(adamic_adar::<f64>(&path, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn path3_on_bipartite_square() {
        // 0 - 1 - 2 - 3 with attributes alternating: paths of length 3 from 0 to 3
        let g =
            SensitiveGraph::from_attributes(vec![0, 1, 0, 1], [p(0, 1), p(1, 2), p(2, 3)]).unwrap();
        assert_eq!(path3_count::<f64>(&g, 0, 3).unwrap(), 1.0);
        assert_relative_eq!(
            path3_adamic_adar::<f64>(&g, 0, 3).unwrap(),
            1.0 / 4f64.ln(),
            epsilon = 1e-12
        );
        // the existing edge (0, 1) does not count itself through degenerate walks
        assert_eq!(path3_count::<f64>(&g, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn embedding_dot_cases() {
        let e = Embeddings::<f64>::parse("3 2\n0 1 0\n1 0 1\n2 1 2\n", "mem").unwrap();
        assert_eq!(embedding_dot(&e, 0, 0).unwrap(), 1.0);
        assert_eq!(embedding_dot(&e, 0, 1).unwrap(), 0.0);
        let f = Embeddings::<f64>::parse("2 2\n0 1 2\n1 3 -1\n", "mem").unwrap();
        assert_eq!(embedding_dot(&f, 0, 1).unwrap(), 1.0);
        assert!(matches!(
            embedding_dot(&f, 0, 5),
            Err(Error::MissingEmbedding(5))
        ));
        assert!(matches!(
            Embeddings::<f64>::parse("1 3\n0 1 2\n", "mem"),
            Err(Error::DimensionMismatch(3, 2))
        ));
    }

    #[test]
    fn empty_candidate_set_gives_empty_lists() {
        let g = SensitiveGraph::from_attributes(vec![0, 1], []).unwrap();
        let set =
            score_candidates::<f64>(&g, &[], &BTreeSet::new(), &Scorer::CommonNeighbors, true)
                .unwrap();
        assert_eq!(set.lists().len(), 3);
        assert!(set.is_empty());
    }

    #[test]
    fn decoupling_is_noop_for_non_interacting_groups() {
        // component {0,1,2,3} all attribute 0, component {4,5,6,7} all attribute 1
        let attrs = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let edges = [
            p(0, 1),
            p(1, 2),
            p(2, 3),
            p(0, 2),
            p(4, 5),
            p(5, 6),
            p(6, 7),
            p(4, 6),
        ];
        let g = SensitiveGraph::from_attributes(attrs, edges).unwrap();
        let mut cands = Vec::new();
        for u in 0..8 {
            for v in u + 1..8 {
                let pr = p(u, v);
                if !g.has_edge(pr) {
                    cands.push(pr);
                }
            }
        }
        for scorer in [Scorer::CommonNeighbors, Scorer::AdamicAdar] {
            let a = score_candidates::<f64>(&g, &cands, &BTreeSet::new(), &scorer, false).unwrap();
            let b = score_candidates::<f64>(&g, &cands, &BTreeSet::new(), &scorer, true).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn decoupled_counts_only_same_group_neighbors() {
        // 0,1,2 have attribute 0; 3 has attribute 1.
        // 0 and 1 share neighbor 2 (0-0 edges) and neighbor 3 (0-1 edges).
        let attrs = vec![0, 0, 0, 1];
        let g =
            SensitiveGraph::from_attributes(attrs, [p(0, 2), p(1, 2), p(0, 3), p(1, 3)]).unwrap();
        let hand = SensitiveGraph::from_attributes(vec![0, 0, 0, 1], [p(0, 2), p(1, 2)]).unwrap();
        let cands = [p(0, 1)];
        let coupled = score_candidates::<f64>(
            &g,
            &cands,
            &BTreeSet::new(),
            &Scorer::CommonNeighbors,
            false,
        )
        .unwrap();
        let decoupled =
            score_candidates::<f64>(&g, &cands, &BTreeSet::new(), &Scorer::CommonNeighbors, true)
                .unwrap();
        let grp = GroupId::new(0, 0);
        assert_eq!(coupled.list(grp)[0].score, 2.0);
        assert_eq!(
            decoupled.list(grp)[0].score,
            common_neighbors::<f64>(&hand, 0, 1).unwrap()
        );
        assert_eq!(decoupled.list(grp)[0].score, 1.0);
    }

    #[test]
    fn routing_and_relevance() {
        let g =
            SensitiveGraph::from_attributes(vec![0, 0, 1, 1], [p(0, 1), p(2, 3), p(1, 2)]).unwrap();
        let cands = [p(0, 2), p(0, 3), p(1, 3)];
        let rel = BTreeSet::from([p(0, 3)]);
        let set =
            score_candidates::<f64>(&g, &cands, &rel, &Scorer::CommonNeighbors, false).unwrap();
        for c in set.lists().values().flatten() {
            assert_eq!(c.group, g.edge_group(c.u, c.v).unwrap());
            assert_eq!(c.relevant, c.pair() == p(0, 3));
        }
        assert_eq!(set.list(GroupId::new(0, 1)).len(), 3);
    }

    #[test]
    fn ingest_cases() {
        let g = SensitiveGraph::from_attributes(vec![0, 0, 1, 1], []).unwrap();
        let test = BTreeSet::from([p(0, 1)]);
        let one = parse_scores::<f64>("0 1 0.9\n", "mem", &g, &test).unwrap();
        let c = one.list(GroupId::new(0, 0))[0];
        assert!(c.relevant);
        assert_eq!(c.score, 0.9);

        let dup = parse_scores::<f64>("0\t1\t0.9\n1\t0\t0.3\n", "mem", &g, &test);
        assert!(matches!(dup, Err(Error::DuplicatePair(0, 1))));

        let six = "0\t1\t0.1\n0\t2\t0.2\n0\t3\t0.3\n1\t2\t0.4\n1\t3\t0.5\n2\t3\t0.6\n";
        let set = parse_scores::<f64>(six, "mem", &g, &test).unwrap();
        let sizes = set.sizes();
        assert_eq!(sizes.values().sum::<usize>(), 6);
        assert_eq!(sizes[&GroupId::new(0, 1)], 4);

        assert!(matches!(
            parse_scores::<f64>("0 9 0.1\n", "mem", &g, &test),
            Err(Error::UnknownNode(9))
        ));
        assert!(matches!(
            parse_scores::<f64>("0 1\n", "mem", &g, &test),
            Err(Error::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_scores::<f64>("0 1 nan\n", "mem", &g, &test),
            Err(Error::MalformedLine { .. })
        ));
    }
}
