//! Attributed undirected graphs and their edge-group structure.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::group::{GroupDistribution, GroupId, NodeId, Pair};
use crate::scalar::Scalar;

/// Undirected graph with one categorical sensitive attribute per node.
///
/// Immutable once built; share it freely between readers.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveGraph {
    node_count: usize,
    edges: BTreeSet<Pair>,
    sensitive: Vec<Option<u32>>,
    adjacency: Vec<Vec<NodeId>>,
}

impl SensitiveGraph {
    /// Builds a graph, checking that every edge endpoint is in range and
    /// carries an attribute.
    pub fn new(
        node_count: usize,
        sensitive: Vec<Option<u32>>,
        edges: impl IntoIterator<Item = Pair>,
    ) -> Result<Self> {
        if sensitive.len() != node_count {
            return Err(Error::Config(format!(
                "{} attribute slots for {} nodes",
                sensitive.len(),
                node_count
            )));
        }
        let edges: BTreeSet<Pair> = edges.into_iter().collect();
        let mut adjacency = vec![Vec::new(); node_count];
        for e in &edges {
            for n in [e.u, e.v] {
                match sensitive.get(n as usize) {
                    None => return Err(Error::UnknownNode(n)),
                    Some(None) => return Err(Error::MissingAttribute(n)),
                    Some(Some(_)) => {}
                }
            }
            adjacency[e.u as usize].push(e.v);
            adjacency[e.v as usize].push(e.u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(SensitiveGraph {
            node_count,
            edges,
            sensitive,
            adjacency,
        })
    }

    /// Graph where every node has an attribute.
    pub fn from_attributes(
        attributes: Vec<u32>,
        edges: impl IntoIterator<Item = Pair>,
    ) -> Result<Self> {
        let n = attributes.len();
        Self::new(n, attributes.into_iter().map(Some).collect(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &BTreeSet<Pair> {
        &self.edges
    }

    pub fn has_edge(&self, pair: Pair) -> bool {
        self.edges.contains(&pair)
    }

    pub fn attribute(&self, node: NodeId) -> Result<u32> {
        match self.sensitive.get(node as usize) {
            None => Err(Error::UnknownNode(node)),
            Some(None) => Err(Error::MissingAttribute(node)),
            Some(Some(a)) => Ok(*a),
        }
    }

    pub fn attributes(&self) -> &[Option<u32>] {
        &self.sensitive
    }

    /// Sorted neighbor list.
    pub fn neighbors(&self, node: NodeId) -> Result<&[NodeId]> {
        self.adjacency
            .get(node as usize)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownNode(node))
    }

    pub fn degree(&self, node: NodeId) -> Result<usize> {
        self.neighbors(node).map(<[NodeId]>::len)
    }

    /// Canonical group of the pair `(u, v)`.
    pub fn edge_group(&self, u: NodeId, v: NodeId) -> Result<GroupId> {
        Ok(GroupId::new(self.attribute(u)?, self.attribute(v)?))
    }

    /// Distinct attribute values, ascending.
    pub fn attribute_values(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.sensitive.iter().flatten().copied().collect();
        set.into_iter().collect()
    }

    /// Every group that some node pair can fall into.
    pub fn groups(&self) -> Vec<GroupId> {
        let values = self.attribute_values();
        let mut out = Vec::new();
        for (i, &a) in values.iter().enumerate() {
            for &b in &values[i..] {
                out.push(GroupId::new(a, b));
            }
        }
        out
    }

    /// Nodes holding attribute `value`, ascending.
    pub fn nodes_with_attribute(&self, value: u32) -> Vec<NodeId> {
        (0..self.node_count as NodeId)
            .filter(|&n| self.sensitive[n as usize] == Some(value))
            .collect()
    }

    /// Number of unordered node pairs per group, over attributed nodes.
    pub fn pair_counts(&self) -> BTreeMap<GroupId, u64> {
        let mut sizes: BTreeMap<u32, u64> = BTreeMap::new();
        for a in self.sensitive.iter().flatten() {
            *sizes.entry(*a).or_default() += 1;
        }
        self.groups()
            .into_iter()
            .map(|g| {
                let (a, b) = g.attributes();
                let count = if a == b {
                    let n = sizes[&a];
                    n * n.saturating_sub(1) / 2
                } else {
                    sizes[&a] * sizes[&b]
                };
                (g, count)
            })
            .collect()
    }

    /// Per-group edge counts of `edges`, listing every group of the graph.
    pub fn group_counts<'a>(
        &self,
        edges: impl IntoIterator<Item = &'a Pair>,
    ) -> Result<BTreeMap<GroupId, usize>> {
        let mut counts: BTreeMap<GroupId, usize> =
            self.groups().into_iter().map(|g| (g, 0)).collect();
        for e in edges {
            *counts.entry(self.edge_group(e.u, e.v)?).or_default() += 1;
        }
        Ok(counts)
    }

    /// Fraction of `edges` in each group. Groups without edges stay listed at 0.
    pub fn empirical_distribution<'a, F: Scalar>(
        &self,
        edges: impl IntoIterator<Item = &'a Pair>,
    ) -> Result<GroupDistribution<F>> {
        GroupDistribution::from_counts(&self.group_counts(edges)?)
    }

    /// Same nodes and attributes, different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = Pair>) -> Result<Self> {
        Self::new(self.node_count, self.sensitive.clone(), edges)
    }

    /// Subgraph keeping only the edges of `group`.
    pub fn restrict_to_group(&self, group: GroupId) -> Self {
        let edges = self.edges.iter().copied().filter(|e| {
            self.edge_group(e.u, e.v)
                .map(|g| g == group)
                .unwrap_or(false)
        });
        Self::new(self.node_count, self.sensitive.clone(), edges)
            .expect("subset of a valid edge set")
    }
}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses an edge list (`u<TAB>v` or `u,v`, `#` comments). Duplicates and
/// reversed duplicates collapse into one canonical pair.
pub fn parse_edges(text: &str, origin: &str) -> Result<BTreeSet<Pair>> {
    let mut edges = BTreeSet::new();
    for (line_no, line) in content_lines(text) {
        let fields: Vec<&str> = split_fields(line).collect();
        if fields.len() != 2 {
            return Err(Error::malformed(
                origin,
                line_no,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        let parse = |s: &str| {
            s.parse::<NodeId>()
                .map_err(|_| Error::malformed(origin, line_no, format!("`{s}` is not a node id")))
        };
        let (u, v) = (parse(fields[0])?, parse(fields[1])?);
        let pair = Pair::new(u, v).ok_or_else(|| Error::SelfLoop {
            path: origin.to_string(),
            line: line_no,
            node: u,
        })?;
        edges.insert(pair);
    }
    Ok(edges)
}

/// Parses `node_id<TAB>attribute` lines.
pub fn parse_attributes(text: &str, origin: &str) -> Result<BTreeMap<NodeId, u32>> {
    let mut attrs = BTreeMap::new();
    for (line_no, line) in content_lines(text) {
        let fields: Vec<&str> = split_fields(line).collect();
        if fields.len() != 2 {
            return Err(Error::malformed(
                origin,
                line_no,
                format!("expected 2 fields, found {}", fields.len()),
            ));
        }
        let node: NodeId = fields[0].parse().map_err(|_| {
            Error::malformed(origin, line_no, format!("`{}` is not a node id", fields[0]))
        })?;
        let value: u32 = fields[1].parse().map_err(|_| {
            Error::malformed(
                origin,
                line_no,
                format!("`{}` is not an attribute", fields[1]),
            )
        })?;
        if let Some(prev) = attrs.insert(node, value) {
            if prev != value {
                return Err(Error::malformed(
                    origin,
                    line_no,
                    format!("conflicting attribute for node {node}"),
                ));
            }
        }
    }
    Ok(attrs)
}

/// Builds a graph from parsed edges and attributes. Node count is one past
/// the largest id seen in either input.
pub fn assemble_graph(
    edges: BTreeSet<Pair>,
    attrs: &BTreeMap<NodeId, u32>,
) -> Result<SensitiveGraph> {
    let max_edge = edges.iter().map(|e| e.v).max();
    let max_attr = attrs.keys().next_back().copied();
    let node_count = match (max_edge, max_attr) {
        (None, None) => 0,
        (a, b) => a.max(b).unwrap() as usize + 1,
    };
    let mut sensitive = vec![None; node_count];
    for (&n, &a) in attrs {
        sensitive[n as usize] = Some(a);
    }
    SensitiveGraph::new(node_count, sensitive, edges)
}

/// Loads an edge file and an attribute file.
pub fn load_graph(edge_file: &Path, attribute_file: &Path) -> Result<SensitiveGraph> {
    let edges = parse_edges(&read(edge_file)?, &edge_file.display().to_string())?;
    let attrs = parse_attributes(
        &read(attribute_file)?,
        &attribute_file.display().to_string(),
    )?;
    assemble_graph(edges, &attrs)
}

/// Reads an edge file on its own (e.g. a held-out split).
pub fn load_edges(path: &Path) -> Result<BTreeSet<Pair>> {
    parse_edges(&read(path)?, &path.display().to_string())
}

/// Renders edges as `u<TAB>v` lines.
pub fn format_edges<'a>(edges: impl IntoIterator<Item = &'a Pair>) -> String {
    let mut out = String::new();
    for e in edges {
        out.push_str(&format!("{}\t{}\n", e.u, e.v));
    }
    out
}
