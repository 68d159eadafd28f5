//! Signed kNN graph over an expanded dataset.
//!
//! Every node `i` of class `c` gets `n_plus` edges with sign `+1` to its
//! nearest points among the class's originals and positive neighbors, and
//! `n_minus` edges with sign `-1` to its nearest points among all nodes of other
//! classes together with class `c`'s own negative neighbors. The graph is
//! directed and built once in input space.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{ExpandedDataset, Node, Provenance};
use crate::geometry::{nearest, DistanceKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    /// `+1` or `-1`.
    pub phi: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub class: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedGraph {
    pub node_count: usize,
    pub edges: Vec<Edge>,
    pub node_meta: Vec<NodeMeta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub n_plus: usize,
    pub n_minus: usize,
    pub distance: DistanceKind,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            n_plus: 1,
            n_minus: 4,
            distance: DistanceKind::AngularCosine,
        }
    }
}

impl GraphConfig {
    pub fn is_vacuous(&self) -> bool {
        self.n_plus == 0 && self.n_minus == 0
    }
}

/// Whether node `j` may receive a `+1` edge from a node of class `c`.
pub fn in_positive_pool(c: usize, j: &NodeMeta) -> bool {
    j.class == c && j.provenance != Provenance::NegativeNeighbor
}

/// Whether node `j` may receive a `-1` edge from a node of class `c`.
pub fn in_negative_pool(c: usize, j: &NodeMeta) -> bool {
    j.class != c || j.provenance == Provenance::NegativeNeighbor
}

/// Builds the signed graph. Pools smaller than the requested degree yield
/// fewer edges.
pub fn build(expanded: &ExpandedDataset, cfg: &GraphConfig) -> Result<SignedGraph> {
    let nodes = expanded.nodes();
    build_from_nodes(&nodes, cfg)
}

pub fn build_from_nodes(nodes: &[Node], cfg: &GraphConfig) -> Result<SignedGraph> {
    if nodes.len() < 2 {
        return Err(Error::invalid("signed graph needs at least two nodes"));
    }
    let meta: Vec<NodeMeta> = nodes
        .iter()
        .map(|n| NodeMeta {
            class: n.class,
            provenance: n.provenance,
        })
        .collect();
    let mut edges = Vec::with_capacity(nodes.len() * (cfg.n_plus + cfg.n_minus));
    let mut short_pools = 0usize;
    for (i, node) in nodes.iter().enumerate() {
        let c = node.class;
        let meta = &meta;
        let pool = move |accept: fn(usize, &NodeMeta) -> bool| {
            nodes
                .iter()
                .enumerate()
                .filter(move |&(j, _)| j != i && accept(c, &meta[j]))
                .map(|(j, n)| (j, n.features.as_slice()))
        };
        if cfg.n_minus > 0 && pool(in_negative_pool).next().is_none() {
            return Err(Error::invalid(format!(
                "node {i} (class {c}) has no candidates for negative edges"
            )));
        }
        let plus = nearest(&node.features, pool(in_positive_pool), cfg.n_plus, cfg.distance);
        let minus = nearest(&node.features, pool(in_negative_pool), cfg.n_minus, cfg.distance);
        if plus.len() < cfg.n_plus || minus.len() < cfg.n_minus {
            short_pools += 1;
        }
        edges.extend(plus.into_iter().map(|j| Edge { i, j, phi: 1 }));
        edges.extend(minus.into_iter().map(|j| Edge { i, j, phi: -1 }));
    }
    if short_pools > 0 {
        log::warn!("{short_pools} nodes had pools smaller than the requested degree");
    }
    Ok(SignedGraph {
        node_count: nodes.len(),
        edges,
        node_meta: meta,
    })
}

/// Splits edges by sign, keeping order.
pub fn edge_partition(g: &SignedGraph) -> (Vec<Edge>, Vec<Edge>) {
    g.edges.iter().partition(|e| e.phi > 0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SelfEdge { node: usize },
    DuplicateEdge { i: usize, j: usize },
    NodeOutOfRange { i: usize, j: usize },
    BadSign { i: usize, j: usize, phi: i8 },
    PositiveOutsidePool { i: usize, j: usize },
    NegativeOutsidePool { i: usize, j: usize },
    MetaMismatch { node: usize },
    NodeCountMismatch { graph: usize, data: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfEdge { node } => write!(f, "self-edge on node {node}"),
            Violation::DuplicateEdge { i, j } => write!(f, "duplicate edge ({i}, {j})"),
            Violation::NodeOutOfRange { i, j } => write!(f, "edge ({i}, {j}) references a missing node"),
            Violation::BadSign { i, j, phi } => write!(f, "edge ({i}, {j}) has sign {phi}"),
            Violation::PositiveOutsidePool { i, j } => {
                write!(f, "+1 edge ({i}, {j}) leaves the same-class pool")
            }
            Violation::NegativeOutsidePool { i, j } => {
                write!(f, "-1 edge ({i}, {j}) targets a same-class non-negative node")
            }
            Violation::MetaMismatch { node } => write!(f, "node {node} metadata disagrees with the data"),
            Violation::NodeCountMismatch { graph, data } => {
                write!(f, "graph has {graph} nodes but the data has {data}")
            }
        }
    }
}

/// Re-checks the structural invariants. An empty list means the graph is
/// consistent with `expanded`.
pub fn validate(g: &SignedGraph, expanded: &ExpandedDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let nodes = expanded.nodes();
    if nodes.len() != g.node_count || g.node_meta.len() != g.node_count {
        out.push(Violation::NodeCountMismatch {
            graph: g.node_count,
            data: nodes.len(),
        });
    }
    for (k, (node, meta)) in nodes.iter().zip(&g.node_meta).enumerate() {
        if node.class != meta.class || node.provenance != meta.provenance {
            out.push(Violation::MetaMismatch { node: k });
        }
    }
    let mut seen = HashSet::new();
    for e in &g.edges {
        let (i, j) = (e.i, e.j);
        if i >= g.node_meta.len() || j >= g.node_meta.len() {
            out.push(Violation::NodeOutOfRange { i, j });
            continue;
        }
        if i == j {
            out.push(Violation::SelfEdge { node: i });
        }
        if !seen.insert((i, j)) {
            out.push(Violation::DuplicateEdge { i, j });
        }
        let c = g.node_meta[i].class;
        match e.phi {
            1 if !in_positive_pool(c, &g.node_meta[j]) => out.push(Violation::PositiveOutsidePool { i, j }),
            -1 if !in_negative_pool(c, &g.node_meta[j]) => out.push(Violation::NegativeOutsidePool { i, j }),
            1 | -1 => {}
            phi => out.push(Violation::BadSign { i, j, phi }),
        }
    }
    out
}

impl SignedGraph {
    /// Writes `i j phi` lines.
    pub fn write_edges(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.edges {
            writeln!(w, "{} {} {}", e.i, e.j, e.phi).map_err(|err| Error::io(path, err))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes the `index,class,provenance` sidecar.
    pub fn write_nodes(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "class", "provenance"])?;
        for (k, m) in self.node_meta.iter().enumerate() {
            w.write_record([k.to_string(), m.class.to_string(), m.provenance.as_str().to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read(edges_path: &Path, nodes_path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(nodes_path)?;
        let mut node_meta = Vec::new();
        for (r, rec) in reader.records().enumerate() {
            let rec = rec?;
            let bad = |message: String| Error::Format {
                path: nodes_path.to_path_buf(),
                message: format!("row {}: {message}", r + 1),
            };
            let class = rec
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad("bad class".into()))?;
            let provenance = rec
                .get(2)
                .and_then(Provenance::parse)
                .ok_or_else(|| bad("bad provenance".into()))?;
            node_meta.push(NodeMeta { class, provenance });
        }
        let file = std::fs::File::open(edges_path).map_err(|e| Error::io(edges_path, e))?;
        let mut edges = Vec::new();
        for (r, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(edges_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed = match parts.as_slice() {
                [i, j, phi] => i
                    .parse()
                    .ok()
                    .zip(j.parse().ok())
                    .zip(phi.parse().ok())
                    .map(|((i, j), phi)| Edge { i, j, phi }),
                _ => None,
            };
            edges.push(parsed.ok_or_else(|| Error::Format {
                path: edges_path.to_path_buf(),
                message: format!("line {}: expected `i j phi`", r + 1),
            })?);
        }
        Ok(Self {
            node_count: node_meta.len(),
            edges,
            node_meta,
        })
    }
}
