//! Directed information topology between agents.
//!
//! An [`Edge`] `u -> v` means agent `v` receives a (noisy) measurement of
//! agent `u`'s state, i.e. `u` is a neighbour of `v`. Node indices are
//! 0-based in memory; the JSON literal form is 1-based:
//!
//! ```text
//! {"n": 4, "edges": [[3, 1], [1, 2], [1, 3], [2, 3], [3, 4]]}
//! ```
//!
//! with each pair in (sender, receiver) order.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Directed edge `from -> to` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

impl Edge {
    pub fn new(from: usize, to: usize) -> Self {
        Self { from, to }
    }
}

/// Unweighted digraph over `n` agents without self-loops.
///
/// Immutable once built; edges are kept sorted, which fixes the order in
/// which per-edge noise is drawn during simulation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GraphLiteral", into = "GraphLiteral")]
pub struct Digraph {
    n: usize,
    edges: BTreeSet<Edge>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphLiteral {
    n: usize,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<GraphLiteral> for Digraph {
    type Error = Error;

    fn try_from(lit: GraphLiteral) -> Result<Self> {
        let mut edges = Vec::with_capacity(lit.edges.len());
        for [u, v] in lit.edges {
            if u == 0 || v == 0 || u > lit.n || v > lit.n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) outside node range 1..={}",
                    lit.n
                )));
            }
            edges.push(Edge::new(u - 1, v - 1));
        }
        Digraph::new(lit.n, edges)
    }
}

impl From<Digraph> for GraphLiteral {
    fn from(g: Digraph) -> Self {
        GraphLiteral {
            n: g.n,
            edges: g.edges.iter().map(|e| [e.from + 1, e.to + 1]).collect(),
        }
    }
}

impl Digraph {
    /// Builds a digraph, rejecting self-loops, out-of-range nodes and
    /// duplicate edges.
    pub fn new(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for e in edges {
            if e.from >= n || e.to >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) outside node range 0..{n}",
                    e.from, e.to
                )));
            }
            if e.from == e.to {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", e.from)));
            }
            if !set.insert(e) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    e.from, e.to
                )));
            }
        }
        Ok(Self { n, edges: set })
    }

    /// Convenience constructor from `(sender, receiver)` pairs.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(n, pairs.iter().map(|&(u, v)| Edge::new(u, v)))
    }

    /// Undirected graph: every pair is inserted in both directions.
    pub fn undirected(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            n,
            pairs
                .iter()
                .flat_map(|&(u, v)| [Edge::new(u, v), Edge::new(v, u)]),
        )
    }

    pub fn empty(n: usize) -> Result<Self> {
        Self::new(n, [])
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical (sorted) order.
    pub fn edges(&self) -> impl ExactSizeIterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.edges.contains(&e)
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.to == v).count()
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.from == v).count()
    }

    /// Senders measured by `v`.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.to == v).map(|e| e.from)
    }
}

/// Laplacian `L = D_in - A`: `L[i][i]` is the in-degree of `i`, and
/// `L[i][j] = -1` when `j` sends to `i`.
pub fn laplacian(g: &Digraph) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(g.n, g.n);
    for e in g.edges() {
        l[(e.to, e.to)] += 1.0;
        l[(e.to, e.from)] = -1.0;
    }
    l
}

/// True iff some root reaches every node along sender -> receiver edges.
pub fn has_spanning_tree(g: &Digraph) -> bool {
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); g.n];
    for e in g.edges() {
        out[e.from].push(e.to);
    }
    (0..g.n).any(|root| reach_count(&out, root) == g.n)
}

fn reach_count(out: &[Vec<usize>], root: usize) -> usize {
    let mut seen = vec![false; out.len()];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &out[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count
}

/// In-degree equals out-degree at every node.
pub fn is_balanced(g: &Digraph) -> bool {
    let mut balance = vec![0i64; g.n];
    for e in g.edges() {
        balance[e.to] += 1;
        balance[e.from] -= 1;
    }
    balance.iter().all(|&b| b == 0)
}

/// Edge-set union of graphs sharing a node count.
pub fn union(gs: &[Digraph]) -> Result<Digraph> {
    let first = gs
        .first()
        .ok_or_else(|| Error::InvalidGraph("union of an empty collection".into()))?;
    let mut edges = BTreeSet::new();
    for g in gs {
        if g.n != first.n {
            return Err(Error::NodeCountMismatch {
                expected: first.n,
                found: g.n,
            });
        }
        edges.extend(g.edges.iter().copied());
    }
    Ok(Digraph { n: first.n, edges })
}

/// Split of the nodes into those touching at least one edge and the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphPartition {
    pub active: Vec<usize>,
    pub isolated: Vec<usize>,
}

pub fn partition_active(g: &Digraph) -> GraphPartition {
    let mut touched = vec![false; g.n];
    for e in g.edges() {
        touched[e.from] = true;
        touched[e.to] = true;
    }
    let (active, isolated) = (0..g.n).partition(|&i| touched[i]);
    GraphPartition { active, isolated }
}

/// Symmetric PSD matrix `H` with `x^T H x = 1/2 * sum over edges (u -> v) of |x_u - x_v|^2`.
pub fn disagreement_form(g: &Digraph) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(g.n, g.n);
    for e in g.edges() {
        let (u, v) = (e.from, e.to);
        h[(u, u)] += 0.5;
        h[(v, v)] += 0.5;
        h[(u, v)] -= 0.5;
        h[(v, u)] -= 0.5;
    }
    h
}

/// Largest number of graphs in the collection that share a single edge.
pub fn edge_multiplicity(gs: &[Digraph]) -> Result<usize> {
    let mut counts: BTreeMap<Edge, usize> = BTreeMap::new();
    for g in gs {
        for e in g.edges() {
            *counts.entry(e).or_default() += 1;
        }
    }
    counts.values().copied().max().ok_or(Error::EdgelessUnion)
}

/// Per-edge noise intensities `sigma_uv >= 0`. Non-edges read as zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseProfile {
    sigma: BTreeMap<Edge, f64>,
}

impl NoiseProfile {
    pub fn new(sigma: impl IntoIterator<Item = (Edge, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (e, s) in sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidNoise(format!(
                    "sigma on ({}, {}) must be finite and nonnegative, got {s}",
                    e.from, e.to
                )));
            }
            if map.insert(e, s).is_some() {
                return Err(Error::InvalidNoise(format!(
                    "sigma on ({}, {}) given twice",
                    e.from, e.to
                )));
            }
        }
        Ok(Self { sigma: map })
    }

    /// Same intensity on every edge of `g`.
    pub fn uniform(g: &Digraph, sigma: f64) -> Result<Self> {
        Self::new(g.edges().map(|e| (e, sigma)))
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn get(&self, e: Edge) -> f64 {
        self.sigma.get(&e).copied().unwrap_or(0.0)
    }

    pub fn max_sigma(&self) -> f64 {
        self.sigma.values().copied().fold(0.0, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Edge, f64)> + '_ {
        self.sigma.iter().map(|(&e, &s)| (e, s))
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            sigma: self
                .sigma
                .iter()
                .map(|(e, &s)| (Edge::new(perm[e.from], perm[e.to]), s))
                .collect(),
        }
    }
}

impl Digraph {
    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            n: self.n,
            edges: self
                .edges
                .iter()
                .map(|e| Edge::new(perm[e.from], perm[e.to]))
                .collect(),
        }
    }
}
