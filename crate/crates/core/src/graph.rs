//! Undirected graphs, their Laplacian and oriented incidence matrices, and the
//! spanning-tree bipartition every solver runs on.
//!
//! Nodes are 0-based. Edges are stored normalized as `(lo, hi)` with `lo < hi`,
//! so the edge set is the sorted list used for incidence-row ordering.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, ParseError, ParseErrorKind, Result};

/// Dense row/column matrix used for L, incidence and stacked-constraint matrices.
pub type DenseMatrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Edgeless graph on `node_count` nodes.
    pub fn new(node_count: usize) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("node count must be positive".into()));
        }
        Ok(Graph {
            node_count,
            edges: BTreeSet::new(),
            adjacency: vec![Vec::new(); node_count],
        })
    }

    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::new(node_count)?;
        for (i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    /// Inserts `{i, j}`. Self-loops, out-of-range endpoints and repeats are rejected.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.node_count || j >= self.node_count {
            return Err(Error::InvalidGraph(format!(
                "edge ({i}, {j}) out of range for {} nodes",
                self.node_count
            )));
        }
        if i == j {
            return Err(Error::InvalidGraph(format!("self-loop on node {i}")));
        }
        let key = (i.min(j), i.max(j));
        if !self.edges.insert(key) {
            return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", key.0, key.1)));
        }
        insert_sorted(&mut self.adjacency[i], j);
        insert_sorted(&mut self.adjacency[j], i);
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(lo, hi)` pairs in sorted order.
    pub fn edges(&self) -> impl ExactSizeIterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Sorted neighbor list of `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Nodes reachable from node 0, in BFS order.
    fn reachable_from_zero(&self) -> Vec<bool> {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        self.reachable_from_zero().into_iter().all(|s| s)
    }

    /// Connected with exactly `l - 1` edges.
    pub fn is_spanning_tree(&self) -> bool {
        self.edge_count() + 1 == self.node_count && self.is_connected()
    }

    /// Serializes to the edge-list text format accepted by [`parse_edge_list`].
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("l={}\n", self.node_count);
        for (i, j) in self.edges() {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }
}

fn insert_sorted(list: &mut Vec<usize>, value: usize) {
    if let Err(pos) = list.binary_search(&value) {
        list.insert(pos, value);
    }
}

/// Parses the edge-list format: `#` comments, an `l=<count>` header, then one
/// whitespace-separated `i j` pair per line (0-based).
pub fn parse_edge_list(text: &str) -> std::result::Result<Graph, ParseError> {
    let mut graph: Option<Graph> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |kind| ParseError { line, kind };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("l=").or_else(|| trimmed.strip_prefix("l =")) {
            if graph.is_some() {
                return Err(err(ParseErrorKind::DuplicateHeader));
            }
            let count: usize = rest
                .trim()
                .parse()
                .map_err(|_| err(ParseErrorKind::Malformed(raw.to_string())))?;
            if count == 0 {
                return Err(err(ParseErrorKind::EmptyGraph));
            }
            graph = Some(Graph::new(count).expect("count checked positive"));
            continue;
        }
        let g = graph.as_mut().ok_or_else(|| err(ParseErrorKind::MissingHeader))?;
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let [a, b] = fields.as_slice() else {
            return Err(err(ParseErrorKind::Malformed(raw.to_string())));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| err(ParseErrorKind::Malformed(raw.to_string())))
        };
        let (i, j) = (parse(a)?, parse(b)?);
        for index in [i, j] {
            if index >= g.node_count() {
                return Err(err(ParseErrorKind::OutOfRange {
                    index,
                    node_count: g.node_count(),
                }));
            }
        }
        if i == j {
            return Err(err(ParseErrorKind::SelfLoop(i)));
        }
        if g.has_edge(i, j) {
            return Err(err(ParseErrorKind::DuplicateEdge(i.min(j), i.max(j))));
        }
        g.add_edge(i, j).expect("validated above");
    }
    graph.ok_or(ParseError {
        line: text.lines().count().max(1),
        kind: ParseErrorKind::MissingHeader,
    })
}

/// Graph Laplacian: degree on the diagonal, -1 per edge.
pub fn laplacian(g: &Graph) -> DenseMatrix {
    let l = g.node_count();
    let mut lap = DenseMatrix::zeros(l, l);
    for (i, j) in g.edges() {
        lap[(i, j)] = -1.0;
        lap[(j, i)] = -1.0;
        lap[(i, i)] += 1.0;
        lap[(j, j)] += 1.0;
    }
    lap
}

/// Oriented incidence matrix, one row per edge in sorted order; `+1` at the
/// lower endpoint and `-1` at the higher one.
pub fn oriented_incidence(g: &Graph) -> DenseMatrix {
    let mut x = DenseMatrix::zeros(g.edge_count(), g.node_count());
    for (row, (i, j)) in g.edges().enumerate() {
        x[(row, i)] = 1.0;
        x[(row, j)] = -1.0;
    }
    x
}

pub fn is_connected(g: &Graph) -> bool {
    g.is_connected()
}

/// Numerical rank via the singular-value ratio test: singular values below
/// `rel_tol * sigma_max` are treated as zero.
pub fn numerical_rank(m: &DenseMatrix, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Partition tag of a node in a simplest bipartite graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    H,
    T,
}

impl Label {
    pub fn opposite(self) -> Label {
        match self {
            Label::H => Label::T,
            Label::T => Label::H,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::H => "H",
            Label::T => "T",
        })
    }
}

/// A spanning tree whose nodes are 2-colored so that every edge joins an H
/// node to a T node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplestBipartiteGraph {
    tree: Graph,
    labels: Vec<Label>,
}

impl SimplestBipartiteGraph {
    /// Validates the spanning-tree and 2-coloring invariants.
    pub fn new(tree: Graph, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != tree.node_count() {
            return Err(Error::InvalidBipartition(format!(
                "{} labels for {} nodes",
                labels.len(),
                tree.node_count()
            )));
        }
        if tree.edge_count() + 1 != tree.node_count() {
            return Err(Error::InvalidBipartition(format!(
                "{} edges on {} nodes, expected {}",
                tree.edge_count(),
                tree.node_count(),
                tree.node_count() - 1
            )));
        }
        if !tree.is_connected() {
            return Err(Error::InvalidBipartition("tree is not connected".into()));
        }
        if let Some((i, j)) = tree.edges().find(|&(i, j)| labels[i] == labels[j]) {
            return Err(Error::InvalidBipartition(format!(
                "edge ({i}, {j}) joins two {} nodes",
                labels[i]
            )));
        }
        Ok(SimplestBipartiteGraph { tree, labels })
    }

    pub fn tree(&self) -> &Graph {
        &self.tree
    }

    pub fn node_count(&self) -> usize {
        self.tree.node_count()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.tree.degree(i)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.tree.neighbors(i)
    }

    pub fn nodes_with(&self, label: Label) -> Vec<usize> {
        (0..self.node_count()).filter(|&i| self.labels[i] == label).collect()
    }

    pub fn h_nodes(&self) -> Vec<usize> {
        self.nodes_with(Label::H)
    }

    pub fn t_nodes(&self) -> Vec<usize> {
        self.nodes_with(Label::T)
    }

    /// Incidence matrix of the tree, `(l-1) x l`.
    pub fn incidence(&self) -> DenseMatrix {
        oriented_incidence(&self.tree)
    }

    /// Columns of the incidence matrix belonging to `label`, in node order.
    pub fn incidence_block(&self, label: Label) -> DenseMatrix {
        let a = self.incidence();
        let cols = self.nodes_with(label);
        a.select_columns(cols.iter())
    }

    /// Edge list followed by an `H=<ids>` line.
    pub fn to_text(&self) -> String {
        let mut out = self.tree.to_edge_list();
        let h: Vec<String> = self.h_nodes().iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "H={}", h.join(","));
        out
    }

    /// Inverse of [`SimplestBipartiteGraph::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut h_line = None;
        let mut edges = String::new();
        for line in text.lines() {
            if let Some(rest) = line.trim().strip_prefix("H=") {
                h_line = Some(rest.to_string());
            } else {
                edges.push_str(line);
                edges.push('\n');
            }
        }
        let tree = parse_edge_list(&edges)?;
        let h_line = h_line.ok_or_else(|| Error::InvalidBipartition("missing `H=` line".into()))?;
        let mut labels = vec![Label::T; tree.node_count()];
        for tok in h_line.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let idx: usize = tok
                .parse()
                .map_err(|_| Error::InvalidBipartition(format!("bad node id {tok:?}")))?;
            if idx >= labels.len() {
                return Err(Error::InvalidBipartition(format!("node {idx} out of range")));
            }
            labels[idx] = Label::H;
        }
        SimplestBipartiteGraph::new(tree, labels)
    }
}

/// Path `0 - 1 - ... - (l-1)`.
pub fn line_graph(l: usize) -> Result<Graph> {
    Graph::from_edges(l, (1..l).map(|i| (i - 1, i)))
}

pub fn complete_graph(l: usize) -> Result<Graph> {
    Graph::from_edges(l, (0..l).flat_map(|i| (i + 1..l).map(move |j| (i, j))))
}

pub fn star_graph(l: usize) -> Result<Graph> {
    Graph::from_edges(l, (1..l).map(|i| (0, i)))
}

/// Samples `edge_count` distinct edges uniformly, retrying until the result
/// is connected.
pub fn random_connected_with_edges<R: Rng + ?Sized>(
    l: usize,
    edge_count: usize,
    rng: &mut R,
) -> Result<Graph> {
    let all: Vec<(usize, usize)> = (0..l).flat_map(|i| (i + 1..l).map(move |j| (i, j))).collect();
    if edge_count + 1 < l || edge_count > all.len() {
        return Err(Error::InvalidParameter(format!(
            "no connected graph on {l} nodes has {edge_count} edges"
        )));
    }
    loop {
        let picked: Vec<(usize, usize)> = all.choose_multiple(rng, edge_count).copied().collect();
        let g = Graph::from_edges(l, picked)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
}

/// Random connected graph: a uniformly attached random tree plus each
/// remaining pair independently with probability `extra_density`.
pub fn random_connected<R: Rng + ?Sized>(l: usize, extra_density: f64, rng: &mut R) -> Result<Graph> {
    let mut g = Graph::new(l)?;
    for i in 1..l {
        let parent = rng.random_range(0..i);
        g.add_edge(parent, i)?;
    }
    for i in 0..l {
        for j in i + 1..l {
            if !g.has_edge(i, j) && rng.random::<f64>() < extra_density {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}
