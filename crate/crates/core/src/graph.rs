//! Weighted directed graphs, the edge-list file format, and the exact
//! shortest-path quantities every error bound is stated in terms of.
//!
//! Nodes are indexed from 0 internally. Every external representation
//! (edge-list files, CSV, JSON, error messages) uses 1-based ids.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

/// Relative tolerance used when deciding whether a neighbor attains the
/// Bellman minimum.
pub const ARGMIN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid graph: {0}")]
    Validation(String),
    #[error("node {} cannot reach any source", .node + 1)]
    Unreachable { node: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

/// Directed graph with positive edge weights and a set of source nodes.
///
/// An edge `tail -> head` means `head` is an out-neighbor of `tail`, i.e.
/// `tail` may route through `head` towards a source.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    node_count: usize,
    sources: Vec<usize>,
    is_source: Vec<bool>,
    edges: Vec<Edge>,
    // Edge indices grouped by tail, sorted by head.
    out: Vec<Vec<usize>>,
}

impl WeightedDigraph {
    pub fn new(
        node_count: usize,
        sources: impl IntoIterator<Item = usize>,
        edges: Vec<Edge>,
    ) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::Validation("graph has no nodes".into()));
        }
        let mut is_source = vec![false; node_count];
        for s in sources {
            if s >= node_count {
                return Err(GraphError::Validation(format!(
                    "source {} out of range 1..={node_count}",
                    s + 1
                )));
            }
            is_source[s] = true;
        }
        let sources: Vec<usize> = (0..node_count).filter(|&i| is_source[i]).collect();
        if sources.is_empty() {
            return Err(GraphError::Validation("source set is empty".into()));
        }
        if sources.len() == node_count {
            return Err(GraphError::Validation(
                "every node is a source; the non-source set must be nonempty".into(),
            ));
        }

        let mut out = vec![Vec::new(); node_count];
        for (idx, e) in edges.iter().enumerate() {
            if e.tail >= node_count || e.head >= node_count {
                return Err(GraphError::Validation(format!(
                    "edge {} -> {} references a node outside 1..={node_count}",
                    e.tail + 1,
                    e.head + 1
                )));
            }
            if e.tail == e.head {
                return Err(GraphError::Validation(format!(
                    "self-loop on node {}",
                    e.tail + 1
                )));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(GraphError::Validation(format!(
                    "edge {} -> {} has nonpositive weight {}",
                    e.tail + 1,
                    e.head + 1,
                    e.weight
                )));
            }
            out[e.tail].push(idx);
        }
        for list in &mut out {
            list.sort_by_key(|&idx| edges[idx].head);
            if let Some(w) = list.windows(2).find(|w| edges[w[0]].head == edges[w[1]].head) {
                let e = edges[w[0]];
                return Err(GraphError::Validation(format!(
                    "duplicate edge {} -> {}",
                    e.tail + 1,
                    e.head + 1
                )));
            }
        }

        Ok(Self {
            node_count,
            sources,
            is_source,
            edges,
            out,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn is_source(&self, node: usize) -> bool {
        self.is_source[node]
    }

    pub fn non_sources(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.node_count).filter(move |&i| !self.is_source[i])
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Out-edges of `node` as `(edge index, edge)`, ordered by head id.
    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = (usize, &Edge)> + '_ {
        self.out[node].iter().map(move |&idx| (idx, &self.edges[idx]))
    }

    pub fn edge_index(&self, tail: usize, head: usize) -> Option<usize> {
        let list = self.out.get(tail)?;
        list.binary_search_by_key(&head, |&idx| self.edges[idx].head)
            .ok()
            .map(|pos| list[pos])
    }

    /// Same topology with new weights, given in edge-index order.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self, GraphError> {
        if weights.len() != self.edges.len() {
            return Err(GraphError::Validation(format!(
                "expected {} weights, got {}",
                self.edges.len(),
                weights.len()
            )));
        }
        let edges = self
            .edges
            .iter()
            .zip(weights)
            .map(|(e, &weight)| Edge { weight, ..*e })
            .collect();
        Self::new(self.node_count, self.sources.iter().copied(), edges)
    }

    /// Serializes to the edge-list format accepted by [`load_graph`].
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.node_count);
        s.push_str("sources");
        for &src in &self.sources {
            let _ = write!(s, " {}", src + 1);
        }
        s.push('\n');
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {}", e.tail + 1, e.head + 1, e.weight);
        }
        s
    }
}

/// Parses the line-oriented edge-list format:
///
/// ```text
/// # comment
/// nodes 3
/// sources 1
/// 2 1 1.0
/// 3 2 1.0
/// ```
pub fn load_graph(text: &str) -> Result<WeightedDigraph, GraphError> {
    let mut node_count: Option<usize> = None;
    let mut sources: Option<Vec<usize>> = None;
    let mut edges = Vec::new();
    let mut seen = HashSet::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let parse_err = |reason: String| GraphError::Parse { line, reason };
        let mut tokens = content.split_whitespace();
        let first = tokens.next().unwrap_or_default();

        let Some(n) = node_count else {
            if first != "nodes" {
                return Err(parse_err(format!("expected `nodes N`, found `{content}`")));
            }
            let n = tokens
                .next()
                .ok_or_else(|| parse_err("missing node count".into()))?
                .parse::<usize>()
                .map_err(|e| parse_err(format!("bad node count: {e}")))?;
            if n == 0 {
                return Err(parse_err("node count must be positive".into()));
            }
            if tokens.next().is_some() {
                return Err(parse_err("trailing tokens after node count".into()));
            }
            node_count = Some(n);
            continue;
        };

        let parse_node = |tok: &str| -> Result<usize, GraphError> {
            let id = tok
                .parse::<usize>()
                .map_err(|e| parse_err(format!("bad node id `{tok}`: {e}")))?;
            if id == 0 || id > n {
                return Err(parse_err(format!("node id {id} out of range 1..={n}")));
            }
            Ok(id - 1)
        };

        if sources.is_none() {
            if first != "sources" {
                return Err(parse_err(format!(
                    "expected `sources s1 s2 ...`, found `{content}`"
                )));
            }
            let list = tokens.map(parse_node).collect::<Result<Vec<_>, _>>()?;
            if list.is_empty() {
                return Err(parse_err("source list is empty".into()));
            }
            sources = Some(list);
            continue;
        }

        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected `tail head weight`, found {} fields",
                fields.len()
            )));
        }
        let tail = parse_node(fields[0])?;
        let head = parse_node(fields[1])?;
        let weight = fields[2]
            .parse::<f64>()
            .map_err(|e| parse_err(format!("bad weight `{}`: {e}", fields[2])))?;
        let invalid = |reason: String| GraphError::Validation(format!("line {line}: {reason}"));
        if tail == head {
            return Err(invalid(format!("self-loop on node {}", tail + 1)));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(invalid(format!("nonpositive weight {weight}")));
        }
        if !seen.insert((tail, head)) {
            return Err(invalid(format!("duplicate edge {} -> {}", tail + 1, head + 1)));
        }
        edges.push(Edge { tail, head, weight });
    }

    let node_count = node_count.ok_or_else(|| GraphError::Parse {
        line: text.lines().count().max(1),
        reason: "missing `nodes` line".into(),
    })?;
    let sources = sources.ok_or_else(|| GraphError::Parse {
        line: text.lines().count().max(1),
        reason: "missing `sources` line".into(),
    })?;
    WeightedDigraph::new(node_count, sources, edges)
}

/// True iff every node reaches some source along directed edges.
pub fn check_reachability(g: &WeightedDigraph) -> bool {
    first_unreachable(g).is_none()
}

fn first_unreachable(g: &WeightedDigraph) -> Option<usize> {
    let n = g.node_count();
    let mut incoming = vec![Vec::new(); n];
    for e in g.edges() {
        incoming[e.head].push(e.tail);
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = g.sources().iter().copied().collect();
    for &s in g.sources() {
        seen[s] = true;
    }
    while let Some(j) = queue.pop_front() {
        for &i in &incoming[j] {
            if !seen[i] {
                seen[i] = true;
                queue.push_back(i);
            }
        }
    }
    seen.iter().position(|&s| !s)
}

/// Exact shortest-path data of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathSolution {
    /// Distance from each node to its nearest source.
    pub distances: Vec<f64>,
    /// Out-neighbors attaining the Bellman minimum; empty for sources.
    pub true_parents: Vec<Vec<usize>>,
    /// Maximum node count of a true-parent chain ending at a source.
    pub effective_diameter: usize,
    /// Smallest margin by which a non-parent neighbor loses to the optimum.
    /// `None` when no non-source node has a competing neighbor.
    pub path_gap: Option<f64>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    node: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn is_tie(candidate: f64, best: f64) -> bool {
    candidate - best <= ARGMIN_TOL * best.abs().max(1.0)
}

/// Multi-source Dijkstra on the reversed graph, followed by argmin sets,
/// effective diameter and competitor gap.
pub fn solve_shortest_paths(g: &WeightedDigraph) -> Result<ShortestPathSolution, GraphError> {
    if let Some(node) = first_unreachable(g) {
        return Err(GraphError::Unreachable { node });
    }
    let n = g.node_count();
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, e) in g.edges().iter().enumerate() {
        incoming[e.head].push(idx);
    }

    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in g.sources() {
        dist[s] = 0.0;
        heap.push(Candidate { dist: 0.0, node: s });
    }
    while let Some(Candidate { dist: d, node: j }) = heap.pop() {
        if done[j] {
            continue;
        }
        done[j] = true;
        for &idx in &incoming[j] {
            let e = g.edges()[idx];
            if g.is_source(e.tail) {
                continue;
            }
            let cand = d + e.weight;
            if cand < dist[e.tail] {
                dist[e.tail] = cand;
                heap.push(Candidate {
                    dist: cand,
                    node: e.tail,
                });
            }
        }
    }

    let mut true_parents = vec![Vec::new(); n];
    let mut path_gap: Option<f64> = None;
    for i in g.non_sources() {
        let best = g
            .out_edges(i)
            .map(|(_, e)| dist[e.head] + e.weight)
            .fold(f64::INFINITY, f64::min);
        for (_, e) in g.out_edges(i) {
            let value = dist[e.head] + e.weight;
            if is_tie(value, best) {
                true_parents[i].push(e.head);
            } else {
                let gap = value - dist[i];
                path_gap = Some(path_gap.map_or(gap, |z| z.min(gap)));
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let mut depth = vec![0usize; n];
    for &i in &order {
        depth[i] = if g.is_source(i) {
            1
        } else {
            1 + true_parents[i].iter().map(|&j| depth[j]).max().unwrap_or(0)
        };
    }
    let effective_diameter = depth.iter().copied().max().unwrap_or(1);

    Ok(ShortestPathSolution {
        distances: dist,
        true_parents,
        effective_diameter,
        path_gap,
    })
}

impl ShortestPathSolution {
    /// A shortest-path chain `[i_0, ..., i_l = node]` with `i_0` a source and
    /// each element a true parent of the next. Ties are broken by the
    /// smallest node id.
    pub fn chain_to(&self, node: usize) -> Vec<usize> {
        let mut chain = vec![node];
        let mut cur = node;
        while let Some(&next) = self.true_parents[cur].iter().min() {
            chain.push(next);
            cur = next;
        }
        chain.reverse();
        chain
    }

    pub fn node_count(&self) -> usize {
        self.distances.len()
    }
}

/// The most-shrunk admissible graph: weights `w_ij - u_ij^-`, lower bounds
/// given in edge-index order.
pub fn minus_graph(
    g: &WeightedDigraph,
    lower_bounds: &[f64],
) -> Result<WeightedDigraph, GraphError> {
    if lower_bounds.len() != g.edge_count() {
        return Err(GraphError::Validation(format!(
            "expected {} lower bounds, got {}",
            g.edge_count(),
            lower_bounds.len()
        )));
    }
    let mut weights = Vec::with_capacity(g.edge_count());
    for (e, &u) in g.edges().iter().zip(lower_bounds) {
        if !(u >= 0.0 && u < e.weight) {
            return Err(GraphError::Validation(format!(
                "lower disturbance bound {u} on edge {} -> {} must lie in [0, {})",
                e.tail + 1,
                e.head + 1,
                e.weight
            )));
        }
        weights.push(e.weight - u);
    }
    g.with_weights(&weights)
}

/// Multiplies every weight by `factor` in (0, 1].
pub fn scale_graph(g: &WeightedDigraph, factor: f64) -> Result<WeightedDigraph, GraphError> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(GraphError::Validation(format!(
            "scale factor {factor} outside (0, 1]"
        )));
    }
    let weights: Vec<f64> = g.edges().iter().map(|e| e.weight * factor).collect();
    g.with_weights(&weights)
}
