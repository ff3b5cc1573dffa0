//! Shared fixtures: random graphs and an exhaustive shortest-path oracle.
#![allow(dead_code)]

use dbmc::graph::{Edge, WeightedDigraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dyadic weights: every path sum is exact in binary, so ties are real ties.
pub const WEIGHTS: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

/// Random digraph on `n` nodes with `source_count` sources, every node
/// reaching a source through a random spanning in-forest, plus extra edges.
pub fn random_graph(seed: u64, n: usize, source_count: usize, p: f64) -> WeightedDigraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut present = vec![false; n * n];
    let mut edges = Vec::new();
    let mut push = |tail: usize, head: usize, rng: &mut ChaCha8Rng, present: &mut Vec<bool>| {
        present[tail * n + head] = true;
        edges.push(Edge {
            tail,
            head,
            weight: WEIGHTS[rng.gen_range(0..WEIGHTS.len())],
        });
    };
    for i in source_count..n {
        let j = rng.gen_range(0..i);
        push(i, j, &mut rng, &mut present);
    }
    for i in source_count..n {
        for j in 0..n {
            if i != j && !present[i * n + j] && rng.gen_bool(p) {
                push(i, j, &mut rng, &mut present);
            }
        }
    }
    WeightedDigraph::new(n, 0..source_count, edges).unwrap()
}

pub struct Brute {
    pub distances: Vec<f64>,
    pub true_parents: Vec<Vec<usize>>,
    pub effective_diameter: usize,
    pub path_gap: Option<f64>,
}

fn adjacency(g: &WeightedDigraph) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); g.node_count()];
    for e in g.edges() {
        adj[e.tail].push((e.head, e.weight));
    }
    adj
}

// Shortest simple path from `node` to a source avoiding `visited`.
fn best_simple(
    g: &WeightedDigraph,
    adj: &[Vec<(usize, f64)>],
    node: usize,
    visited: &mut [bool],
) -> f64 {
    if g.is_source(node) {
        return 0.0;
    }
    visited[node] = true;
    let mut best = f64::INFINITY;
    for &(j, w) in &adj[node] {
        if !visited[j] {
            best = best.min(w + best_simple(g, adj, j, visited));
        }
    }
    visited[node] = false;
    best
}

// Longest node count of a chain along `parents` ending at a source.
fn longest_chain(g: &WeightedDigraph, parents: &[Vec<usize>], node: usize) -> usize {
    if g.is_source(node) {
        return 1;
    }
    1 + parents[node]
        .iter()
        .map(|&j| longest_chain(g, parents, j))
        .max()
        .unwrap_or(0)
}

/// Enumerates every simple path. A neighbor `j` is a true parent when the
/// best simple path whose first hop is `i -> j` is a shortest one.
pub fn brute_force(g: &WeightedDigraph) -> Brute {
    let n = g.node_count();
    let adj = adjacency(g);
    let mut visited = vec![false; n];
    let distances: Vec<f64> = (0..n)
        .map(|i| best_simple(g, &adj, i, &mut visited))
        .collect();
    let mut true_parents = vec![Vec::new(); n];
    let mut gap: Option<f64> = None;
    for i in g.non_sources() {
        for &(j, w) in &adj[i] {
            visited[i] = true;
            let via = w + best_simple(g, &adj, j, &mut visited);
            visited[i] = false;
            if via == distances[i] {
                true_parents[i].push(j);
            } else {
                let slack = distances[j] + w - distances[i];
                gap = Some(gap.map_or(slack, |z| z.min(slack)));
            }
        }
        true_parents[i].sort_unstable();
    }
    let effective_diameter = (0..n)
        .map(|i| longest_chain(g, &true_parents, i))
        .max()
        .unwrap();
    Brute {
        distances,
        true_parents,
        effective_diameter,
        path_gap: gap,
    }
}
