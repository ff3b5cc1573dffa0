//! Unit-weight (hop-count) test topologies.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::graph::{Edge, WeightedDigraph};

/// Weight of the competitor edges added by [`GeneratorSpec::Line`]. Each
/// competitor skips one hop at a cost one unit above the optimum, so the
/// competitor gap is exactly 1.
pub const COMPETITOR_WEIGHT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    /// Chain `n -> n-1 -> ... -> 1`. With `competitors`, every node
    /// `i >= 3` also gets an edge `i -> i-2` of weight 3.
    Line {
        n: usize,
        #[serde(default)]
        competitors: bool,
    },
    /// Random spanning in-tree towards node 1 plus each remaining ordered
    /// pair with probability `p`.
    HopCountRandom {
        n: usize,
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// 4-neighbor grid with edges in both directions; node 1 at a corner.
    Grid { rows: usize, cols: usize },
}

fn unit(tail: usize, head: usize) -> Edge {
    Edge {
        tail,
        head,
        weight: 1.0,
    }
}

/// Builds the graph; node 1 is the only source. `default_seed` is used when
/// a random generator has no seed of its own.
pub fn generate_graph(
    spec: &GeneratorSpec,
    default_seed: u64,
) -> Result<WeightedDigraph, HarnessError> {
    let spec_err = |msg: String| HarnessError::Spec(msg);
    let (n, edges) = match *spec {
        GeneratorSpec::Line { n, competitors } => {
            if n < 2 {
                return Err(spec_err(format!("line needs n >= 2, got {n}")));
            }
            let mut edges: Vec<Edge> = (1..n).map(|i| unit(i, i - 1)).collect();
            if competitors {
                edges.extend((2..n).map(|i| Edge {
                    tail: i,
                    head: i - 2,
                    weight: COMPETITOR_WEIGHT,
                }));
            }
            (n, edges)
        }
        GeneratorSpec::HopCountRandom { n, p, seed } => {
            if n < 2 {
                return Err(spec_err(format!("hop-count-random needs n >= 2, got {n}")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(spec_err(format!("edge probability {p} outside [0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(default_seed));
            let mut present = vec![false; n * n];
            let mut edges = Vec::new();
            for i in 1..n {
                let j = rng.gen_range(0..i);
                present[i * n + j] = true;
                edges.push(unit(i, j));
            }
            for i in 1..n {
                for j in 0..n {
                    if i != j && !present[i * n + j] && rng.gen_bool(p) {
                        present[i * n + j] = true;
                        edges.push(unit(i, j));
                    }
                }
            }
            (n, edges)
        }
        GeneratorSpec::Grid { rows, cols } => {
            if rows == 0 || cols == 0 || rows * cols < 2 {
                return Err(spec_err(format!("grid {rows}x{cols} needs at least 2 nodes")));
            }
            let id = |r: usize, c: usize| r * cols + c;
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        edges.push(unit(id(r, c), id(r, c + 1)));
                        edges.push(unit(id(r, c + 1), id(r, c)));
                    }
                    if r + 1 < rows {
                        edges.push(unit(id(r, c), id(r + 1, c)));
                        edges.push(unit(id(r + 1, c), id(r, c)));
                    }
                }
            }
            (rows * cols, edges)
        }
    };
    WeightedDigraph::new(n, [0], edges).map_err(HarnessError::Graph)
}

/// Synthetic 2-D node positions for plotting.
pub fn layout(spec: Option<&GeneratorSpec>, node_count: usize) -> Vec<(f64, f64)> {
    match spec {
        Some(GeneratorSpec::Line { .. }) => (0..node_count).map(|i| (i as f64, 0.0)).collect(),
        Some(GeneratorSpec::Grid { cols, .. }) => (0..node_count)
            .map(|i| ((i % cols) as f64, (i / cols) as f64))
            .collect(),
        _ => (0..node_count)
            .map(|i| {
                let a = TAU * i as f64 / node_count as f64;
                (a.cos(), a.sin())
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{check_reachability, solve_shortest_paths};

    #[test]
    fn line_three() {
        let g = generate_graph(&GeneratorSpec::Line { n: 3, competitors: false }, 0).unwrap();
        assert_eq!(g.edges(), &[unit(1, 0), unit(2, 1)]);
    }

    #[test]
    fn line_thirteen_diameter() {
        for competitors in [false, true] {
            let g = generate_graph(&GeneratorSpec::Line { n: 13, competitors }, 0).unwrap();
            let sol = solve_shortest_paths(&g).unwrap();
            assert_eq!(sol.effective_diameter, 13);
            assert_eq!(sol.path_gap, competitors.then_some(1.0));
        }
    }

    #[test]
    fn random_hop_count_seed_7() {
        let spec = GeneratorSpec::HopCountRandom {
            n: 13,
            p: 0.2,
            seed: Some(7),
        };
        let g = generate_graph(&spec, 0).unwrap();
        assert!(check_reachability(&g));
        assert_eq!(solve_shortest_paths(&g).unwrap().path_gap, Some(1.0));
        assert_eq!(generate_graph(&spec, 99).unwrap(), g);
    }

    #[test]
    fn grid_is_reachable() {
        let g = generate_graph(&GeneratorSpec::Grid { rows: 3, cols: 4 }, 0).unwrap();
        assert_eq!(g.node_count(), 12);
        let sol = solve_shortest_paths(&g).unwrap();
        assert_eq!(sol.distances[11], 5.0);
        // Bipartite: every neighbor is one hop nearer or farther.
        assert_eq!(sol.path_gap, Some(2.0));
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(generate_graph(&GeneratorSpec::Line { n: 1, competitors: false }, 0).is_err());
        assert!(generate_graph(&GeneratorSpec::Grid { rows: 1, cols: 1 }, 0).is_err());
        let bad = GeneratorSpec::HopCountRandom { n: 5, p: 1.5, seed: None };
        assert!(generate_graph(&bad, 0).is_err());
    }
}
