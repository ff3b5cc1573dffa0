//! Parent extraction from stopped states, path tracing, and the
//! correct-identification verdict.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disturbance::DisturbanceModel;
use crate::graph::{ShortestPathSolution, WeightedDigraph};

/// Tie window for the diagnostic listing of near-minimal neighbors.
pub const DIAGNOSTIC_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("cycle through node {} while tracing parents", .node + 1)]
    Cycle { node: usize },
    #[error("non-source node {} has no parent", .node + 1)]
    MissingParent { node: usize },
}

/// For each non-source node, the out-neighbors whose
/// `x_j + w_ij + u_ij(t)` lies within `tie_tol` of the minimum. Sources get
/// an empty set.
pub fn current_parents(
    g: &WeightedDigraph,
    model: &DisturbanceModel,
    x: &[f64],
    t: f64,
    tie_tol: f64,
) -> Vec<Vec<usize>> {
    assert_eq!(x.len(), g.node_count(), "one state per node");
    (0..g.node_count())
        .map(|i| {
            if g.is_source(i) {
                return Vec::new();
            }
            let values: Vec<(usize, f64)> = g
                .out_edges(i)
                .map(|(idx, e)| (e.head, x[e.head] + e.weight + model.value(idx, t)))
                .collect();
            let best = values.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
            values
                .into_iter()
                .filter(|&(_, v)| v - best <= tie_tol)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// Follows the smallest-id parent from `start` until a source is reached.
pub fn reconstruct_path(
    g: &WeightedDigraph,
    start: usize,
    parents: &[Vec<usize>],
) -> Result<Vec<usize>, PathError> {
    let mut visited = vec![false; g.node_count()];
    let mut path = vec![start];
    visited[start] = true;
    let mut cur = start;
    while !g.is_source(cur) {
        let next = *parents[cur]
            .iter()
            .min()
            .ok_or(PathError::MissingParent { node: cur })?;
        if visited[next] {
            return Err(PathError::Cycle { node: next });
        }
        visited[next] = true;
        path.push(next);
        cur = next;
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Correct,
    Incorrect,
    SourceNode,
}

/// Per-node verdicts: a non-source node is correct iff its current parent
/// set is nonempty and contained in its true parent set.
pub fn check_identification(
    g: &WeightedDigraph,
    current: &[Vec<usize>],
    truth: &[Vec<usize>],
) -> (Vec<Verdict>, bool) {
    let verdicts: Vec<Verdict> = (0..g.node_count())
        .map(|i| {
            if g.is_source(i) {
                Verdict::SourceNode
            } else if !current[i].is_empty() && current[i].iter().all(|j| truth[i].contains(j)) {
                Verdict::Correct
            } else {
                Verdict::Incorrect
            }
        })
        .collect();
    let overall = verdicts.iter().all(|v| *v != Verdict::Incorrect);
    (verdicts, overall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    /// 1-based node id.
    pub node: usize,
    /// 1-based ids.
    pub current_parents: Vec<usize>,
    /// Neighbors within the diagnostic tie window, 1-based.
    pub near_parents: Vec<usize>,
    pub verdict: Verdict,
    /// 1-based path to a source; `None` when tracing fails.
    pub path: Option<Vec<usize>>,
    /// `x_i(t_s)`.
    pub state: f64,
    /// `p_i`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationReport {
    pub t_s: f64,
    pub overall: bool,
    pub nodes: Vec<NodeReport>,
}

impl TerminationReport {
    /// Stops the flow at `t_s` with states `x` and judges every node.
    pub fn evaluate(
        g: &WeightedDigraph,
        sol: &ShortestPathSolution,
        model: &DisturbanceModel,
        x: &[f64],
        t_s: f64,
    ) -> Self {
        let current = current_parents(g, model, x, t_s, 0.0);
        let near = current_parents(g, model, x, t_s, DIAGNOSTIC_TIE_TOL);
        let (verdicts, overall) = check_identification(g, &current, &sol.true_parents);
        let one_based = |v: &[usize]| v.iter().map(|i| i + 1).collect::<Vec<_>>();
        let nodes = (0..g.node_count())
            .map(|i| NodeReport {
                node: i + 1,
                current_parents: one_based(&current[i]),
                near_parents: one_based(&near[i]),
                verdict: verdicts[i],
                path: reconstruct_path(g, i, &current).ok().map(|p| one_based(&p)),
                state: x[i],
                distance: sol.distances[i],
            })
            .collect();
        Self {
            t_s,
            overall,
            nodes,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{load_graph, solve_shortest_paths};

    fn competitor_graph() -> WeightedDigraph {
        load_graph("nodes 3\nsources 1\n2 1 1\n3 2 1\n3 1 3\n").unwrap()
    }

    #[test]
    fn optimal_states_give_true_parents() {
        let g = load_graph("nodes 4\nsources 1\n2 1 1\n3 1 1\n4 2 1\n4 3 1\n3 2 3\n").unwrap();
        let sol = solve_shortest_paths(&g).unwrap();
        let m = DisturbanceModel::zero(&g, 5.0);
        let cur = current_parents(&g, &m, &sol.distances, 1.0, 0.0);
        assert_eq!(cur, sol.true_parents);
        let (verdicts, overall) = check_identification(&g, &cur, &sol.true_parents);
        assert!(overall);
        assert_eq!(verdicts[0], Verdict::SourceNode);
        assert!(verdicts[1..].iter().all(|v| *v == Verdict::Correct));
    }

    #[test]
    fn tie_window() {
        let g = competitor_graph();
        let m = DisturbanceModel::zero(&g, 5.0);
        // Node 3: via 2 -> 2.0 + 1 = 3.0, via 1 -> 0.0000005 + 3 = 3.0000005.
        let x = [0.0000005, 2.0, 9.0];
        assert_eq!(current_parents(&g, &m, &x, 0.0, 1e-6)[2], vec![0, 1]);
        assert_eq!(current_parents(&g, &m, &x, 0.0, 0.0)[2], vec![1]);
    }

    #[test]
    fn incorrect_parent_fails_overall() {
        let g = competitor_graph();
        let sol = solve_shortest_paths(&g).unwrap();
        let mut cur = sol.true_parents.clone();
        cur[2] = vec![0, 1];
        let (v, overall) = check_identification(&g, &cur, &sol.true_parents);
        assert_eq!(v[2], Verdict::Incorrect);
        assert!(!overall);
        cur[2] = vec![];
        assert!(!check_identification(&g, &cur, &sol.true_parents).1);
    }

    #[test]
    fn path_tracing() {
        let g = competitor_graph();
        let sol = solve_shortest_paths(&g).unwrap();
        assert_eq!(reconstruct_path(&g, 0, &sol.true_parents).unwrap(), vec![0]);
        assert_eq!(reconstruct_path(&g, 2, &sol.true_parents).unwrap(), vec![2, 1, 0]);

        let g = load_graph("nodes 3\nsources 1\n2 1 1\n2 3 1\n3 2 1\n").unwrap();
        let parents = vec![vec![], vec![2], vec![1]];
        assert_eq!(
            reconstruct_path(&g, 1, &parents),
            Err(PathError::Cycle { node: 1 })
        );
        let parents = vec![vec![], vec![2], vec![]];
        assert_eq!(
            reconstruct_path(&g, 1, &parents),
            Err(PathError::MissingParent { node: 2 })
        );
    }

    #[test]
    fn report_json_fields() {
        let g = competitor_graph();
        let sol = solve_shortest_paths(&g).unwrap();
        let m = DisturbanceModel::zero(&g, 5.0);
        let report = TerminationReport::evaluate(&g, &sol, &m, &sol.distances, 3.0);
        assert!(report.overall);
        let v: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(v["t_s"], 3.0);
        assert_eq!(v["overall"], true);
        assert_eq!(v["nodes"][2]["path"], serde_json::json!([3, 2, 1]));
        assert_eq!(v["nodes"][2]["verdict"], "correct");
        assert_eq!(v["nodes"][0]["verdict"], "source-node");
    }
}
