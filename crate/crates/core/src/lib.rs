//! Distributed biased min-consensus under a prescribed-time gain with
//! bounded edge-weight disturbances.
//!
//! Every node `i` holds a state `x_i` that converges towards its shortest
//! path distance `p_i` to the source set. The crate simulates the flow,
//! evaluates closed-form error bounds, computes the early termination time
//! and checks whether the parents read off the states are true parents.
//!
//! Node ids are 0-based in the API and 1-based in all files and reports.

pub mod analysis;
pub mod disturbance;
pub mod dynamics;
pub mod graph;
pub mod harness;
pub mod termination;

pub use analysis::{compute_ts, BoundContext, BoundKind, TerminationTime, TsError, TsInputs};
pub use disturbance::{build_model, DisturbanceModel, DisturbanceSpec};
pub use dynamics::{simulate, GainParams, IntegratorOptions, Trajectory};
pub use graph::{load_graph, solve_shortest_paths, ShortestPathSolution, WeightedDigraph};
pub use termination::{check_identification, TerminationReport, Verdict};
