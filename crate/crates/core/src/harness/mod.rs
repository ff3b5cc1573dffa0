//! Scenario configuration, graph generators and the end-to-end pipeline
//! behind the `dbmc` binary.

pub mod generate;
pub mod output;
pub mod run;
pub mod scenario;

use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::{AnalysisError, TsError};
use crate::disturbance::DisturbanceError;
use crate::dynamics::DynamicsError;
use crate::graph::GraphError;

pub use generate::{generate_graph, GeneratorSpec};
pub use run::{bound_curves, execute, prepare, run_scenario, Prepared, RunOutcome};
pub use scenario::{EndRule, GraphSource, InitialStates, Scenario, ScenarioFile};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("{0}")]
    Spec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Disturbance(#[from] DisturbanceError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Termination(#[from] TsError),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{count} bound violations, first: {first}")]
    BoundViolation { count: usize, first: String },
    #[error("{location}: {source}")]
    Located {
        location: String,
        source: Box<HarnessError>,
    },
}
