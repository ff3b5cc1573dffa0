//! The full pipeline: graph, disturbance, termination time, integration,
//! bound curves, identification verdict and artifacts.

use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;

use super::generate::{generate_graph, layout, GeneratorSpec};
use super::output::{self, write_atomic};
use super::scenario::{EndRule, GraphSource, InitialStates, ScenarioFile};
use super::HarnessError;
use crate::analysis::{
    compute_ts, q_grid, sweep_q, BoundContext, BoundCurve, BoundKind, TerminationTime, TsError,
};
use crate::disturbance::{build_model, DisturbanceModel};
use crate::dynamics::{initial_errors, simulate, step_times, GainParams, Trajectory};
use crate::graph::{
    load_graph, minus_graph, solve_shortest_paths, ShortestPathSolution, WeightedDigraph,
};
use crate::termination::TerminationReport;

/// Pointwise slack allowed between simulated errors and bound curves.
pub const BOUND_TOL: f64 = 1e-6;

/// Scenario resolved into concrete graph, model and times.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: WeightedDigraph,
    pub generator: Option<GeneratorSpec>,
    pub solution: ShortestPathSolution,
    pub minus_solution: ShortestPathSolution,
    pub model: DisturbanceModel,
    pub params: GainParams,
    pub x0: Vec<f64>,
    pub initial_errors: Vec<f64>,
    pub chi0: f64,
    pub q: f64,
    pub termination: Result<TerminationTime, TsError>,
    /// Earliest termination time over a grid of `q`, when requested.
    pub best_q: Option<(f64, TerminationTime)>,
    pub t_end: f64,
    pub focus_node: usize,
    pub bounds: Vec<BoundKind>,
}

impl Prepared {
    pub fn bound_context(&self) -> BoundContext<'_> {
        BoundContext {
            graph: &self.graph,
            solution: &self.solution,
            model: &self.model,
            minus_diameter: self.minus_solution.effective_diameter,
            initial_errors: self.initial_errors.clone(),
            chi0: self.chi0,
            q: self.q,
            params: self.params,
        }
    }
}

fn resolve_graph(
    file: &ScenarioFile,
) -> Result<(WeightedDigraph, Option<GeneratorSpec>), HarnessError> {
    match &file.scenario.graph {
        GraphSource::File { path } => {
            let path = file.base_dir().join(path);
            let text = std::fs::read_to_string(&path).map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            let g = load_graph(&text).map_err(|e| HarnessError::Located {
                location: path.display().to_string(),
                source: Box::new(e.into()),
            })?;
            Ok((g, None))
        }
        GraphSource::Generated(spec) => {
            Ok((generate_graph(spec, file.scenario.seed)?, Some(spec.clone())))
        }
    }
}

pub fn prepare(file: &ScenarioFile) -> Result<Prepared, HarnessError> {
    let s = &file.scenario;
    let at = |section: &'static str| move |e: HarnessError| file.locate(section, e);

    let (graph, generator) = resolve_graph(file).map_err(at("graph"))?;
    let solution = solve_shortest_paths(&graph)
        .map_err(HarnessError::from)
        .map_err(at("graph"))?;

    s.gain.validate().map_err(HarnessError::from).map_err(at("gain"))?;
    let params = s.gain;

    let model = build_model(&s.disturbance, &graph, params.horizon, s.seed)
        .map_err(HarnessError::from)
        .map_err(at("disturbance"))?;
    let minus = minus_graph(&graph, &model.lower_bounds())
        .map_err(HarnessError::from)
        .map_err(at("disturbance"))?;
    let minus_solution = solve_shortest_paths(&minus)
        .map_err(HarnessError::from)
        .map_err(at("disturbance"))?;

    let x0 = match &s.initial {
        InitialStates::Constant { constant } => (0..graph.node_count())
            .map(|i| if graph.is_source(i) { 0.0 } else { *constant })
            .collect(),
        InitialStates::Explicit { values } => values.clone(),
    };
    let initial_errors = initial_errors(&graph, &solution, &x0)
        .map_err(HarnessError::from)
        .map_err(at("initial"))?;

    let max_e0 = initial_errors.iter().copied().fold(0.0, f64::max);
    let chi0 = match s.analysis.chi0 {
        None => max_e0,
        Some(c) if c >= max_e0 => c,
        Some(c) => {
            return Err(at("analysis")(HarnessError::Spec(format!(
                "chi0 = {c} is below the largest initial error {max_e0}"
            ))))
        }
    };
    let q = s.analysis.q;

    let mut prepared = Prepared {
        graph,
        generator,
        solution,
        minus_solution,
        model,
        params,
        x0,
        initial_errors,
        chi0,
        q,
        termination: Err(TsError::NotApplicable),
        best_q: None,
        t_end: 0.0,
        focus_node: 0,
        bounds: s.analysis.bounds.clone(),
    };
    let ts_inputs = prepared
        .bound_context()
        .ts_inputs(prepared.solution.effective_diameter);
    prepared.termination = compute_ts(&ts_inputs);
    if s.analysis.q_sweep {
        prepared.best_q = sweep_q(&ts_inputs, &q_grid(1.01, 100.0, 400)).ok();
    }

    prepared.t_end = match s.horizon {
        EndRule::Time { t_end } => t_end,
        EndRule::Fraction { fraction } => fraction * params.horizon,
        EndRule::EarlyTermination => match &prepared.termination {
            Ok(tt) => tt.t_s,
            Err(e) => {
                return Err(at("horizon")(HarnessError::Spec(format!(
                    "cannot stop at the early termination time: {e}"
                ))))
            }
        },
    };
    // Validates t_end against the prescribed time.
    step_times(&params, prepared.t_end, &s.integrator)
        .map_err(HarnessError::from)
        .map_err(at("horizon"))?;

    prepared.focus_node = match s.focus_node {
        Some(id) if (1..=prepared.graph.node_count()).contains(&id) => id - 1,
        Some(id) => {
            return Err(HarnessError::Spec(format!(
                "focus_node {id} outside 1..={}",
                prepared.graph.node_count()
            )))
        }
        None => prepared
            .graph
            .non_sources()
            .max_by(|&a, &b| {
                let d = &prepared.solution.distances;
                d[a].total_cmp(&d[b]).then(b.cmp(&a))
            })
            .expect("non-source set is nonempty"),
    };
    Ok(prepared)
}

pub fn bound_curves(prepared: &Prepared, times: &[f64]) -> Result<Vec<BoundCurve>, HarnessError> {
    let ctx = prepared.bound_context();
    let mut curves = Vec::new();
    for &kind in &prepared.bounds {
        if !ctx.applies(kind) {
            warn!("{kind} bound does not apply to this disturbance model; skipped");
            continue;
        }
        curves.push(ctx.curve(kind, times)?);
    }
    Ok(curves)
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub node_count: usize,
    pub edge_count: usize,
    pub effective_diameter: usize,
    pub minus_effective_diameter: usize,
    pub path_gap: Option<f64>,
    pub u_minus: f64,
    pub u_plus: f64,
    pub chi0: f64,
    pub q: f64,
    pub termination_time: Option<TerminationTime>,
    pub termination_status: String,
    pub best_q: Option<f64>,
    pub best_termination_time: Option<f64>,
    pub t_end: f64,
    pub steps: usize,
    pub max_abs_final_error: f64,
    pub bound_violations: usize,
    pub overall: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub prepared: Prepared,
    pub trajectory: Trajectory,
    pub curves: Vec<BoundCurve>,
    pub report: TerminationReport,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    /// 0 when every node identified a true parent, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.overall {
            0
        } else {
            2
        }
    }
}

pub fn write_trajectory(out_dir: &Path, traj: &Trajectory) -> Result<PathBuf, HarnessError> {
    write_atomic(&out_dir.join("trajectory.csv"), |w| traj.write_csv(w))
}

pub fn write_curves(out_dir: &Path, curves: &[BoundCurve]) -> Result<Vec<PathBuf>, HarnessError> {
    curves
        .iter()
        .map(|c| write_atomic(&out_dir.join(format!("bounds_{}.csv", c.kind)), |w| c.write_csv(w)))
        .collect()
}

/// Runs the pipeline without writing anything.
pub fn execute(file: &ScenarioFile) -> Result<RunOutcome, HarnessError> {
    let prepared = prepare(file)?;
    info!(
        "n = {}, D(G) = {}, D(G-) = {}, zeta = {:?}, t_end = {}",
        prepared.graph.node_count(),
        prepared.solution.effective_diameter,
        prepared.minus_solution.effective_diameter,
        prepared.solution.path_gap,
        prepared.t_end
    );
    let traj = simulate(
        &prepared.graph,
        &prepared.solution,
        &prepared.model,
        &prepared.params,
        &prepared.x0,
        prepared.t_end,
        &file.scenario.integrator,
    )?;
    let curves = bound_curves(&prepared, &traj.times)?;
    let violations: Vec<_> = curves
        .iter()
        .flat_map(|c| c.violations(&traj, BOUND_TOL))
        .collect();

    let final_states = traj.final_states();
    let report = TerminationReport::evaluate(
        &prepared.graph,
        &prepared.solution,
        &prepared.model,
        &final_states,
        traj.t_end(),
    );

    let last = traj.len() - 1;
    let summary = Summary {
        node_count: prepared.graph.node_count(),
        edge_count: prepared.graph.edge_count(),
        effective_diameter: prepared.solution.effective_diameter,
        minus_effective_diameter: prepared.minus_solution.effective_diameter,
        path_gap: prepared.solution.path_gap,
        u_minus: prepared.model.uniform_lower(),
        u_plus: prepared.model.uniform_upper(),
        chi0: prepared.chi0,
        q: prepared.q,
        termination_time: prepared.termination.as_ref().ok().copied(),
        termination_status: match &prepared.termination {
            Ok(_) => "feasible".into(),
            Err(e) => e.to_string(),
        },
        best_q: prepared.best_q.map(|(q, _)| q),
        best_termination_time: prepared.best_q.map(|(_, tt)| tt.t_s),
        t_end: traj.t_end(),
        steps: last,
        max_abs_final_error: traj
            .errors_at(last)
            .iter()
            .map(|e| e.abs())
            .fold(0.0, f64::max),
        bound_violations: violations.len(),
        overall: report.overall,
    };

    if let Some(v) = violations.first() {
        warn!("{} bound violations", violations.len());
        return Err(HarnessError::BoundViolation {
            count: violations.len(),
            first: format!(
                "{} at t = {}, node {}: e = {:e} outside [{:e}, {:e}]",
                v.kind,
                v.t,
                v.node + 1,
                v.error,
                v.lower,
                v.upper
            ),
        });
    }

    Ok(RunOutcome {
        prepared,
        trajectory: traj,
        curves,
        report,
        summary,
        files: Vec::new(),
    })
}

/// Runs the pipeline and writes every artifact into `out_dir`.
pub fn run_scenario(file: &ScenarioFile, out_dir: &Path) -> Result<RunOutcome, HarnessError> {
    let mut outcome = execute(file)?;
    let RunOutcome {
        prepared,
        trajectory: traj,
        curves,
        report,
        summary,
        files,
    } = &mut outcome;

    files.push(write_trajectory(out_dir, traj)?);
    files.extend(write_curves(out_dir, curves)?);
    files.push(write_atomic(&out_dir.join("report.json"), |w| {
        writeln!(w, "{}", report.to_json())
    })?);
    files.push(write_atomic(&out_dir.join("summary.json"), |w| {
        writeln!(
            w,
            "{}",
            serde_json::to_string_pretty(summary).expect("summary serializes")
        )
    })?);

    files.push(write_atomic(&out_dir.join("errors.csv"), |w| {
        output::write_error_curves(w, traj)
    })?);
    let focus = prepared.focus_node;
    files.push(write_atomic(
        &out_dir.join(format!("node_{}_bounds.csv", focus + 1)),
        |w| output::write_node_bounds(w, traj, focus, curves),
    )?);
    let path: Vec<usize> = report.nodes[focus]
        .path
        .clone()
        .unwrap_or_default()
        .into_iter()
        .map(|id| id - 1)
        .collect();
    files.push(write_atomic(&out_dir.join("path_edges.csv"), |w| {
        output::write_path_edges(w, &prepared.graph, &path)
    })?);
    let positions = layout(prepared.generator.as_ref(), prepared.graph.node_count());
    let states = traj.final_states();
    files.push(write_atomic(&out_dir.join("path_nodes.csv"), |w| {
        output::write_path_nodes(w, &positions, &states, &path)
    })?);

    info!(
        "t_end = {}, identification {}",
        traj.t_end(),
        if report.overall { "correct" } else { "FAILED" }
    );
    Ok(outcome)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::Scenario;

    fn scenario(extra: &str) -> ScenarioFile {
        let text = format!(
            r#"
seed = 3
[graph]
kind = "line"
n = 6
competitors = true
[disturbance]
kind = "sinusoid"
amplitude = 0.03
omega = 4.0
absolute = true
[gain]
gamma = 2.0
h = 12.0
horizon = 5.0
[initial]
constant = 6.0
{extra}
"#
        );
        ScenarioFile::from_text(PathBuf::from("mem.toml"), text).unwrap()
    }

    #[test]
    fn early_termination_rule_uses_computed_time() {
        let file = scenario("[horizon]\nrule = \"early-termination\"\n");
        let p = prepare(&file).unwrap();
        let tt = p.termination.clone().unwrap();
        assert_eq!(p.t_end, tt.t_s);
        assert_eq!(p.focus_node, 5);
    }

    #[test]
    fn zero_disturbance_run_stays_below_nominal_bound() {
        let mut file = scenario("[horizon]\nrule = \"fraction\"\nfraction = 0.999\n");
        file.scenario.disturbance = Scenario::from_toml(
            &file.scenario.to_toml().replace("kind = \"sinusoid\"\namplitude = 0.03\nomega = 4.0\nabsolute = true", "kind = \"zero\""),
        )
        .unwrap()
        .disturbance;
        let outcome = execute(&file).unwrap();
        assert_eq!(outcome.summary.u_plus, 0.0);
        assert!(outcome.report.overall);
        let chain = outcome.curves.iter().find(|c| c.kind == BoundKind::ChainSum).unwrap();
        let last = outcome.trajectory.len() - 1;
        for (pos, &node) in chain.nodes.iter().enumerate() {
            let e = outcome.trajectory.error(last, node);
            assert!(e >= 0.0 && e <= chain.upper(last, pos) + BOUND_TOL);
        }
    }

    #[test]
    fn underestimated_initial_state_names_node() {
        let mut file = scenario("[horizon]\nrule = \"time\"\nt_end = 1.0\n");
        file.scenario.initial = InitialStates::Explicit {
            values: vec![0.0, 1.0, 2.0, 1.5, 4.0, 5.0],
        };
        let err = prepare(&file).unwrap_err().to_string();
        assert!(err.contains("node 4"), "{err}");
        assert!(err.contains("[initial]"), "{err}");
    }

    #[test]
    fn infeasible_condition_blocks_early_termination_rule() {
        let mut file = scenario("[horizon]\nrule = \"early-termination\"\n");
        file.scenario.disturbance.uniform_upper = Some(0.3);
        let err = prepare(&file).unwrap_err().to_string();
        assert!(err.contains("termination condition fails"), "{err}");
    }
}
