//! Command-line front end.
//!
//! Exit codes: 0 success, 1 error, 2 the run finished but some node did not
//! identify a true parent.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use dbmc::analysis::{compute_ts, q_grid, sweep_q, TsInputs};
use dbmc::dynamics::{simulate, step_times, GainParams};
use dbmc::graph::{load_graph, solve_shortest_paths, ShortestPathSolution};
use dbmc::harness::output::write_atomic;
use dbmc::harness::run::{write_curves, write_trajectory};
use dbmc::harness::{
    bound_curves, generate_graph, prepare, run_scenario, EndRule, GeneratorSpec, HarnessError,
    ScenarioFile,
};

#[derive(Parser)]
#[command(name = "dbmc", version, about = "Biased min-consensus with early termination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; defaults to the scenario's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    q: Option<f64>,
    /// End time, or `auto` for the early termination time.
    #[arg(long)]
    t_end: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact distances, true parents, effective diameter and path gap.
    Solve {
        #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
        graph: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Integrate the flow and write `trajectory.csv`.
    Simulate(ScenarioArgs),
    /// Write the bound curves on the integrator's time grid.
    Bounds(ScenarioArgs),
    /// Early termination time, from a scenario or from numbers.
    Ts(TsArgs),
    /// Full pipeline with every artifact and the identification report.
    Run(ScenarioArgs),
    /// Generate a graph in the edge-list format.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TsArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, required_unless_present = "scenario")]
    zeta: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    u_minus: f64,
    #[arg(long, default_value_t = 0.0)]
    u_plus: f64,
    /// Effective diameter of the graph.
    #[arg(long, required_unless_present = "scenario")]
    d: Option<usize>,
    /// Effective diameter of the most-shrunk graph; defaults to `d`.
    #[arg(long)]
    d_minus: Option<usize>,
    #[arg(long, required_unless_present = "scenario")]
    chi0: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long, default_value_t = 12.0)]
    h: f64,
    #[arg(long, default_value_t = 5.0)]
    horizon: f64,
    /// Also report the `q` giving the earliest time.
    #[arg(long)]
    sweep: bool,
}

#[derive(Subcommand)]
enum GenKind {
    Line {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        competitors: bool,
    },
    HopCount {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Grid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
    },
}

fn load_scenario(args: &ScenarioArgs) -> Result<(ScenarioFile, PathBuf), HarnessError> {
    let mut file = ScenarioFile::load(&args.scenario)?;
    let s = &mut file.scenario;
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    if let Some(q) = args.q {
        s.analysis.q = q;
    }
    match args.t_end.as_deref() {
        None => {}
        Some("auto") => s.horizon = EndRule::EarlyTermination,
        Some(v) => {
            let t_end = v
                .parse()
                .map_err(|_| HarnessError::Spec(format!("--t-end: expected a number or `auto`, got {v:?}")))?;
            s.horizon = EndRule::Time { t_end };
        }
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| file.base_dir().join(&file.scenario.output));
    Ok((file, out))
}

#[derive(Serialize)]
struct SolveJson {
    distances: Vec<f64>,
    true_parents: Vec<Vec<usize>>,
    effective_diameter: usize,
    path_gap: Option<f64>,
}

impl From<&ShortestPathSolution> for SolveJson {
    fn from(sol: &ShortestPathSolution) -> Self {
        Self {
            distances: sol.distances.clone(),
            true_parents: sol
                .true_parents
                .iter()
                .map(|ps| ps.iter().map(|p| p + 1).collect())
                .collect(),
            effective_diameter: sol.effective_diameter,
            path_gap: sol.path_gap,
        }
    }
}

// Write errors (a closed pipe) are not worth a panic.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_json<T: Serialize>(value: &T) {
    emit(&format!("{}\n", serde_json::to_string_pretty(value).expect("serializable")));
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ts_command(args: &TsArgs) -> Result<(), HarnessError> {
    let inputs = match &args.scenario {
        Some(path) => {
            let mut file = ScenarioFile::load(path)?;
            if let Some(q) = args.q {
                file.scenario.analysis.q = q;
            }
            // The end rule is irrelevant here and may itself need t_s.
            file.scenario.horizon = EndRule::Fraction { fraction: 0.5 };
            let p = prepare(&file)?;
            p.bound_context().ts_inputs(p.solution.effective_diameter)
        }
        None => {
            let d = args.d.expect("required by clap");
            let params = GainParams::new(args.gamma, args.h, args.horizon)?;
            TsInputs {
                zeta: args.zeta,
                u_minus: args.u_minus,
                u_plus: args.u_plus,
                diameter: d,
                minus_diameter: args.d_minus.unwrap_or(d),
                chi0: args.chi0.expect("required by clap"),
                q: args.q.unwrap_or(dbmc::analysis::DEFAULT_Q),
                params,
            }
        }
    };
    let ts = compute_ts(&inputs)?;
    let mut json = serde_json::json!({ "inputs": inputs, "termination_time": ts });
    if args.sweep {
        let (q, best) = sweep_q(&inputs, &q_grid(1.01, 100.0, 400))?;
        json["best_q"] = q.into();
        json["best_termination_time"] = serde_json::to_value(best).expect("serializable");
    }
    print_json(&json);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Solve { graph, scenario } => {
            let sol = match (graph, scenario) {
                (Some(path), _) => {
                    let g = load_graph(&read(&path)?).map_err(|e| HarnessError::Located {
                        location: path.display().to_string(),
                        source: Box::new(e.into()),
                    })?;
                    solve_shortest_paths(&g)?
                }
                (None, Some(path)) => {
                    let mut file = ScenarioFile::load(&path)?;
                    file.scenario.horizon = EndRule::Fraction { fraction: 0.5 };
                    prepare(&file)?.solution
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            print_json(&SolveJson::from(&sol));
        }
        Command::Simulate(args) => {
            let (file, out) = load_scenario(&args)?;
            let p = prepare(&file)?;
            let traj = simulate(
                &p.graph,
                &p.solution,
                &p.model,
                &p.params,
                &p.x0,
                p.t_end,
                &file.scenario.integrator,
            )?;
            let path = write_trajectory(&out, &traj)?;
            info!("wrote {}", path.display());
        }
        Command::Bounds(args) => {
            let (file, out) = load_scenario(&args)?;
            let p = prepare(&file)?;
            let times = step_times(&p.params, p.t_end, &file.scenario.integrator)?;
            for path in write_curves(&out, &bound_curves(&p, &times)?)? {
                info!("wrote {}", path.display());
            }
        }
        Command::Ts(args) => ts_command(&args)?,
        Command::Run(args) => {
            let (file, out) = load_scenario(&args)?;
            let outcome = run_scenario(&file, &out)?;
            print_json(&outcome.summary);
            if !outcome.report.overall {
                eprintln!("identification failed for at least one node; see report.json");
            }
            return Ok(ExitCode::from(outcome.exit_code() as u8));
        }
        Command::Gen { kind, out } => {
            let spec = match kind {
                GenKind::Line { n, competitors } => GeneratorSpec::Line { n, competitors },
                GenKind::HopCount { n, p, seed } => GeneratorSpec::HopCountRandom {
                    n,
                    p,
                    seed: Some(seed),
                },
                GenKind::Grid { rows, cols } => GeneratorSpec::Grid { rows, cols },
            };
            let text = generate_graph(&spec, 0)?.to_edge_list();
            match out {
                Some(path) => {
                    write_atomic(&path, |w| w.write_all(text.as_bytes()))?;
                }
                None => emit(&text),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DBMC_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
