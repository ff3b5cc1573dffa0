//! Scenario files: TOML with one table per concern.
//!
//! ```toml
//! seed = 7
//! output = "out"
//! focus_node = 8
//!
//! [graph]
//! kind = "line"            # line | hop-count-random | grid | file
//! n = 13
//! competitors = true
//!
//! [disturbance]
//! kind = "sinusoid"        # zero | sinusoid | piecewise-linear | proportional
//! amplitude = 0.03
//! omega = 6.0
//! absolute = true         # bounds are +-amplitude rather than +-amplitude*w
//!
//! [gain]
//! gamma = 2.0
//! h = 12.0
//! horizon = 5.0
//!
//! [initial]
//! constant = 12.0          # or: values = [0.0, 12.0, ...]
//!
//! [horizon]
//! rule = "early-termination"        # early-termination | time (t_end = ..) | fraction (fraction = ..)
//!
//! [analysis]
//! q = 3.0
//! chi0 = 12.0
//! bounds = ["chain-sum", "proportional", "uniform", "closed-form"]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::GeneratorSpec;
use super::HarnessError;
use crate::analysis::{BoundKind, DEFAULT_Q};
use crate::disturbance::DisturbanceSpec;
use crate::dynamics::{GainParams, IntegratorOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSource {
    File { path: PathBuf },
    Generated(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialStates {
    /// Every non-source node starts at `constant`; sources at 0.
    Constant { constant: f64 },
    /// One value per node, in node order.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum EndRule {
    Time { t_end: f64 },
    Fraction { fraction: f64 },
    /// Stop at the computed early termination time.
    EarlyTermination,
}

fn default_q() -> f64 {
    DEFAULT_Q
}

fn all_bounds() -> Vec<BoundKind> {
    BoundKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisOptions {
    #[serde(default = "default_q")]
    pub q: f64,
    /// Upward override of the initial-error bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi0: Option<f64>,
    #[serde(default = "all_bounds")]
    pub bounds: Vec<BoundKind>,
    /// Also report the `q` minimizing the termination time.
    #[serde(default)]
    pub q_sweep: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            q: DEFAULT_Q,
            chi0: None,
            bounds: all_bounds(),
            q_sweep: false,
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// 1-based node highlighted in the per-node plot data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus_node: Option<usize>,
    pub graph: GraphSource,
    pub disturbance: DisturbanceSpec,
    pub gain: GainParams,
    pub initial: InitialStates,
    pub horizon: EndRule,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    #[serde(default)]
    pub integrator: IntegratorOptions,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Scenario(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// A scenario together with the file it was read from.
#[derive(Debug, Clone)]
pub struct ScenarioFile {
    pub path: PathBuf,
    pub text: String,
    pub scenario: Scenario,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let scenario = Scenario::from_toml(&text).map_err(|e| match e {
            HarnessError::Scenario(msg) => {
                HarnessError::Scenario(format!("{}: {msg}", path.display()))
            }
            other => other,
        })?;
        Ok(Self {
            path: path.to_path_buf(),
            text,
            scenario,
        })
    }

    /// Parses `text` as if it had been read from `path`.
    pub fn from_text(path: PathBuf, text: String) -> Result<Self, HarnessError> {
        let scenario = Scenario::from_toml(&text)?;
        Ok(Self {
            path,
            text,
            scenario,
        })
    }

    /// Wraps an in-memory scenario; relative paths resolve against `base_dir`.
    pub fn from_scenario(scenario: Scenario, base_dir: &Path) -> Self {
        Self {
            path: base_dir.join("scenario.toml"),
            text: scenario.to_toml(),
            scenario,
        }
    }

    pub fn base_dir(&self) -> PathBuf {
        self.path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }

    /// Prefixes `err` with the file and the line of the `[section]` header.
    pub fn locate(&self, section: &str, err: HarnessError) -> HarnessError {
        let line = section_line(&self.text, section);
        let location = match line {
            Some(l) => format!("{}:{l} [{section}]", self.path.display()),
            None => format!("{} [{section}]", self.path.display()),
        };
        HarnessError::Located {
            location,
            source: Box::new(err),
        }
    }
}

/// 1-based line of the `[section]` header, if present.
pub fn section_line(text: &str, section: &str) -> Option<usize> {
    let header = format!("[{section}]");
    text.lines()
        .position(|l| l.split('#').next().unwrap_or("").trim() == header)
        .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disturbance::{CarrierSpec, SignalSpec};

    const EXAMPLE: &str = r#"
seed = 7
focus_node = 8

[graph]
kind = "line"
n = 13
competitors = true

[disturbance]
kind = "sinusoid"
amplitude = 0.03
omega = 6.0

[gain]
gamma = 2.0
h = 12.0
horizon = 5.0

[initial]
constant = 12.0

[horizon]
rule = "early-termination"

[analysis]
q = 3.0
chi0 = 12.0
"#;

    #[test]
    fn parses_example() {
        let s = Scenario::from_toml(EXAMPLE).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.focus_node, Some(8));
        assert_eq!(
            s.graph,
            GraphSource::Generated(GeneratorSpec::Line { n: 13, competitors: true })
        );
        assert_eq!(s.horizon, EndRule::EarlyTermination);
        assert_eq!(s.analysis.chi0, Some(12.0));
        assert_eq!(s.analysis.bounds, BoundKind::ALL.to_vec());
        assert_eq!(s.integrator, IntegratorOptions::default());
        assert_eq!(s.output, PathBuf::from("out"));
    }

    #[test]
    fn round_trips_every_field() {
        let mut s = Scenario::from_toml(EXAMPLE).unwrap();
        s.disturbance.signal = SignalSpec::Proportional {
            alpha_minus: 0.1,
            alpha_plus: 0.3,
            carrier: CarrierSpec::PiecewiseLinear { knot_spacing: Some(0.01) },
        };
        s.disturbance.uniform_upper = Some(0.5);
        s.disturbance.absolute = true;
        s.initial = InitialStates::Explicit { values: vec![0.0, 3.0, 4.5] };
        s.horizon = EndRule::Fraction { fraction: 0.98 };
        s.analysis.bounds = vec![BoundKind::Uniform];
        s.analysis.q_sweep = true;
        s.integrator.max_step = Some(1e-3);
        s.graph = GraphSource::File { path: "g.txt".into() };
        let back = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);

        s.graph = GraphSource::Generated(GeneratorSpec::HopCountRandom { n: 9, p: 0.3, seed: Some(4) });
        s.horizon = EndRule::Time { t_end: 4.5 };
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn reports_line_of_bad_value() {
        let bad = EXAMPLE.replace("h = 12.0", "h = \"twelve\"");
        let err = Scenario::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("line 17"), "{err}");
        assert!(Scenario::from_toml(&EXAMPLE.replace("seed = 7", "sed = 7")).is_err());
    }

    #[test]
    fn finds_section_headers() {
        assert_eq!(section_line(EXAMPLE, "graph"), Some(5));
        assert_eq!(section_line(EXAMPLE, "integrator"), None);
    }
}
