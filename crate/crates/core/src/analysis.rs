//! Error bounds on the perturbed min-consensus states and the early
//! termination time derived from them.
//!
//! All bounds are stated along a shortest-path chain `i_0, ..., i_l` with
//! `i_0` a source and each `i_k` a true parent of `i_{k+1}`. The common
//! ingredient is the disturbance-free envelope
//!
//! ```text
//! E(t) = sum_{k=0}^{l} e_{i_k}(0) (ln phi(t))^(l-k) / (phi(t) (l-k)!)
//! ```

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disturbance::DisturbanceModel;
use crate::dynamics::{GainParams, Trajectory};
use crate::graph::{ShortestPathSolution, WeightedDigraph};

/// Default free parameter of the envelope majorant.
pub const DEFAULT_Q: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("outside domain: {0}")]
    Domain(String),
    #[error("invalid bound inputs: {0}")]
    Input(String),
}

impl From<crate::dynamics::DynamicsError> for AnalysisError {
    fn from(err: crate::dynamics::DynamicsError) -> Self {
        AnalysisError::Domain(err.to_string())
    }
}

/// Chain, initial errors and constants needed to evaluate the bounds for the
/// last node of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    /// `[i_0, ..., i_l]`, source first.
    pub chain: Vec<usize>,
    /// `e_{i_k}(0)` along the chain.
    pub chain_errors: Vec<f64>,
    /// Upper bound on every initial error.
    pub chi0: f64,
    pub q: f64,
    pub params: GainParams,
}

impl BoundInputs {
    /// `initial_errors` is indexed by node and must be nonnegative with
    /// maximum at most `chi0`.
    pub fn new(
        chain: Vec<usize>,
        initial_errors: &[f64],
        chi0: f64,
        q: f64,
        params: GainParams,
    ) -> Result<Self, AnalysisError> {
        if chain.is_empty() {
            return Err(AnalysisError::Input("empty chain".into()));
        }
        if let Some(&bad) = chain.iter().find(|&&i| i >= initial_errors.len()) {
            return Err(AnalysisError::Input(format!("chain node {} has no initial error", bad + 1)));
        }
        if let Some((i, e)) = initial_errors
            .iter()
            .enumerate()
            .find(|(_, e)| !(e.is_finite() && **e >= 0.0))
        {
            return Err(AnalysisError::Input(format!(
                "initial error {e} of node {} must be nonnegative",
                i + 1
            )));
        }
        let max_e0 = initial_errors.iter().copied().fold(0.0, f64::max);
        if chi0.is_nan() || chi0 < max_e0 {
            return Err(AnalysisError::Input(format!(
                "chi0 = {chi0} is below the largest initial error {max_e0}"
            )));
        }
        if !(q > 1.0 && q.is_finite()) {
            return Err(AnalysisError::Domain(format!("q = {q} must exceed 1")));
        }
        let chain_errors = chain.iter().map(|&i| initial_errors[i]).collect();
        Ok(Self {
            chain,
            chain_errors,
            chi0,
            q,
            params,
        })
    }

    /// Inputs for `node` along the smallest-id true-parent chain.
    pub fn for_node(
        sol: &ShortestPathSolution,
        node: usize,
        initial_errors: &[f64],
        chi0: f64,
        q: f64,
        params: GainParams,
    ) -> Result<Self, AnalysisError> {
        Self::new(sol.chain_to(node), initial_errors, chi0, q, params)
    }

    /// Chain length `l` (number of edges).
    pub fn len(&self) -> usize {
        self.chain.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.chain.len() <= 1
    }

    pub fn node(&self) -> usize {
        *self.chain.last().expect("chain is nonempty")
    }
}

/// Checks that `chain` starts at a source, ends anywhere, and follows true
/// parents, with length at most `D(G) - 1`.
pub fn validate_chain(
    g: &WeightedDigraph,
    sol: &ShortestPathSolution,
    chain: &[usize],
) -> Result<(), AnalysisError> {
    let (&first, rest) = chain
        .split_first()
        .ok_or_else(|| AnalysisError::Input("empty chain".into()))?;
    if !g.is_source(first) {
        return Err(AnalysisError::Input(format!("chain starts at non-source {}", first + 1)));
    }
    let mut prev = first;
    for &node in rest {
        if !sol.true_parents[node].contains(&prev) {
            return Err(AnalysisError::Input(format!(
                "{} is not a true parent of {}",
                prev + 1,
                node + 1
            )));
        }
        prev = node;
    }
    if chain.len() > sol.effective_diameter {
        return Err(AnalysisError::Input(format!(
            "chain of {} nodes exceeds effective diameter {}",
            chain.len(),
            sol.effective_diameter
        )));
    }
    Ok(())
}

/// Disturbance-free envelope `E_{i_l}(t)`.
pub fn nominal_bound(inputs: &BoundInputs, t: f64) -> Result<f64, AnalysisError> {
    let ln_phi = inputs.params.ln_phi(t)?;
    let l = inputs.len();
    if ln_phi == 0.0 {
        // Only the k = l term survives (0^0 = 1).
        return Ok(inputs.chain_errors[l]);
    }
    let ln_ln_phi = ln_phi.ln();
    let mut sum = 0.0;
    let mut ln_factorial = 0.0;
    // m = l - k runs upwards so the factorial accumulates incrementally.
    for m in 0..=l {
        if m > 0 {
            ln_factorial += (m as f64).ln();
        }
        let e0 = inputs.chain_errors[l - m];
        if e0 != 0.0 {
            sum += e0 * (m as f64 * ln_ln_phi - ln_phi - ln_factorial).exp();
        }
    }
    Ok(sum)
}

/// Upper bound `E(t) + sum_k u^+_{i_k i_{k-1}}` for a general bounded
/// disturbance. `edge_upper[k - 1]` is the bound on edge `i_k -> i_{k-1}`.
pub fn chain_sum_upper(
    inputs: &BoundInputs,
    edge_upper: &[f64],
    t: f64,
) -> Result<f64, AnalysisError> {
    if edge_upper.len() != inputs.len() {
        return Err(AnalysisError::Input(format!(
            "expected {} edge bounds, got {}",
            inputs.len(),
            edge_upper.len()
        )));
    }
    Ok(nominal_bound(inputs, t)? + edge_upper.iter().sum::<f64>())
}

/// Band `[-alpha_minus p_i, E(t) + alpha_plus p_i]` for disturbances
/// confined to `[-alpha_minus w_ij, alpha_plus w_ij]`.
pub fn proportional_bounds(
    sol: &ShortestPathSolution,
    inputs: &BoundInputs,
    alpha_minus: f64,
    alpha_plus: f64,
    t: f64,
) -> Result<(f64, f64), AnalysisError> {
    for (name, a) in [("alpha_minus", alpha_minus), ("alpha_plus", alpha_plus)] {
        if !(0.0..1.0).contains(&a) {
            return Err(AnalysisError::Domain(format!("{name} = {a} must lie in [0, 1)")));
        }
    }
    let p = sol.distances[inputs.node()];
    Ok((-alpha_minus * p, nominal_bound(inputs, t)? + alpha_plus * p))
}

/// Band `[-(D(G^-) - 1) u^-, l u^+ + E(t)]` for general bounded disturbances.
pub fn uniform_bounds(
    inputs: &BoundInputs,
    minus_diameter: usize,
    u_minus: f64,
    u_plus: f64,
    t: f64,
) -> Result<(f64, f64), AnalysisError> {
    if minus_diameter == 0 {
        return Err(AnalysisError::Input("effective diameter must be positive".into()));
    }
    if !(u_minus >= 0.0 && u_plus >= 0.0) {
        return Err(AnalysisError::Input(format!(
            "uniform bounds must be nonnegative (u- = {u_minus}, u+ = {u_plus})"
        )));
    }
    let lower = -((minus_diameter - 1) as f64) * u_minus;
    let upper = inputs.len() as f64 * u_plus + nominal_bound(inputs, t)?;
    Ok((lower, upper))
}

/// Closed-form majorant of the envelope:
/// `chi0 (q^l - 1) / (q - 1) ((T_s - t) / T_s)^((2h + 2)(1 - 1/q))`.
pub fn closed_form_upper(inputs: &BoundInputs, t: f64) -> Result<f64, AnalysisError> {
    let q = inputs.q;
    if q.is_nan() || q <= 1.0 {
        return Err(AnalysisError::Domain(format!("q = {q} must exceed 1")));
    }
    if inputs.is_empty() {
        return Err(AnalysisError::Domain("chain length must be at least 1".into()));
    }
    let p = &inputs.params;
    if !(t >= 0.0 && t < p.horizon) {
        return Err(AnalysisError::Domain(format!("t = {t} outside [0, {})", p.horizon)));
    }
    let geometric = (q.powi(inputs.len() as i32) - 1.0) / (q - 1.0);
    let exponent = (2.0 * p.h + 2.0) * (1.0 - 1.0 / q);
    Ok(inputs.chi0 * geometric * ((p.horizon - t) / p.horizon).powf(exponent))
}

/// Inputs to the early-termination time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsInputs {
    /// Competitor gap; `None` when the graph has no competing edges.
    pub zeta: Option<f64>,
    pub u_minus: f64,
    pub u_plus: f64,
    /// Effective diameter of the nominal graph.
    pub diameter: usize,
    /// Effective diameter of the most-shrunk graph.
    pub minus_diameter: usize,
    pub chi0: f64,
    pub q: f64,
    pub params: GainParams,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TsError {
    #[error(
        "termination condition fails: (u- + u+)/2 + u_g = {lhs} is not below zeta/2 = {half_gap}"
    )]
    Infeasible { lhs: f64, half_gap: f64, u_g: f64 },
    #[error("no competing edges (zeta undefined); early termination time not applicable")]
    NotApplicable,
    #[error("outside domain: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationTime {
    pub t_s: f64,
    /// `max{(D(G^-) - 1) u^-, (D(G) - 1) u^+}`.
    pub u_g: f64,
    /// `(zeta - u^- - u^+)/2 - u_g`, the error budget left for the envelope.
    pub margin: f64,
}

/// Smallest time after which stopping the flow provably leaves every
/// current parent a true parent.
pub fn compute_ts(inputs: &TsInputs) -> Result<TerminationTime, TsError> {
    let TsInputs {
        zeta,
        u_minus,
        u_plus,
        diameter,
        minus_diameter,
        chi0,
        q,
        params,
    } = *inputs;
    params
        .validate()
        .map_err(|e| TsError::Domain(e.to_string()))?;
    if !(q > 1.0 && q.is_finite()) {
        return Err(TsError::Domain(format!("q = {q} must exceed 1")));
    }
    for (name, v) in [("u-", u_minus), ("u+", u_plus), ("chi0", chi0)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(TsError::Domain(format!("{name} = {v} must be nonnegative")));
        }
    }
    if diameter == 0 || minus_diameter == 0 {
        return Err(TsError::Domain("effective diameters must be positive".into()));
    }
    let zeta = match zeta {
        None => return Err(TsError::NotApplicable),
        Some(z) if z.is_finite() && z > 0.0 => z,
        Some(z) => return Err(TsError::Domain(format!("zeta = {z} must be positive"))),
    };

    let u_g = ((minus_diameter - 1) as f64 * u_minus).max((diameter - 1) as f64 * u_plus);
    let lhs = (u_minus + u_plus) / 2.0 + u_g;
    if lhs.is_nan() || lhs >= zeta / 2.0 {
        return Err(TsError::Infeasible {
            lhs,
            half_gap: zeta / 2.0,
            u_g,
        });
    }
    let margin = (zeta - u_minus - u_plus) / 2.0 - u_g;
    let scale = chi0 * (q.powi(diameter as i32 - 1) - 1.0) / (q - 1.0);
    let t_s = if scale == 0.0 {
        0.0
    } else {
        let exponent = (2.0 * params.h + 2.0) * (1.0 - 1.0 / q);
        let root = (margin / scale).powf(1.0 / exponent);
        (params.horizon * (1.0 - root)).max(0.0)
    };
    Ok(TerminationTime { t_s, u_g, margin })
}

/// Evaluates [`compute_ts`] for each candidate `q` and keeps the earliest
/// feasible time.
pub fn sweep_q(inputs: &TsInputs, candidates: &[f64]) -> Result<(f64, TerminationTime), TsError> {
    let mut best: Option<(f64, TerminationTime)> = None;
    let mut last_err = None;
    for &q in candidates {
        match compute_ts(&TsInputs { q, ..*inputs }) {
            Ok(tt) => {
                if best.is_none_or(|(_, b)| tt.t_s < b.t_s) {
                    best = Some((q, tt));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| TsError::Domain("no candidate q".into())))
}

/// Logarithmic grid of `count` values of `q` in `[lo, hi]`.
pub fn q_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// Initial-error envelope plus the upper bounds along the chain.
    ChainSum,
    /// Band for disturbances proportional to the edge weights.
    Proportional,
    /// Band from the uniform bounds and effective diameters.
    Uniform,
    /// `Uniform` with the envelope replaced by its closed-form majorant.
    ClosedForm,
}

impl BoundKind {
    pub const ALL: [BoundKind; 4] = [
        BoundKind::ChainSum,
        BoundKind::Proportional,
        BoundKind::Uniform,
        BoundKind::ClosedForm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::ChainSum => "chain-sum",
            BoundKind::Proportional => "proportional",
            BoundKind::Uniform => "uniform",
            BoundKind::ClosedForm => "closed-form",
        }
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to evaluate every bound kind on one graph.
#[derive(Debug, Clone)]
pub struct BoundContext<'a> {
    pub graph: &'a WeightedDigraph,
    pub solution: &'a ShortestPathSolution,
    pub model: &'a DisturbanceModel,
    /// Effective diameter of the most-shrunk graph.
    pub minus_diameter: usize,
    pub initial_errors: Vec<f64>,
    pub chi0: f64,
    pub q: f64,
    pub params: GainParams,
}

impl BoundContext<'_> {
    pub fn inputs(&self, node: usize) -> Result<BoundInputs, AnalysisError> {
        BoundInputs::for_node(
            self.solution,
            node,
            &self.initial_errors,
            self.chi0,
            self.q,
            self.params,
        )
    }

    /// Per-edge upper bounds along the chain, `i_k -> i_{k-1}` for k = 1..=l.
    pub fn chain_upper_bounds(&self, chain: &[usize]) -> Vec<f64> {
        chain
            .windows(2)
            .map(|w| {
                let idx = self
                    .graph
                    .edge_index(w[1], w[0])
                    .expect("chain follows graph edges");
                self.model.edge_bounds(idx).1
            })
            .collect()
    }

    /// Whether `kind` applies to this disturbance model.
    pub fn applies(&self, kind: BoundKind) -> bool {
        match kind {
            BoundKind::Proportional => {
                let (a1, a2) = self.model.proportional_factors(self.graph);
                a1 < 1.0 && a2 < 1.0
            }
            _ => true,
        }
    }

    /// `(lower, upper)` on `e_node(t)` under the chosen bound.
    pub fn bounds(&self, kind: BoundKind, node: usize, t: f64) -> Result<(f64, f64), AnalysisError> {
        let inputs = self.inputs(node)?;
        let chain_upper = self.chain_upper_bounds(&inputs.chain);
        self.bounds_for(kind, &inputs, &chain_upper, t)
    }

    fn bounds_for(
        &self,
        kind: BoundKind,
        inputs: &BoundInputs,
        chain_upper: &[f64],
        t: f64,
    ) -> Result<(f64, f64), AnalysisError> {
        match kind {
            BoundKind::ChainSum => {
                let upper = chain_sum_upper(inputs, chain_upper, t)?;
                // Nonnegative disturbances keep every error nonnegative.
                let lower = if self.model.is_nonnegative() {
                    0.0
                } else {
                    f64::NEG_INFINITY
                };
                Ok((lower, upper))
            }
            BoundKind::Proportional => {
                let (a1, a2) = self.model.proportional_factors(self.graph);
                proportional_bounds(self.solution, inputs, a1, a2, t)
            }
            BoundKind::Uniform => uniform_bounds(
                inputs,
                self.minus_diameter,
                self.model.uniform_lower(),
                self.model.uniform_upper(),
                t,
            ),
            BoundKind::ClosedForm => {
                let (lower, _) = uniform_bounds(
                    inputs,
                    self.minus_diameter,
                    self.model.uniform_lower(),
                    self.model.uniform_upper(),
                    t,
                )?;
                let upper =
                    inputs.len() as f64 * self.model.uniform_upper() + closed_form_upper(inputs, t)?;
                Ok((lower, upper))
            }
        }
    }

    /// Bound curve over every non-source node on the given time grid.
    pub fn curve(&self, kind: BoundKind, times: &[f64]) -> Result<BoundCurve, AnalysisError> {
        let nodes: Vec<usize> = self.graph.non_sources().collect();
        let inputs = nodes
            .iter()
            .map(|&i| self.inputs(i))
            .collect::<Result<Vec<_>, _>>()?;
        let chain_upper: Vec<Vec<f64>> = inputs
            .iter()
            .map(|inp| self.chain_upper_bounds(&inp.chain))
            .collect();
        let mut lower = Vec::with_capacity(times.len() * nodes.len());
        let mut upper = Vec::with_capacity(times.len() * nodes.len());
        for &t in times {
            for (inp, cu) in inputs.iter().zip(&chain_upper) {
                let (lo, hi) = self.bounds_for(kind, inp, cu, t)?;
                lower.push(lo);
                upper.push(hi);
            }
        }
        Ok(BoundCurve {
            kind,
            times: times.to_vec(),
            nodes,
            lower,
            upper,
        })
    }

    pub fn ts_inputs(&self, diameter: usize) -> TsInputs {
        TsInputs {
            zeta: self.solution.path_gap,
            u_minus: self.model.uniform_lower(),
            u_plus: self.model.uniform_upper(),
            diameter,
            minus_diameter: self.minus_diameter,
            chi0: self.chi0,
            q: self.q,
            params: self.params,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundViolation {
    pub kind: BoundKind,
    pub t: f64,
    pub node: usize,
    pub error: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Lower/upper error bounds per stored time and non-source node.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub times: Vec<f64>,
    pub nodes: Vec<usize>,
    // Row-major over (time, node position).
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundCurve {
    pub fn lower(&self, k: usize, pos: usize) -> f64 {
        self.lower[k * self.nodes.len() + pos]
    }

    pub fn upper(&self, k: usize, pos: usize) -> f64 {
        self.upper[k * self.nodes.len() + pos]
    }

    /// Points where the trajectory error leaves `[lower - tol, upper + tol]`.
    /// The curve must share the trajectory's time grid.
    pub fn violations(&self, traj: &Trajectory, tol: f64) -> Vec<BoundViolation> {
        assert_eq!(self.times, traj.times, "bound curve and trajectory grids differ");
        let mut out = Vec::new();
        for k in 0..self.times.len() {
            for (pos, &node) in self.nodes.iter().enumerate() {
                let (lo, hi) = (self.lower(k, pos), self.upper(k, pos));
                let e = traj.error(k, node);
                if e < lo - tol || e > hi + tol {
                    out.push(BoundViolation {
                        kind: self.kind,
                        t: self.times[k],
                        node,
                        error: e,
                        lower: lo,
                        upper: hi,
                    });
                }
            }
        }
        out
    }

    /// CSV rows `t,node,lower,upper,kind` with 1-based node ids.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,node,lower,upper,kind")?;
        for (k, t) in self.times.iter().enumerate() {
            for (pos, node) in self.nodes.iter().enumerate() {
                writeln!(
                    w,
                    "{:.16e},{},{:.16e},{:.16e},{}",
                    t,
                    node + 1,
                    self.lower(k, pos),
                    self.upper(k, pos),
                    self.kind
                )?;
            }
        }
        Ok(())
    }
}
