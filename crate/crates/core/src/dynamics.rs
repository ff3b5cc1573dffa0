//! Prescribed-time gain and fixed-schedule RK4 integration of the perturbed
//! biased min-consensus flow
//!
//! ```text
//! x_i' = 0                                                  (sources)
//! x_i' = -eta(t) (x_i - min_j { x_j + w_ij + u_ij(t) })      (others)
//! ```
//!
//! The state is integrated in error coordinates `e_i = x_i - p_i`, with each
//! edge carrying its Bellman slack `p_j + w_ij - p_i` (exactly zero on
//! true-parent edges). The flow is identical; the error coordinates keep
//! full relative precision while `e_i` decays by many orders of magnitude
//! towards the deadline.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::disturbance::DisturbanceModel;
use crate::graph::{ShortestPathSolution, WeightedDigraph};

/// Integration is refused for `t_end >= T_s (1 - END_MARGIN)`.
pub const END_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid gain parameters: {0}")]
    Params(String),
    #[error("time {t} outside [0, {horizon})")]
    Domain { t: f64, horizon: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("integration failed: {0}")]
    Integration(String),
}

/// Parameters of the prescribed-time gain
/// `eta(t) = gamma + 2 mu'(t) / mu(t)`, `mu(t) = (T_s / (T_s - t))^(1 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainParams {
    pub gamma: f64,
    pub h: f64,
    /// Prescribed time `T_s`.
    pub horizon: f64,
}

impl GainParams {
    pub fn new(gamma: f64, h: f64, horizon: f64) -> Result<Self, DynamicsError> {
        let p = Self { gamma, h, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(DynamicsError::Params(format!("gamma = {} must be positive", self.gamma)));
        }
        if !(self.h.is_finite() && self.h > -0.5) {
            return Err(DynamicsError::Params(format!("h = {} must exceed -1/2", self.h)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(DynamicsError::Params(format!(
                "horizon = {} must be positive",
                self.horizon
            )));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<(), DynamicsError> {
        if t >= 0.0 && t < self.horizon {
            Ok(())
        } else {
            Err(DynamicsError::Domain {
                t,
                horizon: self.horizon,
            })
        }
    }

    /// `eta(t) = gamma + 2 (1 + h) / (T_s - t)`.
    pub fn eta(&self, t: f64) -> Result<f64, DynamicsError> {
        self.check_time(t)?;
        Ok(self.eta_unchecked(t))
    }

    #[inline]
    fn eta_unchecked(&self, t: f64) -> f64 {
        self.gamma + 2.0 * (1.0 + self.h) / (self.horizon - t)
    }

    /// `ln phi(t) = gamma t + (2 + 2h) ln(T_s / (T_s - t))`.
    pub fn ln_phi(&self, t: f64) -> Result<f64, DynamicsError> {
        self.check_time(t)?;
        Ok(self.gamma * t - (2.0 + 2.0 * self.h) * (-t / self.horizon).ln_1p())
    }

    /// `phi(t) = exp(int_0^t eta) = e^(gamma t) (T_s / (T_s - t))^(2 + 2h)`.
    pub fn phi(&self, t: f64) -> Result<f64, DynamicsError> {
        self.ln_phi(t).map(f64::exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOptions {
    /// Largest step; `None` means `T_s / 5000`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    /// Steps are further capped at this fraction of the time left to `T_s`.
    pub step_fraction: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            max_step: None,
            step_fraction: 0.01,
        }
    }
}

impl IntegratorOptions {
    fn resolved_max_step(&self, horizon: f64) -> f64 {
        self.max_step.unwrap_or(horizon / 5000.0)
    }

    /// Both step caps halved.
    pub fn halved(&self, horizon: f64) -> Self {
        Self {
            max_step: Some(self.resolved_max_step(horizon) / 2.0),
            step_fraction: self.step_fraction / 2.0,
        }
    }
}

fn check_end(params: &GainParams, t_end: f64) -> Result<(), DynamicsError> {
    let limit = params.horizon * (1.0 - END_MARGIN);
    if !(t_end > 0.0 && t_end < limit) {
        return Err(DynamicsError::Precondition(format!(
            "t_end = {t_end} must lie in (0, {limit}) for T_s = {}",
            params.horizon
        )));
    }
    Ok(())
}

/// The accepted-step time grid `0 = t_0 < ... < t_K = t_end`, with step
/// `min(max_step, step_fraction * (T_s - t))`.
pub fn step_times(
    params: &GainParams,
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Vec<f64>, DynamicsError> {
    params.validate()?;
    check_end(params, t_end)?;
    let max_step = opts.resolved_max_step(params.horizon);
    if !(max_step > 0.0 && opts.step_fraction > 0.0 && opts.step_fraction < 1.0) {
        return Err(DynamicsError::Params(format!(
            "step caps must be positive (max_step = {max_step}, step_fraction = {})",
            opts.step_fraction
        )));
    }
    let mut times = vec![0.0];
    let mut t = 0.0;
    while t < t_end {
        let dt = max_step.min(opts.step_fraction * (params.horizon - t));
        let next = if t + dt >= t_end { t_end } else { t + dt };
        if next <= t {
            return Err(DynamicsError::Integration(format!(
                "step size underflow at t = {t}"
            )));
        }
        times.push(next);
        t = next;
    }
    Ok(times)
}

/// Node states on the accepted-step grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: GainParams,
    pub times: Vec<f64>,
    optimal: Vec<f64>,
    // Row-major: errors[k * n + i] = e_i(times[k]).
    errors: Vec<f64>,
}

impl Trajectory {
    pub fn node_count(&self) -> usize {
        self.optimal.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    /// `e_i(t_k) = x_i(t_k) - p_i`.
    pub fn errors_at(&self, k: usize) -> &[f64] {
        let n = self.node_count();
        &self.errors[k * n..(k + 1) * n]
    }

    pub fn error(&self, k: usize, node: usize) -> f64 {
        self.errors[k * self.node_count() + node]
    }

    pub fn state(&self, k: usize, node: usize) -> f64 {
        self.optimal[node] + self.error(k, node)
    }

    pub fn states_at(&self, k: usize) -> Vec<f64> {
        self.errors_at(k)
            .iter()
            .zip(&self.optimal)
            .map(|(e, p)| p + e)
            .collect()
    }

    pub fn final_states(&self) -> Vec<f64> {
        self.states_at(self.len() - 1)
    }

    /// CSV with header `t,x_1,...,x_n`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for i in 1..=self.node_count() {
            write!(w, ",x_{i}")?;
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{:.16e}", self.times[k])?;
            for i in 0..self.node_count() {
                write!(w, ",{:.16e}", self.state(k, i))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Right-hand side of the flow in error coordinates.
struct Flow<'a> {
    g: &'a WeightedDigraph,
    model: &'a DisturbanceModel,
    params: GainParams,
    slack: Vec<f64>,
    disturbance: Vec<f64>,
}

impl<'a> Flow<'a> {
    fn new(
        g: &'a WeightedDigraph,
        sol: &ShortestPathSolution,
        model: &'a DisturbanceModel,
        params: GainParams,
    ) -> Self {
        let p = &sol.distances;
        let slack = g
            .edges()
            .iter()
            .map(|e| {
                if sol.true_parents[e.tail].contains(&e.head) {
                    0.0
                } else {
                    p[e.head] + e.weight - p[e.tail]
                }
            })
            .collect();
        Self {
            g,
            model,
            params,
            slack,
            disturbance: vec![0.0; g.edge_count()],
        }
    }

    fn eval(&mut self, t: f64, e: &[f64], de: &mut [f64]) {
        self.model.values_into(t, &mut self.disturbance);
        let eta = self.params.eta_unchecked(t);
        for i in 0..self.g.node_count() {
            if self.g.is_source(i) {
                de[i] = 0.0;
                continue;
            }
            let best = self
                .g
                .out_edges(i)
                .map(|(idx, edge)| e[edge.head] + self.slack[idx] + self.disturbance[idx])
                .fold(f64::INFINITY, f64::min);
            de[i] = -eta * (e[i] - best);
        }
    }
}

/// Largest accepted difference between one RK4 step and two half steps,
/// relative to `max(1, |e|)`.
const LOCAL_TOL: f64 = 1e-11;
/// Bisection depth limit inside one stored step.
const MAX_DEPTH: u32 = 16;

struct Rk4 {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
        }
    }

    fn step(&mut self, flow: &mut Flow, t: f64, dt: f64, e: &[f64], out: &mut [f64]) {
        let n = e.len();
        let half = 0.5 * dt;
        let [k1, k2, k3, k4] = &mut self.k;
        flow.eval(t, e, k1);
        for i in 0..n {
            self.stage[i] = e[i] + half * k1[i];
        }
        flow.eval(t + half, &self.stage, k2);
        for i in 0..n {
            self.stage[i] = e[i] + half * k2[i];
        }
        flow.eval(t + half, &self.stage, k3);
        for i in 0..n {
            self.stage[i] = e[i] + dt * k3[i];
        }
        flow.eval(t + dt, &self.stage, k4);
        for i in 0..n {
            out[i] = e[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Advances `[t, t + dt]`, bisecting while a full step and two half
    /// steps disagree. Argmin switches and fast transients after them are
    /// where plain RK4 loses accuracy.
    fn advance(&mut self, flow: &mut Flow, t: f64, dt: f64, e: &[f64], out: &mut [f64], depth: u32) {
        let n = e.len();
        let mut full = vec![0.0; n];
        let mut mid = vec![0.0; n];
        let half = 0.5 * dt;
        self.step(flow, t, dt, e, &mut full);
        self.step(flow, t, half, e, &mut mid);
        self.step(flow, t + half, half, &mid, out);
        let scale = out.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let diff = full
            .iter()
            .zip(out.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff > LOCAL_TOL * scale && depth < MAX_DEPTH {
            self.advance(flow, t, half, e, &mut mid, depth + 1);
            self.advance(flow, t + half, half, &mid, out, depth + 1);
        }
    }
}

/// Time derivative of every node state at `(t, x)`.
pub fn state_derivative(
    g: &WeightedDigraph,
    model: &DisturbanceModel,
    params: &GainParams,
    x: &[f64],
    t: f64,
) -> Result<Vec<f64>, DynamicsError> {
    let eta = params.eta(t)?;
    Ok((0..g.node_count())
        .map(|i| {
            if g.is_source(i) {
                return 0.0;
            }
            let best = g
                .out_edges(i)
                .map(|(idx, edge)| x[edge.head] + edge.weight + model.value(idx, t))
                .fold(f64::INFINITY, f64::min);
            -eta * (x[i] - best)
        })
        .collect())
}

/// Checks the overestimated-initial-state assumption and returns the
/// initial errors `x_i(0) - p_i`.
pub fn initial_errors(
    g: &WeightedDigraph,
    sol: &ShortestPathSolution,
    x0: &[f64],
) -> Result<Vec<f64>, DynamicsError> {
    if x0.len() != g.node_count() {
        return Err(DynamicsError::Precondition(format!(
            "expected {} initial states, got {}",
            g.node_count(),
            x0.len()
        )));
    }
    let mut e0 = Vec::with_capacity(x0.len());
    for (i, (&x, &p)) in x0.iter().zip(&sol.distances).enumerate() {
        if !x.is_finite() {
            return Err(DynamicsError::Precondition(format!(
                "initial state of node {} is not finite",
                i + 1
            )));
        }
        if g.is_source(i) {
            if x != 0.0 {
                return Err(DynamicsError::Precondition(format!(
                    "source node {} must start at 0, got {x}",
                    i + 1
                )));
            }
            e0.push(0.0);
        } else {
            if x < p {
                return Err(DynamicsError::Precondition(format!(
                    "node {} is underestimated: x(0) = {x} < p = {p}",
                    i + 1
                )));
            }
            e0.push(x - p);
        }
    }
    Ok(e0)
}

/// Integrates the perturbed flow from `x0` on `[0, t_end]`, storing every
/// accepted step.
pub fn simulate(
    g: &WeightedDigraph,
    sol: &ShortestPathSolution,
    model: &DisturbanceModel,
    params: &GainParams,
    x0: &[f64],
    t_end: f64,
    opts: &IntegratorOptions,
) -> Result<Trajectory, DynamicsError> {
    let times = step_times(params, t_end, opts)?;
    let e0 = initial_errors(g, sol, x0)?;
    if model.edge_count() != g.edge_count() {
        return Err(DynamicsError::Precondition(format!(
            "disturbance model covers {} edges, graph has {}",
            model.edge_count(),
            g.edge_count()
        )));
    }

    let n = g.node_count();
    let mut flow = Flow::new(g, sol, model, *params);
    let mut errors = Vec::with_capacity(times.len() * n);
    errors.extend_from_slice(&e0);

    let mut e = e0;
    let mut next = vec![0.0; n];
    let mut rk = Rk4::new(n);
    let mut cuts = Vec::new();
    let mut cur = vec![0.0; n];
    for w in times.windows(2) {
        // Piecewise-linear signals are smooth between knots, so the step is
        // cut there and each piece integrated separately.
        cuts.clear();
        cuts.push(w[0]);
        model.knot_times_in(w[0], w[1], &mut cuts);
        cuts.push(w[1]);
        cur.copy_from_slice(&e);
        for piece in cuts.windows(2) {
            rk.advance(&mut flow, piece[0], piece[1] - piece[0], &cur, &mut next, 0);
            cur.copy_from_slice(&next);
        }
        next.copy_from_slice(&cur);
        std::mem::swap(&mut e, &mut next);
        if let Some(i) = e.iter().position(|v| !v.is_finite()) {
            return Err(DynamicsError::Integration(format!(
                "state of node {} diverged at t = {}",
                i + 1,
                w[1]
            )));
        }
        errors.extend_from_slice(&e);
    }

    Ok(Trajectory {
        params: *params,
        times,
        optimal: sol.distances.clone(),
        errors,
    })
}
