//! Bounded, continuous, exogenous edge-weight disturbances.
//!
//! Every edge signal is a carrier `c(t)` in `[-1, 1]` mapped onto the edge's
//! admissible band: `u(t) = upper * c(t)` when `c(t) >= 0` and
//! `u(t) = lower * c(t)` otherwise. The band endpoints are the recorded
//! per-edge bounds, so `-lower <= u(t) <= upper` holds by construction.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::WeightedDigraph;

/// Knot spacing used when a piecewise-linear signal does not specify one,
/// as a fraction of the horizon.
pub const DEFAULT_KNOTS_PER_HORIZON: f64 = 500.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisturbanceError {
    #[error("invalid disturbance specification: {0}")]
    Spec(String),
    #[error("no edge {} -> {}", .tail + 1, .head + 1)]
    UnknownEdge { tail: usize, head: usize },
}

/// Shape of the `[-1, 1]` carrier behind a proportional disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CarrierSpec {
    Sinusoid { omega: f64 },
    PiecewiseLinear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        knot_spacing: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignalSpec {
    Zero,
    /// `u_ij(t) = a * w_ij * sin(omega * t + phase_ij)`, random phases.
    /// With `absolute`, `w_ij` is replaced by 1 here and below.
    Sinusoid { amplitude: f64, omega: f64 },
    /// Linear interpolation of uniform samples in `[-a w_ij, a w_ij]`.
    PiecewiseLinear {
        amplitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        knot_spacing: Option<f64>,
    },
    /// Signal confined to `[-alpha_minus w_ij, alpha_plus w_ij]`.
    Proportional {
        alpha_minus: f64,
        alpha_plus: f64,
        carrier: CarrierSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    #[serde(flatten)]
    pub signal: SignalSpec,
    /// Upward override of the uniform lower bound `u^-`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_lower: Option<f64>,
    /// Upward override of the uniform upper bound `u^+`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform_upper: Option<f64>,
    /// Amplitudes are absolute bounds instead of fractions of `w_ij`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub absolute: bool,
}

impl DisturbanceSpec {
    pub fn new(signal: SignalSpec) -> Self {
        Self {
            signal,
            uniform_lower: None,
            uniform_upper: None,
            absolute: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Carrier {
    Zero,
    Sine { omega: f64, phase: f64 },
    Knots { spacing: f64, values: Vec<f64> },
}

impl Carrier {
    fn eval(&self, t: f64) -> f64 {
        match self {
            Carrier::Zero => 0.0,
            Carrier::Sine { omega, phase } => (omega * t + phase).sin(),
            Carrier::Knots { spacing, values } => {
                let last = values.len() - 1;
                let pos = (t / spacing).max(0.0);
                let k = (pos.floor() as usize).min(last);
                if k == last {
                    return values[last];
                }
                let frac = pos - k as f64;
                if frac == 0.0 {
                    values[k]
                } else {
                    values[k] + frac * (values[k + 1] - values[k])
                }
            }
        }
    }

    fn slope_bound(&self) -> f64 {
        match self {
            Carrier::Zero => 0.0,
            Carrier::Sine { omega, .. } => omega.abs(),
            Carrier::Knots { spacing, values } => {
                values
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs())
                    .fold(0.0, f64::max)
                    / spacing
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct EdgeSignal {
    carrier: Carrier,
    lower: f64,
    upper: f64,
}

impl EdgeSignal {
    fn eval(&self, t: f64) -> f64 {
        let c = self.carrier.eval(t);
        if c >= 0.0 {
            self.upper * c
        } else {
            self.lower * c
        }
    }
}

/// Per-edge disturbance signals with their per-edge and uniform bounds.
/// Immutable after construction; sampling is a pure function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceModel {
    spec: DisturbanceSpec,
    horizon: f64,
    signals: Vec<EdgeSignal>,
    // (tail, head) per edge index, for lookups by endpoint.
    endpoints: Vec<(usize, usize)>,
    uniform_lower: f64,
    uniform_upper: f64,
}

fn check_fraction(name: &str, value: f64) -> Result<(), DisturbanceError> {
    if !(0.0..1.0).contains(&value) {
        return Err(DisturbanceError::Spec(format!(
            "{name} = {value} must lie in [0, 1)"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, value: f64) -> Result<(), DisturbanceError> {
    if !(value.is_finite() && value > 0.0) {
        return Err(DisturbanceError::Spec(format!("{name} = {value} must be positive")));
    }
    Ok(())
}

fn sine_carrier(omega: f64, rng: &mut ChaCha8Rng) -> Carrier {
    Carrier::Sine {
        omega,
        phase: rng.gen_range(0.0..TAU),
    }
}

fn knot_carrier(spacing: f64, horizon: f64, rng: &mut ChaCha8Rng) -> Carrier {
    let count = (horizon / spacing).ceil() as usize + 1;
    let values = (0..count).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    Carrier::Knots { spacing, values }
}

/// Builds the per-edge signals for `g` over `[0, horizon]`. The same seed
/// always yields the same signals.
pub fn build_model(
    spec: &DisturbanceSpec,
    g: &WeightedDigraph,
    horizon: f64,
    seed: u64,
) -> Result<DisturbanceModel, DisturbanceError> {
    check_positive("horizon", horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let default_spacing = horizon / DEFAULT_KNOTS_PER_HORIZON;
    let reference = |w: f64| if spec.absolute { 1.0 } else { w };

    let mut signals = Vec::with_capacity(g.edge_count());
    match spec.signal {
        SignalSpec::Zero => {
            signals.extend(g.edges().iter().map(|_| EdgeSignal {
                carrier: Carrier::Zero,
                lower: 0.0,
                upper: 0.0,
            }));
        }
        SignalSpec::Sinusoid { amplitude, omega } => {
            check_fraction("amplitude", amplitude)?;
            if !omega.is_finite() {
                return Err(DisturbanceError::Spec(format!("omega = {omega} is not finite")));
            }
            for e in g.edges() {
                signals.push(EdgeSignal {
                    carrier: sine_carrier(omega, &mut rng),
                    lower: amplitude * reference(e.weight),
                    upper: amplitude * reference(e.weight),
                });
            }
        }
        SignalSpec::PiecewiseLinear {
            amplitude,
            knot_spacing,
        } => {
            check_fraction("amplitude", amplitude)?;
            let spacing = knot_spacing.unwrap_or(default_spacing);
            check_positive("knot_spacing", spacing)?;
            for e in g.edges() {
                signals.push(EdgeSignal {
                    carrier: knot_carrier(spacing, horizon, &mut rng),
                    lower: amplitude * reference(e.weight),
                    upper: amplitude * reference(e.weight),
                });
            }
        }
        SignalSpec::Proportional {
            alpha_minus,
            alpha_plus,
            carrier,
        } => {
            check_fraction("alpha_minus", alpha_minus)?;
            if !(alpha_plus.is_finite() && alpha_plus >= 0.0) {
                return Err(DisturbanceError::Spec(format!(
                    "alpha_plus = {alpha_plus} must be nonnegative"
                )));
            }
            for e in g.edges() {
                let carrier = match carrier {
                    CarrierSpec::Sinusoid { omega } => {
                        if !omega.is_finite() {
                            return Err(DisturbanceError::Spec(format!(
                                "omega = {omega} is not finite"
                            )));
                        }
                        sine_carrier(omega, &mut rng)
                    }
                    CarrierSpec::PiecewiseLinear { knot_spacing } => {
                        let spacing = knot_spacing.unwrap_or(default_spacing);
                        check_positive("knot_spacing", spacing)?;
                        knot_carrier(spacing, horizon, &mut rng)
                    }
                };
                signals.push(EdgeSignal {
                    carrier,
                    lower: alpha_minus * reference(e.weight),
                    upper: alpha_plus * reference(e.weight),
                });
            }
        }
    }

    let max_lower = signals.iter().map(|s| s.lower).fold(0.0, f64::max);
    let max_upper = signals.iter().map(|s| s.upper).fold(0.0, f64::max);
    let uniform_lower = resolve_uniform("uniform_lower", spec.uniform_lower, max_lower)?;
    let uniform_upper = resolve_uniform("uniform_upper", spec.uniform_upper, max_upper)?;

    Ok(DisturbanceModel {
        spec: *spec,
        horizon,
        signals,
        endpoints: g.edges().iter().map(|e| (e.tail, e.head)).collect(),
        uniform_lower,
        uniform_upper,
    })
}

fn resolve_uniform(
    name: &str,
    requested: Option<f64>,
    maximum: f64,
) -> Result<f64, DisturbanceError> {
    match requested {
        None => Ok(maximum),
        Some(v) if v.is_finite() && v >= maximum => Ok(v),
        Some(v) => Err(DisturbanceError::Spec(format!(
            "{name} = {v} is below the largest per-edge bound {maximum}"
        ))),
    }
}

impl DisturbanceModel {
    /// Model with identically zero signals on every edge of `g`.
    pub fn zero(g: &WeightedDigraph, horizon: f64) -> Self {
        build_model(&DisturbanceSpec::new(SignalSpec::Zero), g, horizon, 0)
            .expect("zero model is always valid")
    }

    /// Sinusoids `a w_ij sin(omega t + phase_ij)` with explicit phases in
    /// edge-index order.
    pub fn sinusoid_with_phases(
        g: &WeightedDigraph,
        horizon: f64,
        amplitude: f64,
        omega: f64,
        phases: &[f64],
    ) -> Result<Self, DisturbanceError> {
        if phases.len() != g.edge_count() {
            return Err(DisturbanceError::Spec(format!(
                "expected {} phases, got {}",
                g.edge_count(),
                phases.len()
            )));
        }
        let spec = DisturbanceSpec::new(SignalSpec::Sinusoid { amplitude, omega });
        let mut model = build_model(&spec, g, horizon, 0)?;
        for (signal, &phase) in model.signals.iter_mut().zip(phases) {
            signal.carrier = Carrier::Sine { omega, phase };
        }
        Ok(model)
    }

    pub fn spec(&self) -> &DisturbanceSpec {
        &self.spec
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn edge_count(&self) -> usize {
        self.signals.len()
    }

    /// Disturbance on the edge with the given index.
    #[inline]
    pub fn value(&self, edge: usize, t: f64) -> f64 {
        self.signals[edge].eval(t)
    }

    /// Writes every edge's disturbance at time `t` into `out`.
    pub fn values_into(&self, t: f64, out: &mut [f64]) {
        for (slot, signal) in out.iter_mut().zip(&self.signals) {
            *slot = signal.eval(t);
        }
    }

    /// Disturbance on edge `tail -> head` (0-based ids) at time `t`.
    pub fn sample(&self, tail: usize, head: usize, t: f64) -> Result<f64, DisturbanceError> {
        self.endpoints
            .iter()
            .position(|&ep| ep == (tail, head))
            .map(|idx| self.value(idx, t))
            .ok_or(DisturbanceError::UnknownEdge { tail, head })
    }

    /// Per-edge `u_ij^-` in edge-index order.
    pub fn lower_bounds(&self) -> Vec<f64> {
        self.signals.iter().map(|s| s.lower).collect()
    }

    /// Per-edge `u_ij^+` in edge-index order.
    pub fn upper_bounds(&self) -> Vec<f64> {
        self.signals.iter().map(|s| s.upper).collect()
    }

    pub fn edge_bounds(&self, edge: usize) -> (f64, f64) {
        let s = &self.signals[edge];
        (s.lower, s.upper)
    }

    pub fn uniform_lower(&self) -> f64 {
        self.uniform_lower
    }

    pub fn uniform_upper(&self) -> f64 {
        self.uniform_upper
    }

    /// Smallest `(alpha_minus, alpha_plus)` with
    /// `-alpha_minus w_ij <= u_ij(t) <= alpha_plus w_ij` on every edge.
    pub fn proportional_factors(&self, g: &WeightedDigraph) -> (f64, f64) {
        self.signals
            .iter()
            .zip(g.edges())
            .fold((0.0, 0.0), |(a1, a2), (s, e)| {
                (a1.max(s.lower / e.weight), a2.max(s.upper / e.weight))
            })
    }

    /// True when no signal can go negative.
    pub fn is_nonnegative(&self) -> bool {
        self.signals.iter().all(|s| s.lower == 0.0)
    }

    /// Lipschitz constant in `t` valid for every edge signal.
    pub fn slope_bound(&self) -> f64 {
        self.signals
            .iter()
            .map(|s| s.lower.max(s.upper) * s.carrier.slope_bound())
            .fold(0.0, f64::max)
    }

    /// Knot times strictly inside `(t0, t1)`, where piecewise-linear
    /// signals have kinks. Appended to `out` in increasing order.
    pub fn knot_times_in(&self, t0: f64, t1: f64, out: &mut Vec<f64>) {
        let spacing = self.signals.iter().find_map(|s| match &s.carrier {
            Carrier::Knots { spacing, .. } => Some(*spacing),
            _ => None,
        });
        if let Some(spacing) = spacing {
            let mut k = (t0 / spacing).floor() as usize + 1;
            while (k as f64) * spacing < t1 {
                let t = k as f64 * spacing;
                if t > t0 {
                    out.push(t);
                }
                k += 1;
            }
        }
    }

    /// Stored knot values of an edge's piecewise-linear signal, as
    /// `(spacing, disturbance values)`.
    pub fn knots(&self, edge: usize) -> Option<(f64, Vec<f64>)> {
        let s = &self.signals[edge];
        match &s.carrier {
            Carrier::Knots { spacing, values } => Some((
                *spacing,
                values
                    .iter()
                    .map(|&c| if c >= 0.0 { s.upper * c } else { s.lower * c })
                    .collect(),
            )),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_graph;

    fn unit_line() -> WeightedDigraph {
        load_graph("nodes 3\nsources 1\n2 1 1\n3 2 1\n").unwrap()
    }

    fn sinusoid(a: f64) -> DisturbanceSpec {
        DisturbanceSpec::new(SignalSpec::Sinusoid {
            amplitude: a,
            omega: 3.0,
        })
    }

    #[test]
    fn zero_model() {
        let g = unit_line();
        let m = DisturbanceModel::zero(&g, 5.0);
        assert_eq!(m.sample(1, 0, 2.0).unwrap(), 0.0);
        assert_eq!((m.uniform_lower(), m.uniform_upper()), (0.0, 0.0));
        assert!(m.is_nonnegative());
    }

    #[test]
    fn sinusoid_bounds_follow_amplitude() {
        let g = unit_line();
        for a in [0.4, 0.03] {
            let m = build_model(&sinusoid(a), &g, 5.0, 1).unwrap();
            assert_eq!(m.lower_bounds(), vec![a, a]);
            assert_eq!(m.upper_bounds(), vec![a, a]);
            assert_eq!((m.uniform_lower(), m.uniform_upper()), (a, a));
            assert_eq!(m.proportional_factors(&g), (a, a));
        }
    }

    #[test]
    fn absolute_amplitude_ignores_weight() {
        let g = load_graph("nodes 3\nsources 1\n2 1 1\n3 1 3\n").unwrap();
        let relative = build_model(&sinusoid(0.03), &g, 5.0, 1).unwrap();
        assert_eq!(relative.upper_bounds(), vec![0.03, 0.09]);
        let mut spec = sinusoid(0.03);
        spec.absolute = true;
        let m = build_model(&spec, &g, 5.0, 1).unwrap();
        assert_eq!(m.upper_bounds(), vec![0.03, 0.03]);
        assert_eq!((m.uniform_lower(), m.uniform_upper()), (0.03, 0.03));
        // Same seed, same phases: only the scale differs.
        let t = 1.7;
        assert!((relative.value(1, t) - 3.0 * m.value(1, t)).abs() < 1e-15);
    }

    #[test]
    fn sinusoid_direct_evaluation() {
        let g = load_graph("nodes 2\nsources 1\n2 1 1\n").unwrap();
        let m = DisturbanceModel::sinusoid_with_phases(&g, 5.0, 0.4, TAU, &[0.0]).unwrap();
        assert!((m.sample(1, 0, 0.25).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn unknown_edge() {
        let m = DisturbanceModel::zero(&unit_line(), 5.0);
        assert_eq!(
            m.sample(0, 1, 0.0),
            Err(DisturbanceError::UnknownEdge { tail: 0, head: 1 })
        );
    }

    #[test]
    fn knot_identity() {
        let g = unit_line();
        let spec = DisturbanceSpec::new(SignalSpec::PiecewiseLinear {
            amplitude: 0.3,
            knot_spacing: Some(0.25),
        });
        let m = build_model(&spec, &g, 5.0, 9).unwrap();
        let (spacing, values) = m.knots(1).unwrap();
        assert_eq!(values.len(), 21);
        for (k, v) in values.iter().enumerate() {
            assert_eq!(m.value(1, k as f64 * spacing), *v);
        }
    }

    #[test]
    fn rejects_out_of_range_specs() {
        let g = unit_line();
        assert!(build_model(&sinusoid(1.0), &g, 5.0, 0).is_err());
        assert!(build_model(&sinusoid(-0.1), &g, 5.0, 0).is_err());
        let spec = DisturbanceSpec::new(SignalSpec::Proportional {
            alpha_minus: 1.0,
            alpha_plus: 0.2,
            carrier: CarrierSpec::Sinusoid { omega: 1.0 },
        });
        assert!(build_model(&spec, &g, 5.0, 0).is_err());
        let spec = DisturbanceSpec::new(SignalSpec::PiecewiseLinear {
            amplitude: 0.1,
            knot_spacing: Some(0.0),
        });
        assert!(build_model(&spec, &g, 5.0, 0).is_err());
    }

    #[test]
    fn uniform_overrides() {
        let g = unit_line();
        let mut spec = sinusoid(0.1);
        spec.uniform_upper = Some(0.2);
        let m = build_model(&spec, &g, 5.0, 0).unwrap();
        assert_eq!((m.uniform_lower(), m.uniform_upper()), (0.1, 0.2));
        spec.uniform_lower = Some(0.05);
        assert!(build_model(&spec, &g, 5.0, 0).is_err());
    }

    #[test]
    fn proportional_asymmetric_band() {
        let g = load_graph("nodes 3\nsources 1\n2 1 2\n3 2 0.5\n").unwrap();
        let spec = DisturbanceSpec::new(SignalSpec::Proportional {
            alpha_minus: 0.0,
            alpha_plus: 0.5,
            carrier: CarrierSpec::Sinusoid { omega: 7.0 },
        });
        let m = build_model(&spec, &g, 5.0, 3).unwrap();
        assert!(m.is_nonnegative());
        assert_eq!(m.upper_bounds(), vec![1.0, 0.25]);
        assert_eq!(m.proportional_factors(&g), (0.0, 0.5));
        for k in 0..1000 {
            let t = k as f64 * 0.005;
            assert!(m.value(0, t) >= 0.0 && m.value(0, t) <= 1.0);
        }
    }
}
