//! The saturated flow vector field `f(x) = S_0^w(R'x + c) - x` and a
//! fixed-step integrator over the box `0 <= x <= w`.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result, ValidationError};
use crate::linalg;
use crate::netmodel::NetworkSpec;

/// Slack allowed when checking that a state lies in the box.
pub const LATTICE_TOL: f64 = 1e-9;

/// Entrywise clamp of `y` to `[lo, hi]`.
pub fn saturate(y: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    if y.len() != lo.len() || y.len() != hi.len() {
        return Err(ValidationError::Dimension("saturate operands differ in length".into()).into());
    }
    if let Some(i) = lo.iter().zip(hi).position(|(l, h)| l > h) {
        return Err(FlowError::Precondition(format!(
            "empty saturation interval at index {}: {} > {}",
            i + 1,
            lo[i],
            hi[i]
        )));
    }
    Ok(y.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| clamp(v, l, h))
        .collect())
}

#[inline]
fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    lo.max(v.min(hi))
}

/// `out = S_0^w(R'x + c)`, the map whose fixed points are the equilibria.
pub fn saturated_target_into(spec: &NetworkSpec, x: &[f64], out: &mut [f64]) {
    spec.routing().transpose_mul_into(x, out);
    for ((o, &c), &w) in out.iter_mut().zip(spec.demand()).zip(spec.capacity()) {
        *o = clamp(*o + c, 0.0, w);
    }
}

pub fn saturated_target(spec: &NetworkSpec, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; spec.n()];
    saturated_target_into(spec, x, &mut out);
    out
}

fn net_flow_into(spec: &NetworkSpec, x: &[f64], out: &mut [f64]) {
    saturated_target_into(spec, x, out);
    debug_assert!(out
        .iter()
        .zip(spec.capacity())
        .all(|(s, w)| *s >= 0.0 && *s <= *w));
    for (o, xi) in out.iter_mut().zip(x) {
        *o -= xi;
    }
}

/// Net flow into every cell. Satisfies `-x <= f(x) <= w - x`.
pub fn net_flow(spec: &NetworkSpec, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; spec.n()];
    net_flow_into(spec, x, &mut out);
    out
}

/// `(R' - I) x + c`: the vector field with saturation switched off.
pub fn linear_rhs(spec: &NetworkSpec, x: &[f64]) -> Vec<f64> {
    let mut out = spec.routing().transpose_mul(x);
    for ((o, &c), &xi) in out.iter_mut().zip(spec.demand()).zip(x) {
        *o = *o + c - xi;
    }
    out
}

/// `|f(x)|_1`.
pub fn residual_l1(spec: &NetworkSpec, x: &[f64]) -> f64 {
    linalg::l1_norm(&net_flow(spec, x))
}

pub fn in_lattice(spec: &NetworkSpec, x: &[f64], tol: f64) -> bool {
    x.len() == spec.n()
        && x
            .iter()
            .zip(spec.capacity())
            .all(|(&v, &w)| v >= -tol && v <= w + tol)
}

/// A point of the state box `0 <= x <= w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(Vec<f64>);

impl State {
    pub fn new(spec: &NetworkSpec, x: Vec<f64>) -> Result<Self> {
        if x.len() != spec.n() {
            return Err(ValidationError::Dimension(format!(
                "state has {} entries, expected {}",
                x.len(),
                spec.n()
            ))
            .into());
        }
        if !in_lattice(spec, &x, LATTICE_TOL) {
            return Err(FlowError::Precondition(
                "initial state lies outside 0 <= x <= w".into(),
            ));
        }
        Ok(Self(x))
    }

    pub fn zero(spec: &NetworkSpec) -> Self {
        Self(vec![0.0; spec.n()])
    }

    pub fn full(spec: &NetworkSpec) -> Self {
        Self(spec.capacity().to_vec())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for State {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub residual_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 200.0,
            sample_every: 10,
            residual_tol: 1e-10,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.dt) || !positive(self.t_end) || !positive(self.residual_tol) {
            return Err(ValidationError::Other(
                "integrator dt, t_end and residual_tol must be positive and finite".into(),
            )
            .into());
        }
        if self.sample_every == 0 {
            return Err(ValidationError::Other("sample_every must be at least 1".into()).into());
        }
        if self.dt > self.t_end {
            return Err(ValidationError::Other("dt must not exceed t_end".into()).into());
        }
        Ok(())
    }

    /// Number of steps covering `[0, t_end]`; the last one may be short.
    pub fn step_count(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
            rounded as usize
        } else {
            ratio.ceil() as usize
        }
    }

    /// Number of recorded samples when the run does not stop early.
    pub fn full_sample_count(&self) -> usize {
        let steps = self.step_count();
        1 + steps / self.sample_every + usize::from(!steps.is_multiple_of(self.sample_every))
    }
}

/// Sampled solution of the flow ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `|f(x)|_1` at each sample.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub final_residual: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

struct Rk4Workspace {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
        }
    }

    /// Advances `x` by one RK4 step of length `h`; returns the largest
    /// stage derivative magnitude.
    fn step(&mut self, spec: &NetworkSpec, x: &mut [f64], h: f64) -> f64 {
        const NODES: [f64; 3] = [0.5, 0.5, 1.0];
        net_flow_into(spec, x, &mut self.k[0]);
        for s in 0..3 {
            let (done, rest) = self.k.split_at_mut(s + 1);
            for ((st, xi), ki) in self.stage.iter_mut().zip(x.iter()).zip(&done[s]) {
                *st = xi + NODES[s] * h * ki;
            }
            net_flow_into(spec, &self.stage, &mut rest[0]);
        }
        let [k1, k2, k3, k4] = &self.k;
        let mut fmax = 0.0f64;
        for i in 0..x.len() {
            fmax = fmax
                .max(k1[i].abs())
                .max(k2[i].abs())
                .max(k3[i].abs())
                .max(k4[i].abs());
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        fmax
    }
}

/// Integrates the flow with fixed-step RK4, clamping each step back into
/// the box and stopping once the sampled residual drops below
/// `cfg.residual_tol`.
pub fn integrate(spec: &NetworkSpec, x0: &State, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if x0.len() != spec.n() {
        return Err(ValidationError::Dimension("initial state length".into()).into());
    }
    let n = spec.n();
    let steps = cfg.step_count();
    let w = spec.capacity();
    let wmax = w.iter().fold(0.0f64, |m, v| m.max(*v));
    let rounding_slack = 16.0 * f64::EPSILON * (1.0 + wmax);

    let mut x: Vec<f64> = x0
        .iter()
        .zip(w)
        .map(|(&v, &wi)| clamp(v, 0.0, wi))
        .collect();
    let mut ws = Rk4Workspace::new(n);

    let r0 = residual_l1(spec, &x);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        residuals: vec![r0],
        converged: r0 < cfg.residual_tol,
        final_residual: r0,
    };
    if traj.converged {
        return Ok(traj);
    }

    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let h = if k + 1 == steps { cfg.t_end - t } else { cfg.dt };
        let fmax = ws.step(spec, &mut x, h);

        let mut clamp_mag = 0.0f64;
        for (xi, &wi) in x.iter_mut().zip(w) {
            if !xi.is_finite() {
                return Err(FlowError::Numerical(format!(
                    "non-finite state at t = {}",
                    t + h
                )));
            }
            let c = clamp(*xi, 0.0, wi);
            clamp_mag = clamp_mag.max((c - *xi).abs());
            *xi = c;
        }
        let allowed = 10.0 * h * h * fmax + rounding_slack;
        if clamp_mag > allowed {
            return Err(FlowError::Numerical(format!(
                "state left the box by {clamp_mag:e} at t = {} (allowed {allowed:e})",
                t + h
            )));
        }

        let last = k + 1 == steps;
        if (k + 1) % cfg.sample_every == 0 || last {
            let res = residual_l1(spec, &x);
            traj.times.push(if last { cfg.t_end } else { (k + 1) as f64 * cfg.dt });
            traj.states.push(x.clone());
            traj.residuals.push(res);
            traj.final_residual = res;
            if res < cfg.residual_tol {
                traj.converged = true;
                break;
            }
        }
    }
    Ok(traj)
}
