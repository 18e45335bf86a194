//! Demand sweeps and jump detection.
//!
//! For stochastic irreducible routing the equilibrium is unique except on
//! the critical set of zero-sum demands with a positive condition value.
//! Crossing that set along a demand path makes the equilibrium jump from
//! the least to the greatest point of the segment.

use serde::{Deserialize, Serialize};

use crate::equilibria::{
    equilibrium_set, multiplicity_test, EquilibriumKind, EquilibriumSet, MARGINAL_BAND,
};
use crate::error::{FlowError, Result, ValidationError};
use crate::exec::{self, ExecMode};
use crate::linalg;
use crate::netmodel::{self, classify_routing, NetworkSpec, RoutingTag};

/// Relative zero-sum tolerance shared with the equilibrium solver.
pub const ZERO_SUM_TOL: f64 = 1e-12;
/// Width to which a crossing is bisected when no closed form applies.
pub const BISECTION_TOL: f64 = 1e-9;
pub const DEFAULT_EPSILONS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Affine demand path `c(s) = c_start + s (c_end - c_start)` sampled on a
/// uniform grid over `s in [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandPath {
    pub c_start: Vec<f64>,
    pub c_end: Vec<f64>,
    pub samples: usize,
}

impl DemandPath {
    pub fn new(c_start: Vec<f64>, c_end: Vec<f64>, samples: usize) -> Result<Self> {
        let path = Self {
            c_start,
            c_end,
            samples,
        };
        path.check(None)?;
        Ok(path)
    }

    fn check(&self, n: Option<usize>) -> Result<()> {
        if self.samples < 2 {
            return Err(ValidationError::Other("a path needs at least 2 samples".into()).into());
        }
        let n = n.unwrap_or(self.c_start.len());
        if self.c_start.len() != n || self.c_end.len() != n {
            return Err(ValidationError::Dimension(format!(
                "path endpoints have {} and {} entries, expected {n}",
                self.c_start.len(),
                self.c_end.len()
            ))
            .into());
        }
        if self.c_start.iter().chain(&self.c_end).any(|v| !v.is_finite()) {
            return Err(ValidationError::NonFinite("demand path").into());
        }
        Ok(())
    }

    /// Grid parameter of sample `i`.
    pub fn s(&self, i: usize) -> f64 {
        if i + 1 == self.samples {
            1.0
        } else {
            i as f64 / (self.samples - 1) as f64
        }
    }

    pub fn demand_at(&self, s: f64) -> Vec<f64> {
        linalg::lerp(&self.c_start, &self.c_end, s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub s: f64,
    pub c: Vec<f64>,
    pub kind: EquilibriumKind,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub condition_value: Option<f64>,
    pub on_manifold: bool,
}

/// A grid interval `[s_lo, s_hi]` across which the equilibrium structure
/// changes, with the located zero-sum crossing when one was isolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub s_lo: f64,
    pub s_hi: f64,
    /// `None` means unresolved.
    pub s_star: Option<f64>,
    pub jump: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub s: f64,
    /// `|x_max(c*) - x_min(c*)|_1`.
    pub magnitude: f64,
    pub condition_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub critical_points: Vec<CriticalPoint>,
    pub jumps: Vec<Jump>,
}

fn require_irreducible(spec: &NetworkSpec) -> Result<()> {
    let class = classify_routing(spec.routing());
    if class.tag != RoutingTag::StochasticIrreducible {
        return Err(FlowError::Precondition(format!(
            "stochastic irreducible routing required ({}: {})",
            class.tag, class.detail
        )));
    }
    Ok(())
}

/// Whether `spec.demand()` lies on the critical set: zero-sum within the
/// relative tolerance `tol` and a condition value clear of the marginal band.
pub fn on_critical_manifold(spec: &NetworkSpec, tol: f64) -> Result<bool> {
    require_irreducible(spec)?;
    if !netmodel::zero_sum_within(spec.demand(), tol) {
        return Ok(false);
    }
    // the solver's own zero-sum band is fixed; re-centre demand onto the
    // hyperplane when the caller's tolerance is looser
    let on_plane = if netmodel::is_zero_sum(spec.demand()) {
        spec.clone()
    } else {
        let mean = linalg::sum(spec.demand()) / spec.n() as f64;
        spec.with_demand(spec.demand().iter().map(|c| c - mean).collect())?
    };
    let test = multiplicity_test(&on_plane)?;
    Ok(test.value.is_some_and(|v| v > MARGINAL_BAND))
}

/// Finds `s` in `[lo, hi]` with `g(s) = 0` by bisection, given a
/// predicate deciding when `g(s)` counts as zero. Returns `None` if the
/// bracket does not isolate a single sign change.
fn bisect_root(
    g: impl Fn(f64) -> f64,
    is_zero: impl Fn(f64) -> bool,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Option<f64> {
    let (zlo, zhi) = (is_zero(lo), is_zero(hi));
    match (zlo, zhi) {
        (true, true) => return None,
        (true, false) => return Some(lo),
        (false, true) => return Some(hi),
        _ => {}
    }
    let mut glo = g(lo);
    if glo.signum() == g(hi).signum() {
        return None;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if is_zero(mid) {
            return Some(mid);
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn plane_side(c: &[f64]) -> i8 {
    if netmodel::is_zero_sum(c) {
        0
    } else if linalg::sum(c) > 0.0 {
        1
    } else {
        -1
    }
}

/// Locates the zero-sum crossing of the path inside `[s_lo, s_hi]`.
fn locate_crossing(path: &DemandPath, s_lo: f64, s_hi: f64) -> Option<f64> {
    let a = linalg::sum(&path.c_start);
    let delta: Vec<f64> = path
        .c_end
        .iter()
        .zip(&path.c_start)
        .map(|(e, s)| e - s)
        .collect();
    let b = linalg::sum(&delta);
    let parallel = b.abs() <= ZERO_SUM_TOL * (1.0 + linalg::l1_norm(&delta));
    if !parallel {
        let s = -a / b;
        let slack = 1e-12;
        if s >= s_lo - slack && s <= s_hi + slack {
            return Some(s.clamp(s_lo, s_hi));
        }
    }
    bisect_root(
        |s| linalg::sum(&path.demand_at(s)),
        |s| netmodel::is_zero_sum(&path.demand_at(s)),
        s_lo,
        s_hi,
        BISECTION_TOL,
    )
}

fn row_at(base: &NetworkSpec, path: &DemandPath, i: usize, irreducible: bool) -> Result<SweepRow> {
    let s = path.s(i);
    let c = path.demand_at(s);
    let spec = base.with_demand(c.clone())?;
    let set = equilibrium_set(&spec)?;
    let on_manifold = irreducible && on_critical_manifold(&spec, ZERO_SUM_TOL)?;
    Ok(SweepRow {
        s,
        c,
        kind: set.kind,
        x_min: set.x_min,
        x_max: set.x_max,
        condition_value: set.condition_value,
        on_manifold,
    })
}

fn jump_at(base: &NetworkSpec, path: &DemandPath, s: f64) -> Result<Option<Jump>> {
    let spec = base.with_demand(path.demand_at(s))?;
    if !on_critical_manifold(&spec, ZERO_SUM_TOL)? {
        return Ok(None);
    }
    let set = equilibrium_set(&spec)?;
    Ok(Some(Jump {
        s,
        magnitude: set.spread(),
        condition_value: set.condition_value.unwrap_or(f64::NAN),
    }))
}

/// Evaluates the equilibrium set along `path` and reports where it jumps.
/// The demand stored in `base` is ignored.
pub fn sweep(base: &NetworkSpec, path: &DemandPath, mode: ExecMode) -> Result<SweepResult> {
    path.check(Some(base.n()))?;
    let irreducible = classify_routing(base.routing()).tag == RoutingTag::StochasticIrreducible;

    let rows = exec::map_indexed(mode, path.samples, |i| row_at(base, path, i, irreducible))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut critical: Vec<CriticalPoint> = Vec::new();
    let mut jumps: Vec<Jump> = Vec::new();
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        // a crossing strictly between grid samples leaves kind and
        // on_manifold unchanged on both sides, so the sign of the total
        // demand is tracked as well
        let crosses = irreducible && plane_side(&a.c) * plane_side(&b.c) < 0;
        if a.kind == b.kind && a.on_manifold == b.on_manifold && !crosses {
            continue;
        }
        let s_star = if irreducible {
            locate_crossing(path, a.s, b.s)
        } else {
            None
        };
        if let (Some(s), Some(prev)) = (s_star, critical.last_mut()) {
            if prev.s_star.is_some_and(|p| (p - s).abs() < BISECTION_TOL) {
                prev.s_hi = b.s;
                continue;
            }
        }
        let jump = match s_star {
            Some(s) => jump_at(base, path, s)?,
            None => None,
        };
        critical.push(CriticalPoint {
            s_lo: a.s,
            s_hi: b.s,
            s_star,
            jump: jump.as_ref().map(|j| j.magnitude),
        });
        jumps.extend(jump);
    }

    // a path that starts on the critical set without ever leaving it
    if let Some(first) = rows.first() {
        if first.on_manifold && !jumps.iter().any(|j| j.s == first.s) {
            if let Some(j) = jump_at(base, path, first.s)? {
                jumps.insert(0, j);
            }
        }
    }

    Ok(SweepResult {
        rows,
        critical_points: critical,
        jumps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    pub epsilon: f64,
    pub below: Vec<f64>,
    pub above: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalLimits {
    /// Equilibrium at `c* - eps d` for the smallest `eps`.
    pub from_below: Vec<f64>,
    /// Equilibrium at `c* + eps d` for the smallest `eps`.
    pub from_above: Vec<f64>,
    /// One entry per epsilon, in the order given.
    pub table: Vec<LimitSample>,
}

fn unique_equilibrium(spec: &NetworkSpec) -> Result<Vec<f64>> {
    let set: EquilibriumSet = equilibrium_set(spec)?;
    match set.kind {
        EquilibriumKind::Point => Ok(set.x_min),
        kind => Err(FlowError::Inconsistent(format!(
            "perturbed demand {:?} unexpectedly has a {kind} equilibrium set",
            spec.demand()
        ))),
    }
}

/// Approaches a critical demand `c_star` from both sides along `direction`
/// and records the unique equilibria on the way in.
pub fn directional_limits(
    base: &NetworkSpec,
    c_star: &[f64],
    direction: &[f64],
    epsilons: &[f64],
) -> Result<DirectionalLimits> {
    let n = base.n();
    if c_star.len() != n || direction.len() != n {
        return Err(ValidationError::Dimension("critical demand or direction length".into()).into());
    }
    let star = base.with_demand(c_star.to_vec())?;
    if !on_critical_manifold(&star, ZERO_SUM_TOL)? {
        return Err(FlowError::Precondition(
            "critical demand is not on the critical set".into(),
        ));
    }
    if netmodel::zero_sum_within(direction, ZERO_SUM_TOL) || linalg::sum(direction) <= 0.0 {
        return Err(FlowError::Precondition(
            "direction must have a positive component sum".into(),
        ));
    }
    if epsilons.is_empty()
        || epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0))
        || epsilons.windows(2).any(|w| w[1] >= w[0])
    {
        return Err(FlowError::Precondition(
            "epsilons must be positive and strictly decreasing".into(),
        ));
    }

    let mut table = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let shifted = |sign: f64| -> Vec<f64> {
            c_star
                .iter()
                .zip(direction)
                .map(|(c, d)| c + sign * eps * d)
                .collect()
        };
        let below = unique_equilibrium(&base.with_demand(shifted(-1.0))?)?;
        let above = unique_equilibrium(&base.with_demand(shifted(1.0))?)?;
        table.push(LimitSample {
            epsilon: eps,
            below,
            above,
        });
    }
    let last = table.last().expect("epsilons is non-empty");
    Ok(DirectionalLimits {
        from_below: last.below.clone(),
        from_above: last.above.clone(),
        table,
    })
}
