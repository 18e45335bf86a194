//! Model instances and structural analysis of the routing matrix.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result, ValidationError};
use crate::linalg::{self, RoutingMatrix};

/// Band around 1 inside which a row counts as stochastic.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Accepted residual for `pi = R' pi` and for `Hv = R'Hv + v`.
pub const LINEAR_RESIDUAL_TOL: f64 = 1e-10;

const PI_POWER_STEP_TOL: f64 = 1e-14;
const PI_POWER_MAX_ITER: usize = 100_000;

/// Zero-sum test used throughout: `|sum(v)| <= 1e-12 (1 + |v|_1)`.
pub fn is_zero_sum(v: &[f64]) -> bool {
    zero_sum_within(v, 1e-12)
}

pub fn zero_sum_within(v: &[f64], rel_tol: f64) -> bool {
    linalg::sum(v).abs() <= rel_tol * (1.0 + linalg::l1_norm(v))
}

/// Unvalidated model data, as parsed from a scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RawNetworkSpec {
    pub routing: Vec<Vec<f64>>,
    pub capacity: Vec<f64>,
    pub demand: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflow: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outflow: Option<Vec<f64>>,
}

/// A validated flow network: routing matrix, cell capacities and exogenous
/// net demand.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    routing: RoutingMatrix,
    capacity: Vec<f64>,
    demand: Vec<f64>,
    inflow: Option<Vec<f64>>,
    outflow: Option<Vec<f64>>,
}

impl NetworkSpec {
    pub fn new(routing: Vec<Vec<f64>>, capacity: Vec<f64>, demand: Vec<f64>) -> Result<Self> {
        validate(RawNetworkSpec {
            routing,
            capacity,
            demand,
            inflow: None,
            outflow: None,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.capacity.len()
    }

    pub fn routing(&self) -> &RoutingMatrix {
        &self.routing
    }

    pub fn capacity(&self) -> &[f64] {
        &self.capacity
    }

    pub fn demand(&self) -> &[f64] {
        &self.demand
    }

    pub fn inflow(&self) -> Option<&[f64]> {
        self.inflow.as_deref()
    }

    pub fn outflow(&self) -> Option<&[f64]> {
        self.outflow.as_deref()
    }

    /// Same network with a different exogenous demand. Any recorded
    /// inflow/outflow split is dropped since it no longer applies.
    pub fn with_demand(&self, demand: Vec<f64>) -> Result<Self> {
        if demand.len() != self.n() {
            return Err(ValidationError::Dimension(format!(
                "demand has {} entries, expected {}",
                demand.len(),
                self.n()
            ))
            .into());
        }
        if demand.iter().any(|v| !v.is_finite()) {
            return Err(ValidationError::NonFinite("demand").into());
        }
        Ok(Self {
            routing: self.routing.clone(),
            capacity: self.capacity.clone(),
            demand,
            inflow: None,
            outflow: None,
        })
    }

    pub fn to_raw(&self) -> RawNetworkSpec {
        RawNetworkSpec {
            routing: self.routing.to_rows(),
            capacity: self.capacity.clone(),
            demand: self.demand.clone(),
            inflow: self.inflow.clone(),
            outflow: self.outflow.clone(),
        }
    }
}

fn check_len(name: &str, v: &[f64], n: usize) -> std::result::Result<(), ValidationError> {
    if v.len() != n {
        return Err(ValidationError::Dimension(format!(
            "{name} has {} entries, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

fn check_finite(name: &'static str, v: &[f64]) -> std::result::Result<(), ValidationError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ValidationError::NonFinite(name));
    }
    Ok(())
}

/// Checks every model assumption and returns the validated instance.
pub fn validate(raw: RawNetworkSpec) -> Result<NetworkSpec> {
    Ok(validate_raw(raw)?)
}

fn validate_raw(raw: RawNetworkSpec) -> std::result::Result<NetworkSpec, ValidationError> {
    let n = raw.routing.len();
    if n == 0 {
        return Err(ValidationError::Empty);
    }
    let routing = RoutingMatrix::from_rows(&raw.routing)?;
    check_len("capacity", &raw.capacity, n)?;
    check_len("demand", &raw.demand, n)?;
    for row in &raw.routing {
        check_finite("routing", row)?;
    }
    check_finite("capacity", &raw.capacity)?;
    check_finite("demand", &raw.demand)?;

    for i in 0..n {
        for j in 0..n {
            if routing.get(i, j) < 0.0 {
                return Err(ValidationError::NegativeRouting {
                    row: i + 1,
                    col: j + 1,
                });
            }
        }
        if routing.get(i, i) != 0.0 {
            return Err(ValidationError::SelfLoop(i + 1));
        }
        let sum = routing.row_sum(i);
        if sum > 1.0 + STOCHASTIC_TOL {
            return Err(ValidationError::RowSumExceeds { row: i + 1, sum });
        }
    }
    for (i, &w) in raw.capacity.iter().enumerate() {
        if w <= 0.0 {
            return Err(ValidationError::NonPositiveCapacity {
                cell: i + 1,
                value: w,
            });
        }
    }

    match (&raw.inflow, &raw.outflow) {
        (None, None) => {}
        (Some(lambda), Some(mu)) => {
            check_len("inflow", lambda, n)?;
            check_len("outflow", mu, n)?;
            check_finite("inflow", lambda)?;
            check_finite("outflow", mu)?;
            for (which, v) in [("inflow", lambda), ("outflow", mu)] {
                if let Some((cell, &value)) = v.iter().enumerate().find(|(_, x)| **x < 0.0) {
                    return Err(ValidationError::NegativeFlow {
                        which,
                        cell: cell + 1,
                        value,
                    });
                }
            }
            for i in 0..n {
                let diff = lambda[i] - mu[i];
                let scale = 1.0 + lambda[i].abs() + mu[i].abs();
                if (raw.demand[i] - diff).abs() > 4.0 * f64::EPSILON * scale {
                    return Err(ValidationError::DemandMismatch { cell: i + 1 });
                }
            }
        }
        _ => {
            return Err(ValidationError::Other(
                "inflow and outflow must be given together".into(),
            ))
        }
    }

    Ok(NetworkSpec {
        routing,
        capacity: raw.capacity,
        demand: raw.demand,
        inflow: raw.inflow,
        outflow: raw.outflow,
    })
}

/// Structural class of a routing matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoutingTag {
    SubStochasticOutConnected,
    StochasticIrreducible,
    Other,
}

impl fmt::Display for RoutingTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RoutingTag::SubStochasticOutConnected => "SubStochasticOutConnected",
            RoutingTag::StochasticIrreducible => "StochasticIrreducible",
            RoutingTag::Other => "Other",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingClass {
    pub tag: RoutingTag,
    pub detail: String,
}

pub fn is_stochastic_row(sum: f64) -> bool {
    (sum - 1.0).abs() <= STOCHASTIC_TOL
}

pub fn is_leaky_row(sum: f64) -> bool {
    sum < 1.0 - STOCHASTIC_TOL
}

/// 0-based indices of rows that lose mass to the environment.
pub fn leaky_nodes(r: &RoutingMatrix) -> Vec<usize> {
    (0..r.n()).filter(|&i| is_leaky_row(r.row_sum(i))).collect()
}

/// Nodes reachable from `start` along support edges (`R[i][j] > 0`),
/// following edges backwards when `reverse` is set.
fn reachable(r: &RoutingMatrix, start: &[usize], reverse: bool) -> Vec<bool> {
    let n = r.n();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for &s in start {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        for (v, mark) in seen.iter_mut().enumerate() {
            let w = if reverse { r.get(v, u) } else { r.get(u, v) };
            if w > 0.0 && !*mark {
                *mark = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

fn format_set(nodes: impl IntoIterator<Item = usize>) -> String {
    let items: Vec<String> = nodes.into_iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", items.join(","))
}

/// Every node reaches a leaky node (itself included) in the support graph.
pub fn is_out_connected(r: &RoutingMatrix) -> bool {
    let leaky = leaky_nodes(r);
    reachable(r, &leaky, true).into_iter().all(|b| b)
}

/// Returns a closed proper subset of nodes if one exists.
fn closed_subset(r: &RoutingMatrix) -> Option<Vec<usize>> {
    let n = r.n();
    let fwd = reachable(r, &[0], false);
    if fwd.iter().any(|b| !b) {
        return Some((0..n).filter(|&i| fwd[i]).collect());
    }
    let back = reachable(r, &[0], true);
    let v = back.iter().position(|b| !b)?;
    let from_v = reachable(r, &[v], false);
    Some((0..n).filter(|&i| from_v[i]).collect())
}

/// Irreducibility of a stochastic routing matrix.
///
/// For stochastic `R` a proper subset keeps all of its mass exactly when
/// it has no outgoing support edge, so the test reduces to strong
/// connectivity of the support digraph.
pub fn is_irreducible(r: &RoutingMatrix) -> Result<bool> {
    if let Some(i) = (0..r.n()).find(|&i| !is_stochastic_row(r.row_sum(i))) {
        return Err(FlowError::Precondition(format!(
            "irreducibility is defined for stochastic routing; row {} sums to {}",
            i + 1,
            r.row_sum(i)
        )));
    }
    Ok(closed_subset(r).is_none())
}

pub fn classify_routing(r: &RoutingMatrix) -> RoutingClass {
    let sums = r.row_sums();
    if sums.iter().all(|&s| is_stochastic_row(s)) {
        return match closed_subset(r) {
            None => RoutingClass {
                tag: RoutingTag::StochasticIrreducible,
                detail: "stochastic and strongly connected".into(),
            },
            Some(set) => RoutingClass {
                tag: RoutingTag::Other,
                detail: format!("stochastic but reducible: closed subset {}", format_set(set)),
            },
        };
    }
    let leaky = leaky_nodes(r);
    let reach = reachable(r, &leaky, true);
    let stuck: Vec<usize> = (0..r.n()).filter(|&i| !reach[i]).collect();
    if stuck.is_empty() {
        RoutingClass {
            tag: RoutingTag::SubStochasticOutConnected,
            detail: format!("leaky nodes {}", format_set(leaky)),
        }
    } else {
        RoutingClass {
            tag: RoutingTag::Other,
            detail: format!("nodes {} cannot reach a leaky node", format_set(stuck)),
        }
    }
}

fn require_irreducible(r: &RoutingMatrix) -> Result<()> {
    let class = classify_routing(r);
    if class.tag != RoutingTag::StochasticIrreducible {
        return Err(FlowError::Precondition(format!(
            "stochastic irreducible routing required ({}: {})",
            class.tag, class.detail
        )));
    }
    Ok(())
}

/// Strictly positive probability vector with `pi = R' pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InvariantVector(Vec<f64>);

impl InvariantVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for InvariantVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn fixed_point_residual(r: &RoutingMatrix, pi: &[f64]) -> f64 {
    let rp = r.transpose_mul(pi);
    linalg::max_abs(&rp.iter().zip(pi).map(|(a, b)| a - b).collect::<Vec<_>>())
}

/// Solves `[(I - R'); 1'] x = [rhs; total]` in the least-squares sense.
fn stacked_solve(r: &RoutingMatrix, rhs: &[f64], total: f64) -> Result<Vec<f64>> {
    let n = r.n();
    let rt = r.transposed_dense();
    let a = DMatrix::from_fn(n + 1, n, |i, j| {
        if i == n {
            1.0
        } else {
            let id = if i == j { 1.0 } else { 0.0 };
            id - rt[(i, j)]
        }
    });
    let b = DVector::from_fn(n + 1, |i, _| if i == n { total } else { rhs[i] });
    let svd = a.svd(true, true);
    let x = svd
        .solve(&b, 1e-13)
        .map_err(|e| FlowError::Numerical(format!("linear solve failed: {e}")))?;
    Ok(x.iter().copied().collect())
}

/// Power iteration on `(I + R')/2`, falling back to a direct null-space
/// solve when it stalls.
pub fn invariant_vector(r: &RoutingMatrix) -> Result<InvariantVector> {
    require_irreducible(r)?;
    let n = r.n();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..PI_POWER_MAX_ITER {
        r.transpose_mul_into(&pi, &mut next);
        for (nx, p) in next.iter_mut().zip(&pi) {
            *nx = 0.5 * (*nx + p);
        }
        let total = linalg::sum(&next);
        next.iter_mut().for_each(|v| *v /= total);
        let step = linalg::l1_dist(&next, &pi);
        std::mem::swap(&mut pi, &mut next);
        if step < PI_POWER_STEP_TOL {
            converged = true;
            break;
        }
    }
    if !converged || fixed_point_residual(r, &pi) >= LINEAR_RESIDUAL_TOL {
        pi = stacked_solve(r, &vec![0.0; n], 1.0)?;
    }
    let residual = fixed_point_residual(r, &pi);
    if residual >= LINEAR_RESIDUAL_TOL {
        return Err(FlowError::Numerical(format!(
            "invariant vector residual {residual:e} not attainable"
        )));
    }
    if pi.iter().any(|&p| p <= 0.0) {
        return Err(FlowError::Numerical(
            "invariant vector has a nonpositive entry".into(),
        ));
    }
    Ok(InvariantVector(pi))
}

/// Zero-sum solution of `Hv = R'Hv + v` for zero-sum `v`.
pub fn h_operator(r: &RoutingMatrix, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != r.n() {
        return Err(ValidationError::Dimension(format!(
            "vector has {} entries, expected {}",
            v.len(),
            r.n()
        ))
        .into());
    }
    require_irreducible(r)?;
    if !is_zero_sum(v) {
        return Err(FlowError::Precondition(format!(
            "H is defined on zero-sum vectors; sum is {}",
            linalg::sum(v)
        )));
    }
    let hv = stacked_solve(r, v, 0.0)?;
    let rhv = r.transpose_mul(&hv);
    let residual = (0..r.n())
        .map(|i| (hv[i] - rhv[i] - v[i]).abs())
        .fold(0.0, f64::max);
    if residual >= LINEAR_RESIDUAL_TOL {
        return Err(FlowError::Numerical(format!(
            "H residual {residual:e} not attainable"
        )));
    }
    Ok(hv)
}
