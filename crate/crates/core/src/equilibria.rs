//! Equilibrium sets of the saturated flow network.
//!
//! Equilibria are the fixed points of `T(x) = S_0^w(R'x + c)`. `T` is
//! monotone, so iterating it from `0` climbs to the least fixed point and
//! iterating from `w` descends to the greatest one. For stochastic
//! irreducible routing and zero-sum demand the set is the segment
//! `{Hc + alpha pi} ∩ [0, w]`, computed in closed form.

use serde::{Deserialize, Serialize};

use crate::dynamics::{saturated_target_into, LATTICE_TOL};
use crate::error::{FlowError, Result};
use crate::linalg;
use crate::netmodel::{self, classify_routing, NetworkSpec, RoutingTag};

/// Condition values within this band of zero are reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-10;
/// Allowed disagreement between independent routes to the same point.
pub const CROSS_CHECK_TOL: f64 = 1e-6;
/// Fixed-point residual every returned equilibrium must meet.
pub const EQUILIBRIUM_RESIDUAL_TOL: f64 = 1e-10;
const BOUNDARY_TOL: f64 = 1e-9;
const SEGMENT_CROSS_CHECK_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardConfig {
    pub max_iter: usize,
    /// Stop once `|x_{k+1} - x_k|_1` falls below this.
    pub step_tol: f64,
    /// Residual `|T(x) - x|_1` required for `converged`.
    pub residual_tol: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            max_iter: 1_000_000,
            step_tol: 1e-12,
            residual_tol: EQUILIBRIUM_RESIDUAL_TOL,
        }
    }
}

/// Outcome of a monotone fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
}

/// `|T(x) - x|_1`.
pub fn fixed_point_residual(spec: &NetworkSpec, x: &[f64]) -> f64 {
    let mut t = vec![0.0; spec.n()];
    saturated_target_into(spec, x, &mut t);
    linalg::l1_dist(&t, x)
}

fn picard_from(spec: &NetworkSpec, start: Vec<f64>, cfg: &PicardConfig) -> FixedPoint {
    let mut x = start;
    let mut next = vec![0.0; spec.n()];
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        saturated_target_into(spec, &x, &mut next);
        iterations += 1;
        let step = linalg::l1_dist(&next, &x);
        std::mem::swap(&mut x, &mut next);
        if step < cfg.step_tol {
            break;
        }
    }
    let residual = fixed_point_residual(spec, &x);
    FixedPoint {
        x,
        iterations,
        converged: residual < cfg.residual_tol,
        residual,
    }
}

/// Least equilibrium, reached by iterating `T` upward from the empty state.
pub fn picard_min(spec: &NetworkSpec) -> FixedPoint {
    picard_min_with(spec, &PicardConfig::default())
}

pub fn picard_min_with(spec: &NetworkSpec, cfg: &PicardConfig) -> FixedPoint {
    picard_from(spec, vec![0.0; spec.n()], cfg)
}

/// Greatest equilibrium, reached by iterating `T` downward from `w`.
pub fn picard_max(spec: &NetworkSpec) -> FixedPoint {
    picard_max_with(spec, &PicardConfig::default())
}

pub fn picard_max_with(spec: &NetworkSpec, cfg: &PicardConfig) -> FixedPoint {
    picard_from(spec, spec.capacity().to_vec(), cfg)
}

/// Result of the positive-length test for stochastic irreducible routing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multiplicity {
    /// `min_i (Hc)_i/pi_i + min_i (w_i - (Hc)_i)/pi_i`; absent when `c` is
    /// not zero-sum.
    pub value: Option<f64>,
    pub multiple: bool,
    /// `|value| <= MARGINAL_BAND`: too close to zero to classify.
    pub marginal: bool,
}

struct SegmentGeometry {
    hc: Vec<f64>,
    pi: Vec<f64>,
    alpha_min: f64,
    alpha_max: f64,
}

impl SegmentGeometry {
    fn compute(spec: &NetworkSpec) -> Result<Self> {
        let r = spec.routing();
        let pi = netmodel::invariant_vector(r)?.into_inner();
        let hc = netmodel::h_operator(r, spec.demand())?;
        let alpha_min = -hc
            .iter()
            .zip(&pi)
            .map(|(h, p)| h / p)
            .fold(f64::INFINITY, f64::min);
        let alpha_max = hc
            .iter()
            .zip(&pi)
            .zip(spec.capacity())
            .map(|((h, p), w)| (w - h) / p)
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            hc,
            pi,
            alpha_min,
            alpha_max,
        })
    }

    fn condition_value(&self) -> f64 {
        self.alpha_max - self.alpha_min
    }

    fn point(&self, alpha: f64, w: &[f64]) -> Vec<f64> {
        // endpoints sit on the box boundary up to rounding; snap them in
        self.hc
            .iter()
            .zip(&self.pi)
            .zip(w)
            .map(|((h, p), &wi)| (h + alpha * p).clamp(0.0, wi))
            .collect()
    }
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

pub fn multiplicity_test(spec: &NetworkSpec) -> Result<Multiplicity> {
    require_irreducible(spec)?;
    if !netmodel::is_zero_sum(spec.demand()) {
        return Ok(Multiplicity {
            value: None,
            multiple: false,
            marginal: false,
        });
    }
    let value = SegmentGeometry::compute(spec)?.condition_value();
    Ok(classify_condition(value))
}

fn classify_condition(value: f64) -> Multiplicity {
    let marginal = value.abs() <= MARGINAL_BAND;
    Multiplicity {
        value: Some(value),
        multiple: value > MARGINAL_BAND,
        marginal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EquilibriumKind {
    Point,
    Segment,
    MinMaxOnly,
}

impl std::fmt::Display for EquilibriumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EquilibriumKind::Point => "Point",
            EquilibriumKind::Segment => "Segment",
            EquilibriumKind::MinMaxOnly => "MinMaxOnly",
        })
    }
}

/// Segment parameters: the set is `{hc + alpha pi : alpha_min <= alpha <= alpha_max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentData {
    pub hc: Vec<f64>,
    pub pi: Vec<f64>,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub kind: EquilibriumKind,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub segment: Option<SegmentData>,
    pub condition_value: Option<f64>,
}

impl EquilibriumSet {
    /// `|x_max - x_min|_1`.
    pub fn spread(&self) -> f64 {
        linalg::l1_dist(&self.x_max, &self.x_min)
    }

    /// The single equilibrium, when the set is a point.
    pub fn point(&self) -> Option<&[f64]> {
        (self.kind == EquilibriumKind::Point).then_some(self.x_min.as_slice())
    }

    /// `l1` distance from `x` to the set. For `MinMaxOnly` this is the
    /// distance to the box spanned by the extreme equilibria.
    pub fn l1_distance(&self, x: &[f64]) -> f64 {
        match (&self.kind, &self.segment) {
            (EquilibriumKind::Segment, Some(seg)) => {
                // minimise sum_i pi_i |t_i - alpha| over alpha: weighted median
                let mut pts: Vec<(f64, f64)> = x
                    .iter()
                    .zip(&seg.hc)
                    .zip(&seg.pi)
                    .map(|((xi, h), p)| ((xi - h) / p, *p))
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let half = 0.5 * pts.iter().map(|p| p.1).sum::<f64>();
                let mut acc = 0.0;
                let mut median = pts[pts.len() - 1].0;
                for (t, p) in &pts {
                    acc += p;
                    if acc >= half {
                        median = *t;
                        break;
                    }
                }
                let alpha = median.clamp(seg.alpha_min, seg.alpha_max);
                x.iter()
                    .zip(&seg.hc)
                    .zip(&seg.pi)
                    .map(|((xi, h), p)| (xi - h - alpha * p).abs())
                    .sum()
            }
            (EquilibriumKind::Point, _) => linalg::l1_dist(x, &self.x_min),
            _ => x
                .iter()
                .zip(self.x_min.iter().zip(&self.x_max))
                .map(|(v, (lo, hi))| (lo - v).max(0.0) + (v - hi).max(0.0))
                .sum(),
        }
    }
}

fn certified(spec: &NetworkSpec, fp: FixedPoint, which: &str) -> Result<Vec<f64>> {
    if !fp.converged {
        return Err(FlowError::Numerical(format!(
            "{which} iteration stalled after {} steps (residual {:e})",
            fp.iterations, fp.residual
        )));
    }
    debug_assert!(crate::dynamics::in_lattice(spec, &fp.x, LATTICE_TOL));
    Ok(fp.x)
}

fn unique_point(spec: &NetworkSpec, condition_value: Option<f64>) -> Result<EquilibriumSet> {
    let lo = certified(spec, picard_min(spec), "upward")?;
    let hi = certified(spec, picard_max(spec), "downward")?;
    let gap = linalg::l1_dist(&lo, &hi);
    if gap > CROSS_CHECK_TOL {
        return Err(FlowError::Inconsistent(format!(
            "least and greatest equilibria differ by {gap:e} where uniqueness holds"
        )));
    }
    Ok(EquilibriumSet {
        kind: EquilibriumKind::Point,
        x_min: lo,
        x_max: hi,
        segment: None,
        condition_value,
    })
}

fn segment(spec: &NetworkSpec, geo: SegmentGeometry) -> Result<EquilibriumSet> {
    let w = spec.capacity();
    let x_min = geo.point(geo.alpha_min, w);
    let x_max = geo.point(geo.alpha_max, w);

    for (name, x) in [("lower", &x_min), ("upper", &x_max)] {
        let res = fixed_point_residual(spec, x);
        if res >= EQUILIBRIUM_RESIDUAL_TOL {
            return Err(FlowError::Inconsistent(format!(
                "{name} segment endpoint is not an equilibrium (residual {res:e})"
            )));
        }
        let on_boundary = x
            .iter()
            .zip(w)
            .any(|(v, wi)| v.abs() <= BOUNDARY_TOL || (wi - v).abs() <= BOUNDARY_TOL);
        if !on_boundary {
            return Err(FlowError::Inconsistent(format!(
                "{name} segment endpoint is interior to the box"
            )));
        }
    }

    // independent route: the monotone iterations must land on the endpoints
    let cfg = PicardConfig {
        max_iter: SEGMENT_CROSS_CHECK_BUDGET,
        ..Default::default()
    };
    for (fp, expected, name) in [
        (picard_min_with(spec, &cfg), &x_min, "lower"),
        (picard_max_with(spec, &cfg), &x_max, "upper"),
    ] {
        if fp.converged {
            let gap = linalg::l1_dist(&fp.x, expected);
            if gap > CROSS_CHECK_TOL {
                return Err(FlowError::Inconsistent(format!(
                    "{name} endpoint disagrees with monotone iteration by {gap:e}"
                )));
            }
        }
    }

    let condition_value = geo.condition_value();
    Ok(EquilibriumSet {
        kind: EquilibriumKind::Segment,
        x_min,
        x_max,
        segment: Some(SegmentData {
            hc: geo.hc,
            pi: geo.pi,
            alpha_min: geo.alpha_min,
            alpha_max: geo.alpha_max,
        }),
        condition_value: Some(condition_value),
    })
}

/// Computes and classifies the full equilibrium set.
pub fn equilibrium_set(spec: &NetworkSpec) -> Result<EquilibriumSet> {
    let class = classify_routing(spec.routing());
    match class.tag {
        RoutingTag::StochasticIrreducible => {
            if !netmodel::is_zero_sum(spec.demand()) {
                return unique_point(spec, None);
            }
            let geo = SegmentGeometry::compute(spec)?;
            let test = classify_condition(geo.condition_value());
            if test.multiple {
                segment(spec, geo)
            } else if test.marginal {
                // the line touches the box in a single point
                let x = geo.point(0.5 * (geo.alpha_min + geo.alpha_max), spec.capacity());
                let res = fixed_point_residual(spec, &x);
                if res >= EQUILIBRIUM_RESIDUAL_TOL {
                    return Err(FlowError::Numerical(format!(
                        "marginal equilibrium residual {res:e}"
                    )));
                }
                Ok(EquilibriumSet {
                    kind: EquilibriumKind::Point,
                    x_min: x.clone(),
                    x_max: x,
                    segment: None,
                    condition_value: test.value,
                })
            } else {
                unique_point(spec, test.value)
            }
        }
        RoutingTag::SubStochasticOutConnected => unique_point(spec, None),
        RoutingTag::Other => {
            let lo = certified(spec, picard_min(spec), "upward")?;
            let hi = certified(spec, picard_max(spec), "downward")?;
            Ok(EquilibriumSet {
                kind: EquilibriumKind::MinMaxOnly,
                x_min: lo,
                x_max: hi,
                segment: None,
                condition_value: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE_R: [[f64; 3]; 3] = [[0.0, 0.75, 0.25], [0.0, 0.0, 1.0], [0.3, 0.7, 0.0]];
    const X_LOW: [f64; 3] = [12.0 / 37.0, 0.0, 40.0 / 37.0];
    const X_HIGH: [f64; 3] = [60.0 / 37.0, 4.0, 200.0 / 37.0];

    fn example(c: [f64; 3]) -> NetworkSpec {
        NetworkSpec::new(
            EXAMPLE_R.iter().map(|r| r.to_vec()).collect(),
            vec![5.0, 4.0, 6.0],
            c.to_vec(),
        )
        .unwrap()
    }

    fn two_cell(c: [f64; 2]) -> NetworkSpec {
        NetworkSpec::new(
            vec![vec![0.0, 0.5], vec![0.5, 0.0]],
            vec![1.0, 1.0],
            c.to_vec(),
        )
        .unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        linalg::l1_dist(a, b) < tol
    }

    #[test]
    fn picard_zero_demand_stays_empty() {
        let fp = picard_min(&example([0.0; 3]));
        assert!(fp.converged);
        assert_eq!(fp.x, vec![0.0; 3]);
    }

    #[test]
    fn picard_example_extremes() {
        let spec = example([0.0, -1.0, 1.0]);
        let lo = picard_min(&spec);
        let hi = picard_max(&spec);
        assert!(lo.converged && hi.converged);
        assert!(close(&lo.x, &X_LOW, 1e-9), "{:?}", lo.x);
        assert!(close(&hi.x, &X_HIGH, 1e-9), "{:?}", hi.x);
    }

    #[test]
    fn picard_max_zero_demand() {
        // alpha_max = min_i w_i / pi_i = 356/37 attained at cell 2
        let a = 356.0 / 37.0;
        let expected = [a * 12.0 / 89.0, 4.0, a * 40.0 / 89.0];
        let fp = picard_max(&example([0.0; 3]));
        assert!(close(&fp.x, &expected, 1e-9), "{:?}", fp.x);
        assert!((expected[0] - 1.2973).abs() < 1e-4 && (expected[2] - 4.3243).abs() < 1e-4);
    }

    #[test]
    fn picard_out_connected_unique() {
        let spec = two_cell([0.3, 0.3]);
        let lo = picard_min(&spec);
        let hi = picard_max(&spec);
        assert!(close(&lo.x, &[0.6, 0.6], 1e-10));
        assert!(close(&hi.x, &[0.6, 0.6], 1e-10));
    }

    #[test]
    fn picard_reports_exhausted_budget() {
        let cfg = PicardConfig {
            max_iter: 2,
            ..Default::default()
        };
        let fp = picard_max_with(&example([0.0, -1.0, 1.0]), &cfg);
        assert!(!fp.converged);
        assert_eq!(fp.iterations, 2);
    }

    #[test]
    fn multiplicity_examples() {
        let m = multiplicity_test(&example([0.0, -1.0, 1.0])).unwrap();
        assert!(m.multiple);
        assert!((m.value.unwrap() - 356.0 / 37.0).abs() < 1e-10);

        let m = multiplicity_test(&example([0.0, -1.0, 0.0])).unwrap();
        assert_eq!(m.value, None);
        assert!(!m.multiple);

        // 10 Hc = [120, -520, 400]/89, so the value is -520/37 + min(27.08.., 23.67.., 3.35)
        let m = multiplicity_test(&example([0.0, -10.0, 10.0])).unwrap();
        let expected = -520.0 / 37.0 + (6.0 - 400.0 / 89.0) / (40.0 / 89.0);
        assert!((m.value.unwrap() - expected).abs() < 1e-9);
        assert!((m.value.unwrap() + 10.70).abs() < 1e-2);
        assert!(!m.multiple);

        assert!(matches!(
            multiplicity_test(&two_cell([0.0, 0.0])),
            Err(FlowError::Precondition(_))
        ));
    }

    #[test]
    fn equilibrium_set_example_segment() {
        let set = equilibrium_set(&example([0.0, -1.0, 1.0])).unwrap();
        assert_eq!(set.kind, EquilibriumKind::Segment);
        assert!(close(&set.x_min, &X_LOW, 1e-12));
        assert!(close(&set.x_max, &X_HIGH, 1e-12));
        let seg = set.segment.as_ref().unwrap();
        assert!((seg.alpha_min - 52.0 / 37.0).abs() < 1e-12);
        assert!((seg.alpha_max - 408.0 / 37.0).abs() < 1e-12);
        assert!((set.spread() - set.condition_value.unwrap()).abs() < 1e-8);
        let gap: Vec<f64> = set.x_max.iter().zip(&set.x_min).map(|(a, b)| a - b).collect();
        assert!(gap.iter().all(|g| *g > 1e-10));
    }

    #[test]
    fn equilibrium_set_zero_demand_segment() {
        let set = equilibrium_set(&example([0.0; 3])).unwrap();
        assert_eq!(set.kind, EquilibriumKind::Segment);
        assert!(linalg::l1_norm(&set.x_min) < 1e-14);
        let a = 356.0 / 37.0;
        let expected = [a * 12.0 / 89.0, a * 37.0 / 89.0, a * 40.0 / 89.0];
        assert!(close(&set.x_max, &expected, 1e-12));
    }

    #[test]
    fn equilibrium_set_out_connected_point() {
        let set = equilibrium_set(&two_cell([0.3, 0.3])).unwrap();
        assert_eq!(set.kind, EquilibriumKind::Point);
        assert!(close(set.point().unwrap(), &[0.6, 0.6], 1e-10));
    }

    #[test]
    fn equilibrium_set_zero_sum_without_multiplicity_is_point() {
        let spec = example([0.0, -10.0, 10.0]);
        let set = equilibrium_set(&spec).unwrap();
        assert_eq!(set.kind, EquilibriumKind::Point);
        assert!(set.spread() < 1e-8);
        assert!(fixed_point_residual(&spec, &set.x_min) < 1e-10);
        assert!(set.condition_value.unwrap() < 0.0);
    }

    #[test]
    fn equilibrium_set_reducible_gives_extremes_only() {
        let spec = NetworkSpec::new(
            vec![
                vec![0.0, 1.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![1.0; 4],
            vec![0.1, -0.1, 0.0, 0.0],
        )
        .unwrap();
        let set = equilibrium_set(&spec).unwrap();
        assert_eq!(set.kind, EquilibriumKind::MinMaxOnly);
        assert!(linalg::leq(&set.x_min, &set.x_max, 1e-12));
    }

    #[test]
    fn segment_midpoint_is_linear_equilibrium() {
        let spec = example([0.0, -1.0, 1.0]);
        let set = equilibrium_set(&spec).unwrap();
        let mid = linalg::lerp(&set.x_min, &set.x_max, 0.5);
        let lin = crate::dynamics::linear_rhs(&spec, &mid);
        assert!(linalg::max_abs(&lin) < 1e-8);
    }

    #[test]
    fn distance_to_segment() {
        let set = equilibrium_set(&example([0.0, -1.0, 1.0])).unwrap();
        let mid = linalg::lerp(&set.x_min, &set.x_max, 0.3);
        assert!(set.l1_distance(&mid) < 1e-12);
        assert!((set.l1_distance(&[0.0; 3]) - linalg::l1_norm(&X_LOW)).abs() < 1e-12);
        // brute-force oracle over a fine alpha grid
        let x = [2.0, 1.0, 0.5];
        let seg = set.segment.as_ref().unwrap();
        let brute = (0..=200_000)
            .map(|k| {
                let a = seg.alpha_min + (seg.alpha_max - seg.alpha_min) * k as f64 / 200_000.0;
                (0..3)
                    .map(|i| (x[i] - seg.hc[i] - a * seg.pi[i]).abs())
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((set.l1_distance(&x) - brute).abs() < 1e-4);
    }
}
