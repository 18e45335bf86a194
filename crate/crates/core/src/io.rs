//! Scenario files and the CSV/JSON formats emitted by the command line.
//!
//! CSV numbers carry 17 significant digits so that outputs are exact and
//! byte-stable. JSON numbers use the shortest representation that parses
//! back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::dynamics::{IntegratorConfig, Trajectory};
use crate::equilibria::EquilibriumSet;
use crate::error::{FlowError, Result, ValidationError};
use crate::netmodel::{self, NetworkSpec, RawNetworkSpec, RoutingTag};
use crate::transitions::SweepResult;

/// Integrator settings a scenario may override.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorOverrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub sample_every: Option<usize>,
    pub residual_tol: Option<f64>,
}

impl IntegratorOverrides {
    pub fn apply(&self, base: IntegratorConfig) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt.unwrap_or(base.dt),
            t_end: self.t_end.unwrap_or(base.t_end),
            sample_every: self.sample_every.unwrap_or(base.sample_every),
            residual_tol: self.residual_tol.unwrap_or(base.residual_tol),
        }
    }
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub routing: Vec<Vec<f64>>,
    pub capacity: Vec<f64>,
    pub demand: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflow: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outflow: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorOverrides>,
}

/// A parsed and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: Option<String>,
    pub spec: NetworkSpec,
    pub integrator: IntegratorConfig,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        let spec = netmodel::validate(RawNetworkSpec {
            routing: self.routing,
            capacity: self.capacity,
            demand: self.demand,
            inflow: self.inflow,
            outflow: self.outflow,
        })?;
        let integrator = self
            .integrator
            .unwrap_or_default()
            .apply(IntegratorConfig::default());
        integrator.validate()?;
        Ok(Scenario {
            name: self.name,
            spec,
            integrator,
        })
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text)
        .map_err(|e| ValidationError::Other(format!("scenario JSON: {e}")))?;
    file.into_scenario()
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ValidationError::Other(format!("cannot read {}: {e}", path.display()))
    })?;
    parse_scenario(&text)
}

/// Parses a comma-separated list of numbers.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    FlowError::from(ValidationError::Other(format!("not a finite number: {t:?}")))
                })
        })
        .collect()
}

/// Formats a value with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_values(line: &mut String, values: &[f64]) {
    for v in values {
        line.push(',');
        line.push_str(&fmt_f64(*v));
    }
}

fn numbered(prefix: &str, n: usize) -> String {
    (1..=n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",")
}

/// `t,x1,...,xn,residual_l1`, one row per sample.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map_or(0, Vec::len);
    let mut out = format!("t,{},residual_l1\n", numbered("x", n));
    for ((t, x), r) in traj.times.iter().zip(&traj.states).zip(&traj.residuals) {
        let mut line = fmt_f64(*t);
        push_values(&mut line, x);
        line.push(',');
        line.push_str(&fmt_f64(*r));
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// `s,c1..cn,kind,cond_value,xmin1..xminn,xmax1..xmaxn,on_manifold`.
pub fn sweep_csv(result: &SweepResult) -> String {
    let n = result.rows.first().map_or(0, |r| r.c.len());
    let mut out = format!(
        "s,{},kind,cond_value,{},{},on_manifold\n",
        numbered("c", n),
        numbered("xmin", n),
        numbered("xmax", n)
    );
    for row in &result.rows {
        let mut line = fmt_f64(row.s);
        push_values(&mut line, &row.c);
        let cond = row.condition_value.map(fmt_f64).unwrap_or_default();
        let _ = write!(line, ",{},{}", row.kind, cond);
        push_values(&mut line, &row.x_min);
        push_values(&mut line, &row.x_max);
        let _ = write!(line, ",{}", row.on_manifold);
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// `{"critical":[{"s":..,"jump":..,"s_lo":..,"s_hi":..}]}`; `s` and `jump`
/// are null for brackets that could not be resolved or carry no jump.
pub fn critical_sidecar(result: &SweepResult) -> Value {
    let critical: Vec<Value> = result
        .critical_points
        .iter()
        .map(|cp| {
            json!({
                "s": cp.s_star,
                "jump": cp.jump,
                "s_lo": cp.s_lo,
                "s_hi": cp.s_hi,
            })
        })
        .collect();
    let mut doc = Map::new();
    doc.insert("critical".into(), Value::Array(critical));
    if result.critical_points.is_empty() && !result.jumps.is_empty() {
        // paths lying on the critical set report their jump without a bracket
        let on_set: Vec<Value> = result
            .jumps
            .iter()
            .map(|j| json!({"s": j.s, "jump": j.magnitude}))
            .collect();
        doc.insert("on_critical_set".into(), Value::Array(on_set));
    }
    Value::Object(doc)
}

pub fn equilibrium_json(set: &EquilibriumSet) -> Value {
    let mut doc = Map::new();
    doc.insert("kind".into(), json!(set.kind.to_string()));
    doc.insert("x_min".into(), json!(set.x_min));
    doc.insert("x_max".into(), json!(set.x_max));
    if let Some(seg) = &set.segment {
        doc.insert("alpha_min".into(), json!(seg.alpha_min));
        doc.insert("alpha_max".into(), json!(seg.alpha_max));
        doc.insert("hc".into(), json!(seg.hc));
        doc.insert("pi".into(), json!(seg.pi));
    }
    if let Some(v) = set.condition_value {
        doc.insert("condition_value".into(), json!(v));
    }
    Value::Object(doc)
}

/// Structural report on a scenario's routing matrix.
pub fn check_report(spec: &NetworkSpec) -> Result<Value> {
    let r = spec.routing();
    let class = netmodel::classify_routing(r);
    let mut doc = Map::new();
    doc.insert("class".into(), json!(class.tag.to_string()));
    doc.insert("detail".into(), json!(class.detail));
    doc.insert("row_sums".into(), json!(r.row_sums()));
    match class.tag {
        RoutingTag::StochasticIrreducible => {
            let pi = netmodel::invariant_vector(r)?;
            doc.insert("pi".into(), json!(pi.as_slice()));
        }
        _ => {
            let leaky: Vec<usize> = netmodel::leaky_nodes(r).iter().map(|i| i + 1).collect();
            doc.insert("leaky_nodes".into(), json!(leaky));
        }
    }
    Ok(Value::Object(doc))
}
