//! Interpreters for forward graphs and inverse programs.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{Graph, Label, NodeId, OpKind};
use crate::inversion::InverseProgram;
use crate::primitives::inverse::{saturate, SATURATION_PENALTY};
use crate::primitives::{forward_eval, InverseOp, PrimitiveKind, Variant};
use crate::value::Value;

/// Value of every node after a run; `None` for op nodes.
pub type Trace = Vec<Option<Value>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TapKind {
    /// Distance of a contracted value to its target set.
    Contract,
    /// Coupling violation inside an inverse op.
    Joint,
    /// Non-finite result replaced by a finite one.
    Saturation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tap {
    /// Op the tap is charged to.
    pub op: NodeId,
    pub origin: String,
    pub kind: TapKind,
    pub distance: f64,
}

/// Result of one inverse evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub trace: Trace,
    pub taps: Vec<Tap>,
    pub outputs: BTreeMap<String, Value>,
}

impl Evaluation {
    pub fn domain_loss(&self) -> f64 {
        self.taps.iter().map(|t| t.distance).sum()
    }

    /// First value node holding ⊥, if any.
    pub fn first_undefined(&self) -> Option<NodeId> {
        self.trace
            .iter()
            .position(|v| matches!(v, Some(Value::Undefined)))
            .map(NodeId)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub identity_loss: f64,
    pub domain_loss_total: f64,
    pub per_tap: Vec<Tap>,
    pub outputs: BTreeMap<String, Value>,
}

fn json_num(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

impl LossReport {
    pub fn to_json(&self) -> serde_json::Value {
        let outputs: serde_json::Map<String, serde_json::Value> =
            self.outputs.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
        let taps: Vec<serde_json::Value> = self
            .per_tap
            .iter()
            .map(|t| json!({"op": t.op.0, "origin": t.origin, "kind": t.kind, "distance": json_num(t.distance)}))
            .collect();
        json!({
            "identity_loss": json_num(self.identity_loss),
            "domain_loss_total": json_num(self.domain_loss_total),
            "per_tap": taps,
            "outputs": outputs,
        })
    }
}

pub fn values_to_json(values: &BTreeMap<String, Value>) -> serde_json::Value {
    serde_json::Value::Object(values.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
}

/// Parse `{"name": value, ...}`.
pub fn values_from_json(doc: &serde_json::Value) -> Result<BTreeMap<String, Value>> {
    let obj = doc.as_object().ok_or_else(|| Error::Parse {
        line: 0,
        field: String::new(),
        message: "expected an object of named values".into(),
    })?;
    obj.iter()
        .map(|(k, v)| {
            Value::from_json(v).map(|v| (k.clone(), v)).map_err(|m| Error::Parse {
                line: 0,
                field: k.clone(),
                message: m,
            })
        })
        .collect()
}

fn bind_inputs(g: &Graph, inputs: &BTreeMap<String, Value>, trace: &mut Trace) -> Result<()> {
    for (id, name) in g.inputs() {
        let v = inputs.get(name).ok_or_else(|| Error::MissingInput(name.to_string()))?;
        if let Some(Label::Input { shape, .. }) = g.label(id) {
            if !shape.is_empty() && !v.is_undefined() && v.shape() != *shape {
                return Err(Error::TypeMismatch(format!(
                    "input {name:?} declared with shape {shape:?}, got {v}"
                )));
            }
        }
        trace[id.0] = Some(v.clone());
    }
    Ok(())
}

fn seed_trace(g: &Graph) -> Trace {
    let mut trace: Trace = vec![None; g.len()];
    for id in g.value_ids() {
        if let Some(Label::Constant(c)) = g.label(id) {
            trace[id.0] = Some(c.clone());
        }
    }
    trace
}

fn collect_outputs(g: &Graph, trace: &Trace) -> BTreeMap<String, Value> {
    g.outputs()
        .into_iter()
        .map(|(id, name)| (name.to_string(), trace[id.0].clone().unwrap_or(Value::Undefined)))
        .collect()
}

/// Evaluate a forward graph. ⊥ propagates; it is not an error.
pub fn run_forward(g: &Graph, inputs: &BTreeMap<String, Value>) -> Result<(BTreeMap<String, Value>, Trace)> {
    let mut trace = seed_trace(g);
    bind_inputs(g, inputs, &mut trace)?;
    for &op in g.topo_order() {
        let ins: Vec<Value> = g.inputs_of(op).iter().map(|v| trace[v.0].clone().unwrap()).collect();
        let outs = match g.op_kind(op).unwrap() {
            OpKind::Prim(k) => forward_eval(k, &ins)?,
            OpKind::Contract(s) => vec![s.contract_value(&ins[0])],
            OpKind::Inverse(inv) => {
                let (y, c, t) = split_inverse_inputs(inv, &ins);
                inv.eval_strict(y, c, t)?.outputs
            }
        };
        for (v, x) in g.outputs_of(op).iter().zip(outs) {
            trace[v.0] = Some(x);
        }
    }
    Ok((collect_outputs(g, &trace), trace))
}

fn split_inverse_inputs<'a>(inv: &InverseOp, ins: &'a [Value]) -> (&'a [Value], &'a [Value], &'a [Value]) {
    let (n_y, n_c) = (inv.n_y(), inv.n_const());
    (&ins[..n_y], &ins[n_y..n_y + n_c], &ins[n_y + n_c..])
}

fn has_joint(inv: &InverseOp) -> bool {
    matches!(inv.kind, PrimitiveKind::Dupl(_) | PrimitiveKind::GatherNd | PrimitiveKind::Scatter)
        || matches!(inv.variant, Variant::Pinned(_) | Variant::Degenerate(_))
}

/// Evaluate an inverse program without turning ⊥ into an error.
pub fn eval_inverse(ip: &InverseProgram, y: &BTreeMap<String, Value>, theta: &[f64]) -> Result<Evaluation> {
    let g = &ip.graph;
    let mut trace = seed_trace(g);
    let params = ip.layout.unpack(theta)?;
    let mut bound = y.clone();
    for (id, name) in g.inputs() {
        if let Some(v) = params.get(&id) {
            bound.insert(name.to_string(), v.clone());
        }
    }
    bind_inputs(g, &bound, &mut trace)?;
    let mut taps = Vec::new();
    for &op in g.topo_order() {
        let ins: Vec<Value> = g.inputs_of(op).iter().map(|v| trace[v.0].clone().unwrap()).collect();
        let outs = match g.op_kind(op).unwrap() {
            OpKind::Prim(k) => {
                let mut outs = forward_eval(k, &ins)?;
                if ip.totalized {
                    for o in outs.iter_mut() {
                        if o.is_undefined() {
                            *o = Value::Real(0.0);
                            taps.push(Tap {
                                op,
                                origin: k.to_string(),
                                kind: TapKind::Saturation,
                                distance: SATURATION_PENALTY,
                            });
                        }
                    }
                }
                outs
            }
            OpKind::Contract(s) => {
                let (target, origin) = match g.consumers(g.outputs_of(op)[0]).first() {
                    Some(&(c, _)) => (c, g.op_kind(c).unwrap().to_string()),
                    None => (op, format!("contract:{s}")),
                };
                let mut out = s.contract_value(&ins[0]);
                let mut distance = s.distance_value(&ins[0]);
                if !distance.is_finite() {
                    distance = SATURATION_PENALTY;
                }
                let mut saturated = 0;
                saturate(&mut out, &mut saturated);
                taps.push(Tap {
                    op: target,
                    origin,
                    kind: TapKind::Contract,
                    distance,
                });
                vec![out]
            }
            OpKind::Inverse(inv) => {
                let (yv, c, t) = split_inverse_inputs(inv, &ins);
                let applied = if ip.totalized {
                    inv.eval_total(yv, c, t)?
                } else {
                    inv.eval_strict(yv, c, t)?
                };
                if has_joint(inv) || applied.joint != 0.0 {
                    taps.push(Tap {
                        op,
                        origin: inv.to_string(),
                        kind: TapKind::Joint,
                        distance: applied.joint,
                    });
                }
                applied.outputs
            }
        };
        for (v, x) in g.outputs_of(op).iter().zip(outs) {
            trace[v.0] = Some(x);
        }
    }
    let outputs = collect_outputs(g, &trace);
    Ok(Evaluation { trace, taps, outputs })
}

/// Evaluate an inverse program and score the recovered inputs.
pub fn run_inverse(ip: &InverseProgram, y: &BTreeMap<String, Value>, theta: &[f64]) -> Result<LossReport> {
    let ev = eval_inverse(ip, y, theta)?;
    if let Some(bad) = ev.first_undefined() {
        return Err(Error::NotTotalized(bad));
    }
    let identity_loss = identity_loss(ip, y, &ev.outputs);
    Ok(LossReport {
        identity_loss,
        domain_loss_total: ev.domain_loss(),
        per_tap: ev.taps,
        outputs: ev.outputs,
    })
}

/// `d(f(x), y)` by re-running the forward graph; infinite when `f(x)` is ⊥.
pub fn identity_loss(ip: &InverseProgram, y: &BTreeMap<String, Value>, x: &BTreeMap<String, Value>) -> f64 {
    let Ok((fx, _)) = run_forward(&ip.forward, x) else {
        return f64::INFINITY;
    };
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (_, name) in ip.forward.outputs() {
        let (Some(p), Some(q)) = (fx.get(name), y.get(name)) else {
            return f64::INFINITY;
        };
        a.push(p.clone());
        b.push(q.clone());
    }
    metric_many(&a, &b).unwrap_or(f64::INFINITY)
}

fn sq_dist(a: &Value, b: &Value) -> Result<f64> {
    let mismatch = || Error::TypeMismatch(format!("cannot compare {a} with {b}"));
    match (a, b) {
        (Value::Undefined, _) | (_, Value::Undefined) => Ok(f64::INFINITY),
        (Value::Bool(p), Value::Bool(q)) => Ok(if p == q { 0.0 } else { 1.0 }),
        (Value::Int(p), Value::Int(q)) => Ok(if p == q { 0.0 } else { 1.0 }),
        (Value::Bool(_), _) | (_, Value::Bool(_)) => Err(mismatch()),
        (Value::Tensor { shape: s, data: d }, Value::Tensor { shape: t, data: e }) => {
            if s != t {
                return Err(mismatch());
            }
            Ok(d.iter().zip(e).map(|(x, y)| (x - y) * (x - y)).sum())
        }
        (Value::Tensor { .. }, _) | (_, Value::Tensor { .. }) => Err(mismatch()),
        _ => {
            let d = a.as_f64().unwrap() - b.as_f64().unwrap();
            Ok(d * d)
        }
    }
}

/// Distance between two values: absolute difference for scalars, Euclidean
/// for tensors, discrete for booleans and integers.
pub fn metric(a: &Value, b: &Value) -> Result<f64> {
    sq_dist(a, b).map(f64::sqrt)
}

/// Euclidean distance over the concatenation of several values.
pub fn metric_many(a: &[Value], b: &[Value]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::TypeMismatch(format!("comparing {} values with {}", a.len(), b.len())));
    }
    let mut s = 0.0;
    for (p, q) in a.iter().zip(b) {
        s += sq_dist(p, q)?;
    }
    Ok(s.sqrt())
}
