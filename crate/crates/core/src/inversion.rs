//! Graph inversion.
//!
//! The inverse graph reuses the forward node ids: every forward op becomes
//! its inverse op and every forward value node keeps its id with input and
//! output labels swapped. Parameter nodes are appended after them.
//!
//! Inverse op ports: inputs are the forward outputs (in slot order), then
//! the constant forward inputs, then θ; outputs are the non-constant forward
//! inputs in slot order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::exec::{run_forward, Trace};
use crate::graph::{Graph, GraphBuilder, Label, NodeId, NodeKind, OpKind, PortRef};
use crate::primitives::{InverseOp, PrimitiveKind};
use crate::propagation::{fold_constants, propagate, Annotations};
use crate::space::ParamSpace;
use crate::value::{Shape, Value};

/// Prefix of the input names given to parameter nodes.
pub const THETA_PREFIX: &str = "theta:";

pub type ThetaVec = Vec<f64>;

/// Rewrite value reuse through explicit `dupl` ops. Constants are cloned
/// instead, and an output that also feeds ops gets an extra copy for the
/// output label.
pub fn insert_dupl(g: &Graph) -> Result<Graph> {
    let needs = |v: NodeId| {
        let c = g.consumers(v).len();
        match g.label(v).unwrap() {
            Label::Output(_) => c > 0,
            _ => c > 1,
        }
    };
    if !g.value_ids().any(needs) {
        return Ok(g.clone());
    }
    let mut b = GraphBuilder::new();
    for k in g.nodes() {
        b.add_node(k.clone());
    }
    // replacement source for each (value, consumer ordinal)
    let mut redirect: BTreeMap<(NodeId, usize), NodeId> = BTreeMap::new();
    let mut extra_links: Vec<(NodeId, NodeId)> = Vec::new();
    for v in g.value_ids().filter(|&v| needs(v)) {
        let consumers = g.consumers(v).len();
        match g.label(v).unwrap().clone() {
            Label::Constant(c) => {
                for k in 1..consumers {
                    let copy = b.constant(c.clone());
                    redirect.insert((v, k), copy);
                }
            }
            label => {
                let is_output = matches!(label, Label::Output(_));
                let n = consumers + usize::from(is_output);
                let dupl = b.op_node(PrimitiveKind::Dupl(n));
                extra_links.push((v, dupl));
                let copies: Vec<NodeId> = (0..n).map(|_| b.value(Label::Internal)).collect();
                for (k, &c) in copies.iter().enumerate() {
                    b.connect_out(dupl, k, c);
                    if k < consumers {
                        redirect.insert((v, k), c);
                    }
                }
                if let Label::Output(name) = label {
                    b.set_label(copies[n - 1], Label::Output(name));
                    b.set_label(v, Label::Internal);
                }
            }
        }
    }
    let mut seen: BTreeMap<NodeId, usize> = BTreeMap::new();
    for e in g.edges() {
        if g.is_op(e.src.node) {
            let m = g.inputs_of(e.src.node).len();
            b.connect_out(e.src.node, e.src.slot - m - 1, e.dst.node);
        } else {
            let v = e.src.node;
            let k = seen.entry(v).or_insert(0);
            let src = match redirect.get(&(v, *k)) {
                Some(&r) => r,
                None if needs(v) && !matches!(g.label(v), Some(Label::Constant(_))) => unreachable!(),
                None => v,
            };
            *k += 1;
            b.connect_in(src, e.dst.node, e.dst.slot - 1);
        }
    }
    for (v, dupl) in extra_links {
        b.connect_in(v, dupl, 0);
    }
    b.finish()
}

/// Dupl insertion, propagation and constant folding.
pub fn normalize(g: &Graph) -> Result<(Graph, Annotations)> {
    let g = insert_dupl(g)?;
    let ann = propagate(&g)?;
    let folded = fold_constants(&g, &ann)?;
    if folded == g {
        return Ok((g, ann));
    }
    let g = insert_dupl(&folded)?;
    let ann = propagate(&g)?;
    Ok((g, ann))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaPort {
    /// θ port index within the inverse op (0-based).
    pub port: usize,
    /// Parameter input node feeding the port.
    pub param: NodeId,
    pub space: ParamSpace,
    pub shape: Shape,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEntry {
    pub inv_op: NodeId,
    pub start: usize,
    pub end: usize,
    pub origin: String,
    pub forward_op: NodeId,
    pub ports: Vec<ThetaPort>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ThetaLayout {
    pub total: usize,
    pub entries: Vec<ThetaEntry>,
}

/// Follow a θ port back through contractions to its parameter node.
pub fn param_source(g: &Graph, mut v: NodeId) -> Option<NodeId> {
    loop {
        match g.label(v)? {
            Label::Input { name, .. } if name.starts_with(THETA_PREFIX) => return Some(v),
            _ => {}
        }
        let (op, _) = g.producer(v)?;
        match g.op_kind(op)? {
            OpKind::Contract(_) => v = g.inputs_of(op)[0],
            _ => return None,
        }
    }
}

impl ThetaLayout {
    /// Slots follow the inverse graph's topological order, then port order.
    pub fn compute(g: &Graph) -> ThetaLayout {
        let mut entries = Vec::new();
        let mut next = 0;
        for &op in g.topo_order() {
            let Some(OpKind::Inverse(inv)) = g.op_kind(op) else { continue };
            let first = inv.n_y() + inv.n_const();
            let spaces = inv.param_spaces();
            let start = next;
            let mut ports = Vec::new();
            for (k, space) in spaces.into_iter().enumerate() {
                let src = g.inputs_of(op)[first + k];
                let Some(param) = param_source(g, src) else { continue };
                let shape = match g.label(param) {
                    Some(Label::Input { shape, .. }) => shape.clone(),
                    _ => Vec::new(),
                };
                let len = shape.iter().product::<usize>();
                ports.push(ThetaPort {
                    port: k,
                    param,
                    space,
                    shape,
                    start: next,
                    len,
                });
                next += len;
            }
            entries.push(ThetaEntry {
                inv_op: op,
                start,
                end: next,
                origin: inv.kind.to_string(),
                forward_op: op,
                ports,
            });
        }
        ThetaLayout { total: next, entries }
    }

    pub fn ports(&self) -> impl Iterator<Item = &ThetaPort> {
        self.entries.iter().flat_map(|e| e.ports.iter())
    }

    /// Space of every flat slot.
    pub fn slot_spaces(&self) -> Vec<ParamSpace> {
        let mut out = Vec::with_capacity(self.total);
        for p in self.ports() {
            out.extend(std::iter::repeat_n(p.space.clone(), p.len));
        }
        out
    }

    /// Values bound to each parameter node for a flat θ.
    pub fn unpack(&self, theta: &[f64]) -> Result<BTreeMap<NodeId, Value>> {
        if theta.len() != self.total {
            return Err(Error::ThetaLength {
                expected: self.total,
                got: theta.len(),
            });
        }
        Ok(self
            .ports()
            .map(|p| (p.param, Value::from_elements(&p.shape, theta[p.start..p.start + p.len].to_vec())))
            .collect())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("layout serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseProgram {
    /// Normalized forward graph the inverse was built from.
    pub forward: Graph,
    pub graph: Graph,
    pub layout: ThetaLayout,
    /// Forward port to inverse port.
    pub port_map: Vec<(PortRef, PortRef)>,
    pub totalized: bool,
}

fn theta_name(op: NodeId, k: usize) -> String {
    format!("{THETA_PREFIX}{}:{k}", op.0)
}

/// Build the parametric inverse of a normalized graph (see [`normalize`]).
pub fn invert(g: &Graph, ann: &Annotations) -> Result<InverseProgram> {
    for v in g.value_ids() {
        let c = g.consumers(v).len();
        let ok = match g.label(v).unwrap() {
            Label::Output(name) => {
                if name.starts_with(THETA_PREFIX) {
                    return Err(Error::InvalidConfig(format!("output name {name:?} is reserved")));
                }
                c == 0
            }
            _ => c <= 1,
        };
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "value node {v} is reused; apply dupl insertion first"
            )));
        }
    }
    let mut b = GraphBuilder::new();
    for id in (0..g.len()).map(NodeId) {
        let kind = match g.node(id) {
            NodeKind::Value(label) => NodeKind::Value(match label {
                Label::Input { name, .. } => Label::Output(name.clone()),
                Label::Output(name) => Label::Input {
                    name: name.clone(),
                    shape: known_shape(ann, id)?,
                },
                other => other.clone(),
            }),
            NodeKind::Op(OpKind::Prim(k)) => {
                let ins = g.inputs_of(id);
                let consts: Vec<Option<Value>> = ins
                    .iter()
                    .map(|v| match g.label(*v) {
                        Some(Label::Constant(c)) => Some(c.clone()),
                        _ => None,
                    })
                    .collect();
                if consts.iter().all(Option::is_some) {
                    return Err(Error::UnsupportedKind(format!(
                        "op {id} ({k}) has only constant inputs; fold constants first"
                    )));
                }
                let shapes: Vec<Shape> = ins.iter().map(|v| ann[v].shape.clone().unwrap_or_default()).collect();
                NodeKind::Op(OpKind::Inverse(InverseOp::for_constants(k, &consts, &shapes)?))
            }
            NodeKind::Op(other) => {
                return Err(Error::UnsupportedKind(format!("cannot invert {other}")));
            }
        };
        b.add_node(kind);
    }
    let mut port_map = Vec::new();
    for op in g.op_ids() {
        let Some(OpKind::Inverse(inv)) = b.op_kind(op).cloned() else { unreachable!() };
        let (fwd_in, fwd_out) = (g.inputs_of(op).to_vec(), g.outputs_of(op).to_vec());
        let m = fwd_in.len();
        let mask = inv.const_mask();
        let n_y = fwd_out.len();
        let n_theta = inv.n_theta();
        let inv_in = n_y + inv.n_const() + n_theta;
        for (j, &y) in fwd_out.iter().enumerate() {
            b.connect_in(y, op, j);
            port_map.push((PortRef::new(op, m + j + 1), PortRef::new(op, j + 1)));
        }
        let mut ci = 0;
        for (i, &x) in fwd_in.iter().enumerate() {
            if mask[i] {
                b.connect_in(x, op, n_y + ci);
                port_map.push((PortRef::new(op, i + 1), PortRef::new(op, n_y + ci + 1)));
                ci += 1;
            }
        }
        let y_shape = ann[&fwd_out[0]].shape.clone().unwrap_or_default();
        let consts: Vec<Value> = fwd_in
            .iter()
            .filter_map(|v| match g.label(*v) {
                Some(Label::Constant(c)) => Some(c.clone()),
                _ => None,
            })
            .collect();
        let shapes = inv.param_shapes(&y_shape, &consts);
        for (k, shape) in shapes.into_iter().enumerate() {
            let p = b.value(Label::Input {
                name: theta_name(op, k),
                shape,
            });
            b.connect_in(p, op, n_y + ci + k);
        }
        let mut oi = 0;
        for (i, &x) in fwd_in.iter().enumerate() {
            if !mask[i] {
                b.connect_out(op, oi, x);
                port_map.push((PortRef::new(op, i + 1), PortRef::new(op, inv_in + oi + 1)));
                oi += 1;
            }
        }
    }
    let graph = b.finish()?;
    let layout = ThetaLayout::compute(&graph);
    Ok(InverseProgram {
        forward: g.clone(),
        graph,
        layout,
        port_map,
        totalized: false,
    })
}

fn known_shape(ann: &Annotations, id: NodeId) -> Result<Shape> {
    ann.get(&id)
        .and_then(|a| a.shape.clone())
        .ok_or_else(|| Error::ShapeMismatch(format!("shape of value node {id} is unknown")))
}

/// Normalize and invert in one step.
pub fn invert_graph(g: &Graph) -> Result<InverseProgram> {
    let (g, ann) = normalize(g)?;
    invert(&g, &ann)
}

/// Run the forward graph and collect, for every op, the parameters under
/// which its inverse reproduces the recorded inputs. Returns the named
/// outputs and the packed θ.
pub fn extract_theta_program(
    ip: &InverseProgram,
    inputs: &BTreeMap<String, Value>,
) -> Result<(BTreeMap<String, Value>, ThetaVec)> {
    let (outputs, trace) = run_forward(&ip.forward, inputs)?;
    extract_from_trace(ip, &trace).map(|theta| (outputs, theta))
}

fn extract_from_trace(ip: &InverseProgram, trace: &Trace) -> Result<ThetaVec> {
    let g = &ip.forward;
    let value = |v: &NodeId| -> Result<Value> {
        match &trace[v.0] {
            Some(Value::Undefined) | None => Err(Error::ForwardUndefined(*v)),
            Some(x) => Ok(x.clone()),
        }
    };
    let mut theta = vec![0.0; ip.layout.total];
    for entry in &ip.layout.entries {
        if entry.ports.is_empty() {
            continue;
        }
        let Some(OpKind::Inverse(inv)) = ip.graph.op_kind(entry.inv_op) else {
            unreachable!("layout entries point at inverse ops")
        };
        let op = entry.forward_op;
        let x: Vec<Value> = g.inputs_of(op).iter().map(value).collect::<Result<_>>()?;
        let y: Vec<Value> = g.outputs_of(op).iter().map(value).collect::<Result<_>>()?;
        let t = inv.extract(&x, &y)?;
        for p in &entry.ports {
            let elems = t[p.port].elements().unwrap_or_default();
            theta[p.start..p.start + p.len].copy_from_slice(&elems[..p.len]);
        }
    }
    Ok(theta)
}

const FORMAT: &str = "parinv-inverse/1";

impl InverseProgram {
    pub fn to_json(&self) -> String {
        let port_map: Vec<serde_json::Value> = self
            .port_map
            .iter()
            .map(|(f, i)| json!([f.node.0, f.slot, i.node.0, i.slot]))
            .collect();
        let doc = json!({
            "format": FORMAT,
            "totalized": self.totalized,
            "forward": crate::json::graph_to_value(&self.forward),
            "graph": crate::json::graph_to_value(&self.graph),
            "layout": self.layout.to_json(),
            "port_map": port_map,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("program serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<InverseProgram> {
        let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            field: String::new(),
            message: e.to_string(),
        })?;
        let field_err = |field: &str, message: &str| Error::Parse {
            line: 0,
            field: field.into(),
            message: message.into(),
        };
        if doc.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
            return Err(field_err("format", "not an inverse program file"));
        }
        let totalized = doc
            .get("totalized")
            .and_then(|v| v.as_bool())
            .ok_or_else(|| field_err("totalized", "expected a boolean"))?;
        let forward = crate::json::graph_from_value(doc.get("forward").unwrap_or(&json!(null)), text)?;
        let graph = crate::json::graph_from_value(doc.get("graph").unwrap_or(&json!(null)), text)?;
        let port_map = doc
            .get("port_map")
            .and_then(|p| p.as_array())
            .ok_or_else(|| field_err("port_map", "expected an array"))?
            .iter()
            .map(|q| {
                let q: Vec<usize> = q
                    .as_array()
                    .filter(|a| a.len() == 4)
                    .and_then(|a| a.iter().map(|v| v.as_u64().map(|v| v as usize)).collect())
                    .ok_or_else(|| field_err("port_map", "expected [node, slot, node, slot]"))?;
                Ok((PortRef::new(NodeId(q[0]), q[1]), PortRef::new(NodeId(q[2]), q[3])))
            })
            .collect::<Result<Vec<_>>>()?;
        let layout = ThetaLayout::compute(&graph);
        Ok(InverseProgram {
            forward,
            graph,
            layout,
            port_map,
            totalized,
        })
    }

    /// Names of the inverse's data inputs (the forward outputs).
    pub fn y_names(&self) -> Vec<String> {
        self.forward.outputs().into_iter().map(|(_, n)| n.to_string()).collect()
    }

    /// Names of the recovered values (the forward inputs).
    pub fn x_names(&self) -> Vec<String> {
        self.forward.inputs().into_iter().map(|(_, n)| n.to_string()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::run_inverse;
    use crate::primitives::PrimitiveKind::*;

    fn x4() -> Graph {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let s = b.op1(Sqr, &[x]);
        let y = b.op1(Sqr, &[s]);
        b.output(y, "y");
        b.finish().unwrap()
    }

    fn bind(pairs: &[(&str, f64)]) -> BTreeMap<String, Value> {
        pairs.iter().map(|(k, v)| (k.to_string(), Value::Real(*v))).collect()
    }

    #[test]
    fn dupl_for_reuse() {
        // x*y + x
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let y = b.input("y");
        let p = b.op1(Mul, &[x, y]);
        let s = b.op1(Add, &[p, x]);
        b.output(s, "f");
        let g = b.finish().unwrap();
        let d = insert_dupl(&g).unwrap();
        let dupls: Vec<NodeId> = d
            .op_ids()
            .filter(|&o| matches!(d.op_kind(o), Some(OpKind::Prim(Dupl(2)))))
            .collect();
        assert_eq!(dupls.len(), 1);
        assert_eq!(d.inputs_of(dupls[0]), &[x]);
        assert_eq!(insert_dupl(&x4()).unwrap(), x4());

        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let a = b.op1(Neg, &[x]);
        let c = b.op1(Neg, &[x]);
        let e = b.op1(Cos, &[x]);
        let s = b.op1(Add, &[a, c]);
        let t = b.op1(Add, &[s, e]);
        b.output(t, "t");
        let g = b.finish().unwrap();
        let d = insert_dupl(&g).unwrap();
        assert_eq!(d.value_count(), g.value_count() + 3);
        assert!(d.op_ids().any(|o| matches!(d.op_kind(o), Some(OpKind::Prim(Dupl(3))))));
    }

    #[test]
    fn output_with_consumers_gets_a_copy() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let a = b.op1(Neg, &[x]);
        let c = b.op1(Cos, &[a]);
        b.output(a, "a");
        b.output(c, "c");
        let g = b.finish().unwrap();
        let d = insert_dupl(&g).unwrap();
        let a_new = d.find_output("a").unwrap();
        assert_ne!(a_new, a);
        let out = run_forward(&d, &bind(&[("x", 1.0)])).unwrap().0;
        assert_eq!(out["a"], Value::Real(-1.0));
    }

    #[test]
    fn x4_inverse() {
        let ip = invert_graph(&x4()).unwrap();
        assert_eq!(ip.layout.total, 2);
        assert!(ip.layout.slot_spaces().iter().all(|s| *s == ParamSpace::sign()));
        assert_eq!(ip.graph.outputs(), vec![(NodeId(0), "x")]);
        let r = run_inverse(&ip, &bind(&[("y", 16.0)]), &[1.0, -1.0]).unwrap();
        assert_eq!(r.outputs["x"], Value::Real(-2.0));

        let (y, theta) = extract_theta_program(&ip, &bind(&[("x", -2.0)])).unwrap();
        assert_eq!(y["y"], Value::Real(16.0));
        assert_eq!(theta, vec![1.0, -1.0]);
    }

    #[test]
    fn constant_add_has_no_parameters() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let c = b.constant(3.0);
        let y = b.op1(Add, &[x, c]);
        b.output(y, "y");
        let ip = invert_graph(&b.finish().unwrap()).unwrap();
        assert_eq!(ip.layout.total, 0);
        let r = run_inverse(&ip, &bind(&[("y", 10.0)]), &[]).unwrap();
        assert_eq!(r.outputs["x"], Value::Real(7.0));
    }

    #[test]
    fn labels_swap_and_counts_are_kept() {
        let g = x4();
        let ip = invert_graph(&g).unwrap();
        assert_eq!(ip.graph.op_count(), g.op_count());
        assert_eq!(ip.graph.value_count(), g.value_count() + ip.layout.total);
        assert_eq!(ip.graph.inputs()[0].1, "y");
        assert_eq!(ip.port_map.len(), 4);
    }

    #[test]
    fn program_round_trips_through_json() {
        let ip = invert_graph(&x4()).unwrap();
        assert_eq!(InverseProgram::from_json(&ip.to_json()).unwrap(), ip);
    }
}
