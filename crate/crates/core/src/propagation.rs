//! Forward propagation of constants, shapes and value types.

use std::collections::BTreeMap;

use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBuilder, Label, NodeId, NodeKind, OpKind};
use crate::primitives::{forward_eval, shape_operand, PrimitiveKind};
use crate::value::{Shape, Value, ValueType};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Annotation {
    /// `Some` when the value is the same for every input binding.
    pub constant: Option<Value>,
    pub shape: Option<Shape>,
    pub ty: Option<ValueType>,
}

impl Annotation {
    fn known(v: Value) -> Annotation {
        Annotation {
            shape: Some(v.shape()),
            ty: v.value_type(),
            constant: Some(v),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }
}

/// Annotations for every value node.
pub type Annotations = BTreeMap<NodeId, Annotation>;

pub fn propagate(g: &Graph) -> Result<Annotations> {
    propagate_with(g, &BTreeMap::new())
}

/// Like [`propagate`], treating the named inputs in `pins` as constants.
pub fn propagate_with(g: &Graph, pins: &BTreeMap<String, Value>) -> Result<Annotations> {
    let mut ann = Annotations::new();
    for id in g.value_ids() {
        let a = match g.label(id).unwrap() {
            Label::Constant(v) => Annotation::known(v.clone()),
            Label::Input { name, shape } => match pins.get(name) {
                Some(v) => Annotation::known(v.clone()),
                None => Annotation {
                    constant: None,
                    shape: Some(shape.clone()),
                    ty: Some(if shape.is_empty() { ValueType::Real } else { ValueType::Tensor }),
                },
            },
            _ => Annotation::default(),
        };
        ann.insert(id, a);
    }
    for &op in g.topo_order() {
        let ins: Vec<&Annotation> = g.inputs_of(op).iter().map(|v| &ann[v]).collect();
        let outs = annotate_op(g.op_kind(op).unwrap(), &ins)?;
        for (&v, a) in g.outputs_of(op).iter().zip(outs) {
            ann.insert(v, a);
        }
    }
    Ok(ann)
}

fn mismatch(kind: &OpKind, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch(format!("{kind}: operands of shape {a:?} and {b:?}"))
}

fn annotate_op(kind: &OpKind, ins: &[&Annotation]) -> Result<Vec<Annotation>> {
    let n_out = kind.arity().1;
    if let OpKind::Prim(k) = kind {
        if let Some(vals) = ins.iter().map(|a| a.constant.clone()).collect::<Option<Vec<_>>>() {
            return Ok(forward_eval(k, &vals)?.into_iter().map(Annotation::known).collect());
        }
    }
    let unknown = |shape: Option<Shape>, ty: Option<ValueType>| vec![Annotation { constant: None, shape, ty }; n_out];
    let prim = match kind {
        OpKind::Prim(k) => k,
        OpKind::Contract(_) => return Ok(unknown(ins[0].shape.clone(), ins[0].ty)),
        OpKind::Inverse(_) => return Ok(unknown(None, None)),
    };
    use PrimitiveKind::*;
    let const_shape = |a: &Annotation| a.constant.as_ref().and_then(shape_operand);
    match prim {
        GatherNd => {
            let n = ins[1].constant.as_ref().map(|c| c.numel());
            Ok(unknown(n.map(|n| vec![n]), Some(ValueType::Tensor)))
        }
        Scatter => Ok(unknown(const_shape(ins[2]), Some(ValueType::Tensor))),
        Reshape => {
            let target = const_shape(ins[1]);
            if let (Some(t), Some(s)) = (&target, &ins[0].shape) {
                if t.iter().product::<usize>() != s.iter().product::<usize>() {
                    return Err(Error::ShapeMismatch(format!("reshape of {s:?} to {t:?}")));
                }
            }
            Ok(unknown(target, Some(ValueType::Tensor)))
        }
        _ => {
            let mut shape: Option<Shape> = Some(Vec::new());
            for a in ins {
                match (&shape, &a.shape) {
                    (_, None) => shape = None,
                    (Some(prev), Some(s)) if !s.is_empty() => {
                        if prev.is_empty() {
                            shape = Some(s.clone());
                        } else if prev != s {
                            return Err(mismatch(kind, prev, s));
                        }
                    }
                    _ => {}
                }
            }
            // keep checking agreement among known shapes even when one is unknown
            let known: Vec<&Shape> = ins.iter().filter_map(|a| a.shape.as_ref()).filter(|s| !s.is_empty()).collect();
            if let Some(w) = known.windows(2).find(|w| w[0] != w[1]) {
                return Err(mismatch(kind, w[0], w[1]));
            }
            let ty = if prim.is_boolean() || prim.is_comparison() {
                Some(ValueType::Bool)
            } else if matches!(prim, Dupl(_)) {
                ins[0].ty
            } else if matches!(prim, Select) {
                ins[0].ty.or(ins[1].ty)
            } else {
                shape.as_ref().map(|s| if s.is_empty() { ValueType::Real } else { ValueType::Tensor })
            };
            Ok(unknown(shape, ty))
        }
    }
}

/// JSON dump used by the command line tool.
pub fn annotations_to_json(g: &Graph, ann: &Annotations) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = ann
        .iter()
        .map(|(id, a)| {
            json!({
                "id": id.0,
                "kind": crate::json::node_kind_string(g.node(*id)),
                "constant": a.constant.as_ref().map(Value::to_json),
                "shape": a.shape,
                "type": a.ty,
            })
        })
        .collect();
    json!({ "annotations": rows })
}

/// Replace every op whose inputs are all known constants by constant value
/// nodes. Errors if a graph output would become constant.
pub fn fold_constants(g: &Graph, ann: &Annotations) -> Result<Graph> {
    let dropped: Vec<bool> = (0..g.len())
        .map(|i| {
            let id = NodeId(i);
            match g.node(id) {
                NodeKind::Op(_) => g.outputs_of(id).iter().all(|v| ann[v].is_constant()),
                NodeKind::Value(_) => false,
            }
        })
        .collect();
    let promote_inputs = ann
        .iter()
        .any(|(id, a)| a.is_constant() && matches!(g.label(*id), Some(Label::Input { .. })));
    if !dropped.iter().any(|&d| d) && !promote_inputs {
        return Ok(g.clone());
    }
    for (v, name) in g.outputs() {
        if ann[&v].is_constant() {
            return Err(Error::UnsupportedKind(format!(
                "output {name:?} does not depend on any input"
            )));
        }
    }
    let live_consumers = |v: NodeId| g.consumers(v).iter().any(|(op, _)| !dropped[op.0]);
    let mut b = GraphBuilder::new();
    let mut map: Vec<Option<NodeId>> = vec![None; g.len()];
    for i in 0..g.len() {
        let id = NodeId(i);
        match g.node(id) {
            NodeKind::Op(k) if !dropped[i] => map[i] = Some(b.op_node(k.clone())),
            NodeKind::Op(_) => {}
            NodeKind::Value(label) => {
                let a = &ann[&id];
                if let Some(c) = &a.constant {
                    if live_consumers(id) {
                        map[i] = Some(b.constant(c.clone()));
                    }
                } else {
                    map[i] = Some(b.value(label.clone()));
                }
            }
        }
    }
    for e in g.edges() {
        let (s, d) = (e.src.node, e.dst.node);
        if g.is_op(s) {
            if let (Some(op), Some(v)) = (map[s.0], map[d.0]) {
                if !ann[&d].is_constant() {
                    let m = g.inputs_of(s).len();
                    b.connect_out(op, e.src.slot - m - 1, v);
                }
            }
        } else if let (Some(v), Some(op)) = (map[s.0], map[d.0]) {
            b.connect_in(v, op, e.dst.slot - 1);
        }
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::PrimitiveKind::*;

    #[test]
    fn constant_add_is_known() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let c2 = b.constant(2.0);
        let c3 = b.constant(3.0);
        let k = b.op1(Add, &[c2, c3]);
        let z = b.op1(Add, &[x, k]);
        b.output(z, "z");
        let g = b.finish().unwrap();
        let ann = propagate(&g).unwrap();
        assert_eq!(ann[&k].constant, Some(Value::Real(5.0)));
        assert_eq!(ann[&z].constant, None);
        assert_eq!(ann[&z].shape, Some(vec![]));

        let folded = fold_constants(&g, &ann).unwrap();
        assert_eq!(folded.op_count(), 1);
        let k_new = folded.inputs_of(folded.topo_order()[0])[1];
        assert_eq!(folded.label(k_new), Some(&Label::Constant(Value::Real(5.0))));
    }

    #[test]
    fn shapes_follow_inputs() {
        let mut b = GraphBuilder::new();
        let t = b.input_shaped("t", vec![5]);
        let idx = b.constant(Value::vector(vec![0.0, 2.0]));
        let g1 = b.op1(GatherNd, &[t, idx]);
        let c = b.constant(3.0);
        let s = b.op1(Add, &[g1, c]);
        b.output(s, "s");
        let g = b.finish().unwrap();
        let ann = propagate(&g).unwrap();
        assert_eq!(ann[&g1].shape, Some(vec![2]));
        assert_eq!(ann[&s].shape, Some(vec![2]));
    }

    #[test]
    fn inconsistent_shapes_rejected() {
        let mut b = GraphBuilder::new();
        let a = b.input_shaped("a", vec![2]);
        let c = b.input_shaped("c", vec![3]);
        let s = b.op1(Add, &[a, c]);
        b.output(s, "s");
        let g = b.finish().unwrap();
        assert!(matches!(propagate(&g), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn constant_output_cannot_fold() {
        let mut b = GraphBuilder::new();
        let c = b.constant(1.0);
        let z = b.op1(Neg, &[c]);
        b.output(z, "z");
        let g = b.finish().unwrap();
        let ann = propagate(&g).unwrap();
        assert!(fold_constants(&g, &ann).is_err());
    }

    #[test]
    fn pinned_inputs_become_constants() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let p = b.input("p");
        let z = b.op1(Mul, &[x, p]);
        b.output(z, "z");
        let g = b.finish().unwrap();
        let pins = BTreeMap::from([("p".to_string(), Value::Real(2.0))]);
        let ann = propagate_with(&g, &pins).unwrap();
        let folded = fold_constants(&g, &ann).unwrap();
        assert_eq!(folded.inputs().len(), 1);
        assert_eq!(folded.label(NodeId(1)), Some(&Label::Constant(Value::Real(2.0))));
    }
}
