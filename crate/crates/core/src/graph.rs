//! Bipartite op/value multigraph.
//!
//! Ports are numbered from 1 per node, incoming ports first. An op with `m`
//! inputs and `n` outputs owns slots `1..=m` (inputs) and `m+1..=m+n`
//! (outputs). A value node has slot 1 for its producer, if any, followed by
//! one slot per consumer edge.

use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::primitives::{InverseOp, PrimitiveKind};
use crate::space::ParamSpace;
use crate::value::{Shape, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub node: NodeId,
    pub slot: usize,
}

impl PortRef {
    pub fn new(node: NodeId, slot: usize) -> PortRef {
        PortRef { node, slot }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: PortRef,
    pub dst: PortRef,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    /// Named input; `shape` is the declared shape (empty for scalars).
    Input { name: String, shape: Shape },
    Constant(Value),
    Output(String),
    Internal,
}

impl Label {
    pub fn input(name: impl Into<String>) -> Label {
        Label::Input {
            name: name.into(),
            shape: Vec::new(),
        }
    }

    pub fn is_source(&self) -> bool {
        matches!(self, Label::Input { .. } | Label::Constant(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Prim(PrimitiveKind),
    Inverse(InverseOp),
    /// Maps its input into the given set; identity on members.
    Contract(ParamSpace),
}

impl OpKind {
    pub fn arity(&self) -> (usize, usize) {
        match self {
            OpKind::Prim(k) => k.arity(),
            OpKind::Inverse(op) => op.arity(),
            OpKind::Contract(_) => (1, 1),
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpKind::Prim(k) => write!(f, "{k}"),
            OpKind::Inverse(op) => write!(f, "{op}"),
            OpKind::Contract(s) => write!(f, "contract:{s}"),
        }
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.starts_with("inv:") {
            Ok(OpKind::Inverse(s.parse()?))
        } else if let Some(space) = s.strip_prefix("contract:") {
            Ok(OpKind::Contract(space.parse()?))
        } else {
            Ok(OpKind::Prim(s.parse()?))
        }
    }
}

impl From<PrimitiveKind> for OpKind {
    fn from(k: PrimitiveKind) -> Self {
        OpKind::Prim(k)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Op(OpKind),
    Value(Label),
}

/// A validated graph. Immutable; passes build new graphs.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<NodeKind>,
    edges: Vec<Edge>,
    op_inputs: Vec<Vec<NodeId>>,
    op_outputs: Vec<Vec<NodeId>>,
    producer: Vec<Option<(NodeId, usize)>>,
    consumers: Vec<Vec<(NodeId, usize)>>,
    topo: Vec<NodeId>,
}

impl PartialEq for Graph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Graph {
    /// Validate nodes and edges. Node ids are the positions in `nodes`.
    pub fn build(nodes: Vec<NodeKind>, edges: Vec<Edge>) -> Result<Graph> {
        let n = nodes.len();
        let mut op_inputs: Vec<Vec<Option<NodeId>>> = vec![Vec::new(); n];
        let mut op_outputs: Vec<Vec<Option<NodeId>>> = vec![Vec::new(); n];
        for (i, node) in nodes.iter().enumerate() {
            if let NodeKind::Op(k) = node {
                let (m, o) = k.arity();
                op_inputs[i] = vec![None; m];
                op_outputs[i] = vec![None; o];
            }
        }
        let mut producer: Vec<Option<(NodeId, usize)>> = vec![None; n];
        let mut consumers: Vec<Vec<(NodeId, usize)>> = vec![Vec::new(); n];
        let mut value_src_slots: Vec<Vec<usize>> = vec![Vec::new(); n];

        for e in &edges {
            for p in [e.src, e.dst] {
                if p.node.0 >= n {
                    return Err(Error::UnknownNode(p.node.0 as i64));
                }
            }
            match (&nodes[e.src.node.0], &nodes[e.dst.node.0]) {
                (NodeKind::Op(_), NodeKind::Value(_)) => {
                    let op = e.src.node;
                    let m = op_inputs[op.0].len();
                    let out = e.src.slot.checked_sub(m + 1).filter(|&j| j < op_outputs[op.0].len());
                    let j = out.ok_or(Error::BadPort { node: op, slot: e.src.slot })?;
                    if op_outputs[op.0][j].is_some() {
                        return Err(Error::BadPort { node: op, slot: e.src.slot });
                    }
                    let v = e.dst.node;
                    if producer[v.0].is_some() {
                        return Err(Error::ValueFanInViolation(v));
                    }
                    if e.dst.slot != 1 {
                        return Err(Error::BadPort { node: v, slot: e.dst.slot });
                    }
                    op_outputs[op.0][j] = Some(v);
                    producer[v.0] = Some((op, j));
                }
                (NodeKind::Value(_), NodeKind::Op(_)) => {
                    let op = e.dst.node;
                    let i = e
                        .dst
                        .slot
                        .checked_sub(1)
                        .filter(|&i| i < op_inputs[op.0].len())
                        .ok_or(Error::BadPort { node: op, slot: e.dst.slot })?;
                    if op_inputs[op.0][i].is_some() {
                        return Err(Error::BadPort { node: op, slot: e.dst.slot });
                    }
                    op_inputs[op.0][i] = Some(e.src.node);
                    consumers[e.src.node.0].push((op, i));
                    value_src_slots[e.src.node.0].push(e.src.slot);
                }
                _ => {
                    return Err(Error::NonBipartiteEdge {
                        src: e.src.node,
                        dst: e.dst.node,
                    })
                }
            }
        }

        let mut input_names = BTreeSet::new();
        let mut output_names = BTreeSet::new();
        for (i, node) in nodes.iter().enumerate() {
            let id = NodeId(i);
            match node {
                NodeKind::Op(_) => {
                    let m = op_inputs[i].len();
                    if let Some(k) = op_inputs[i].iter().position(Option::is_none) {
                        return Err(Error::DanglingOpPort { node: id, slot: k + 1 });
                    }
                    if let Some(k) = op_outputs[i].iter().position(Option::is_none) {
                        return Err(Error::DanglingOpPort {
                            node: id,
                            slot: m + k + 1,
                        });
                    }
                }
                NodeKind::Value(label) => {
                    let has_producer = producer[i].is_some();
                    match (label.is_source(), has_producer) {
                        (true, true) => return Err(Error::LabeledSourceHasProducer(id)),
                        (false, false) => return Err(Error::UnlabeledSourceValue(id)),
                        _ => {}
                    }
                    if consumers[i].is_empty() && !matches!(label, Label::Output(_)) {
                        return Err(Error::UnlabeledSinkValue(id));
                    }
                    let first = if has_producer { 2 } else { 1 };
                    let mut slots = value_src_slots[i].clone();
                    slots.sort_unstable();
                    if let Some((k, &s)) = slots.iter().enumerate().find(|(k, &s)| s != first + k) {
                        let _ = k;
                        return Err(Error::BadPort { node: id, slot: s });
                    }
                    match label {
                        Label::Input { name, .. } if !input_names.insert(name.clone()) => {
                            return Err(Error::DuplicateName {
                                kind: "input",
                                name: name.clone(),
                            })
                        }
                        Label::Output(name) if !output_names.insert(name.clone()) => {
                            return Err(Error::DuplicateName {
                                kind: "output",
                                name: name.clone(),
                            })
                        }
                        _ => {}
                    }
                }
            }
        }

        let op_inputs: Vec<Vec<NodeId>> = op_inputs.into_iter().map(|v| v.into_iter().flatten().collect()).collect();
        let op_outputs: Vec<Vec<NodeId>> = op_outputs.into_iter().map(|v| v.into_iter().flatten().collect()).collect();
        let topo = kahn(&nodes, &op_inputs, &op_outputs, &producer, &consumers)?;
        Ok(Graph {
            nodes,
            edges,
            op_inputs,
            op_outputs,
            producer,
            consumers,
            topo,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeKind] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &NodeKind {
        &self.nodes[id.0]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn op_kind(&self, id: NodeId) -> Option<&OpKind> {
        match &self.nodes[id.0] {
            NodeKind::Op(k) => Some(k),
            NodeKind::Value(_) => None,
        }
    }

    pub fn label(&self, id: NodeId) -> Option<&Label> {
        match &self.nodes[id.0] {
            NodeKind::Value(l) => Some(l),
            NodeKind::Op(_) => None,
        }
    }

    pub fn is_op(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0], NodeKind::Op(_))
    }

    pub fn op_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId).filter(|&i| self.is_op(i))
    }

    pub fn value_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId).filter(|&i| !self.is_op(i))
    }

    /// Value nodes feeding an op, in input-slot order.
    pub fn inputs_of(&self, op: NodeId) -> &[NodeId] {
        &self.op_inputs[op.0]
    }

    /// Value nodes produced by an op, in output order.
    pub fn outputs_of(&self, op: NodeId) -> &[NodeId] {
        &self.op_outputs[op.0]
    }

    /// Producing op and its 0-based output index.
    pub fn producer(&self, value: NodeId) -> Option<(NodeId, usize)> {
        self.producer[value.0]
    }

    /// Consuming ops with 0-based input index, in edge order.
    pub fn consumers(&self, value: NodeId) -> &[(NodeId, usize)] {
        &self.consumers[value.0]
    }

    /// Named inputs in node order.
    pub fn inputs(&self) -> Vec<(NodeId, &str)> {
        self.value_ids()
            .filter_map(|id| match self.label(id) {
                Some(Label::Input { name, .. }) => Some((id, name.as_str())),
                _ => None,
            })
            .collect()
    }

    /// Named outputs in node order.
    pub fn outputs(&self) -> Vec<(NodeId, &str)> {
        self.value_ids()
            .filter_map(|id| match self.label(id) {
                Some(Label::Output(name)) => Some((id, name.as_str())),
                _ => None,
            })
            .collect()
    }

    pub fn find_input(&self, name: &str) -> Option<NodeId> {
        self.inputs().into_iter().find(|(_, n)| *n == name).map(|(id, _)| id)
    }

    pub fn find_output(&self, name: &str) -> Option<NodeId> {
        self.outputs().into_iter().find(|(_, n)| *n == name).map(|(id, _)| id)
    }

    /// Op nodes in dependency order, ties broken by ascending id.
    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    pub fn op_count(&self) -> usize {
        self.op_ids().count()
    }

    pub fn value_count(&self) -> usize {
        self.value_ids().count()
    }
}

fn kahn(
    nodes: &[NodeKind],
    op_inputs: &[Vec<NodeId>],
    op_outputs: &[Vec<NodeId>],
    producer: &[Option<(NodeId, usize)>],
    consumers: &[Vec<(NodeId, usize)>],
) -> Result<Vec<NodeId>> {
    let mut pending: Vec<usize> = vec![0; nodes.len()];
    let mut heap = BinaryHeap::new();
    let mut n_ops = 0;
    for (i, node) in nodes.iter().enumerate() {
        if let NodeKind::Op(_) = node {
            n_ops += 1;
            pending[i] = op_inputs[i].iter().filter(|v| producer[v.0].is_some()).count();
            if pending[i] == 0 {
                heap.push(Reverse(i));
            }
        }
    }
    let mut order = Vec::with_capacity(n_ops);
    while let Some(Reverse(i)) = heap.pop() {
        order.push(NodeId(i));
        for v in &op_outputs[i] {
            for &(c, _) in &consumers[v.0] {
                pending[c.0] -= 1;
                if pending[c.0] == 0 {
                    heap.push(Reverse(c.0));
                }
            }
        }
    }
    if order.len() < n_ops {
        let stuck = (0..nodes.len())
            .find(|&i| matches!(nodes[i], NodeKind::Op(_)) && pending[i] > 0)
            .unwrap();
        return Err(Error::CycleDetected(NodeId(stuck)));
    }
    Ok(order)
}

#[derive(Debug, Clone, Copy)]
enum Link {
    Out { op: NodeId, index: usize, value: NodeId },
    In { value: NodeId, op: NodeId, index: usize },
}

/// Incremental construction; slots are assigned on [`GraphBuilder::finish`].
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    nodes: Vec<NodeKind>,
    links: Vec<Link>,
}

impl GraphBuilder {
    pub fn new() -> GraphBuilder {
        GraphBuilder::default()
    }

    /// Start from an existing graph, keeping its ids and edge order.
    pub fn from_graph(g: &Graph) -> GraphBuilder {
        let links = g
            .edges
            .iter()
            .map(|e| {
                if g.is_op(e.src.node) {
                    let m = g.op_inputs[e.src.node.0].len();
                    Link::Out {
                        op: e.src.node,
                        index: e.src.slot - m - 1,
                        value: e.dst.node,
                    }
                } else {
                    Link::In {
                        value: e.src.node,
                        op: e.dst.node,
                        index: e.dst.slot - 1,
                    }
                }
            })
            .collect();
        GraphBuilder {
            nodes: g.nodes.clone(),
            links,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_node(&mut self, kind: NodeKind) -> NodeId {
        self.nodes.push(kind);
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&mut self, label: Label) -> NodeId {
        self.add_node(NodeKind::Value(label))
    }

    pub fn input(&mut self, name: &str) -> NodeId {
        self.value(Label::input(name))
    }

    pub fn input_shaped(&mut self, name: &str, shape: Shape) -> NodeId {
        self.value(Label::Input {
            name: name.into(),
            shape,
        })
    }

    pub fn constant(&mut self, v: impl Into<Value>) -> NodeId {
        self.value(Label::Constant(v.into()))
    }

    pub fn label(&self, id: NodeId) -> Option<&Label> {
        match &self.nodes[id.0] {
            NodeKind::Value(l) => Some(l),
            NodeKind::Op(_) => None,
        }
    }

    pub fn op_kind(&self, id: NodeId) -> Option<&OpKind> {
        match &self.nodes[id.0] {
            NodeKind::Op(k) => Some(k),
            NodeKind::Value(_) => None,
        }
    }

    pub fn set_label(&mut self, id: NodeId, label: Label) {
        self.nodes[id.0] = NodeKind::Value(label);
    }

    pub fn output(&mut self, id: NodeId, name: &str) {
        self.set_label(id, Label::Output(name.into()));
    }

    /// Add an op node only; wire it with [`connect_in`](Self::connect_in)
    /// and [`connect_out`](Self::connect_out).
    pub fn op_node(&mut self, kind: impl Into<OpKind>) -> NodeId {
        self.add_node(NodeKind::Op(kind.into()))
    }

    pub fn connect_in(&mut self, value: NodeId, op: NodeId, index: usize) {
        self.links.push(Link::In { value, op, index });
    }

    pub fn connect_out(&mut self, op: NodeId, index: usize, value: NodeId) {
        self.links.push(Link::Out { op, index, value });
    }

    /// Add an op fed by `inputs`, creating one internal value per output.
    pub fn op(&mut self, kind: impl Into<OpKind>, inputs: &[NodeId]) -> Vec<NodeId> {
        let kind = kind.into();
        let n_out = kind.arity().1;
        let op = self.op_node(kind);
        for (i, &v) in inputs.iter().enumerate() {
            self.connect_in(v, op, i);
        }
        (0..n_out)
            .map(|j| {
                let v = self.value(Label::Internal);
                self.connect_out(op, j, v);
                v
            })
            .collect()
    }

    /// Single-output [`op`](Self::op).
    pub fn op1(&mut self, kind: impl Into<OpKind>, inputs: &[NodeId]) -> NodeId {
        let outs = self.op(kind, inputs);
        assert_eq!(outs.len(), 1, "op1 on a multi-output op");
        outs[0]
    }

    /// Remove every link touching `value` as a consumer edge into `op`.
    pub fn disconnect_in(&mut self, op: NodeId, index: usize) {
        self.links
            .retain(|l| !matches!(l, Link::In { op: o, index: i, .. } if *o == op && *i == index));
    }

    pub fn finish(self) -> Result<Graph> {
        let n = self.nodes.len();
        let arities: Vec<usize> = self
            .nodes
            .iter()
            .map(|k| match k {
                NodeKind::Op(o) => o.arity().0,
                NodeKind::Value(_) => 0,
            })
            .collect();
        let mut has_producer = vec![false; n];
        for l in &self.links {
            if let Link::Out { value, .. } = l {
                if value.0 < n {
                    has_producer[value.0] = true;
                }
            }
        }
        let mut used = vec![0usize; n];
        let edges = self
            .links
            .iter()
            .map(|l| match *l {
                Link::Out { op, index, value } => Edge {
                    src: PortRef::new(op, arities.get(op.0).copied().unwrap_or(0) + index + 1),
                    dst: PortRef::new(value, 1),
                },
                Link::In { value, op, index } => {
                    let base = if has_producer.get(value.0).copied().unwrap_or(false) { 2 } else { 1 };
                    let slot = base + used.get(value.0).copied().unwrap_or(0);
                    if let Some(u) = used.get_mut(value.0) {
                        *u += 1;
                    }
                    Edge {
                        src: PortRef::new(value, slot),
                        dst: PortRef::new(op, index + 1),
                    }
                }
            })
            .collect();
        Graph::build(self.nodes, edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PrimitiveKind::*;

    fn add_graph() -> Graph {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let y = b.input("y");
        let z = b.op1(Add, &[x, y]);
        b.output(z, "z");
        b.finish().unwrap()
    }

    #[test]
    fn minimal_graph() {
        let g = add_graph();
        assert_eq!(g.op_count(), 1);
        assert_eq!(g.value_count(), 3);
        assert_eq!(
            g.edges()[0],
            Edge {
                src: PortRef::new(NodeId(0), 1),
                dst: PortRef::new(NodeId(2), 1)
            }
        );
        assert_eq!(g.edges()[2].src, PortRef::new(NodeId(2), 3));
    }

    fn nodes3() -> Vec<NodeKind> {
        vec![
            NodeKind::Value(Label::input("a")),
            NodeKind::Value(Label::Output("b".into())),
            NodeKind::Op(OpKind::Prim(Neg)),
        ]
    }

    #[test]
    fn value_to_value_edge_rejected() {
        let e = Edge {
            src: PortRef::new(NodeId(0), 1),
            dst: PortRef::new(NodeId(1), 1),
        };
        assert!(matches!(
            Graph::build(nodes3()[..2].to_vec(), vec![e]),
            Err(Error::NonBipartiteEdge { .. })
        ));
    }

    #[test]
    fn value_fan_in_rejected() {
        let mut nodes = nodes3();
        nodes.push(NodeKind::Op(OpKind::Prim(Neg)));
        let edges = vec![
            Edge { src: PortRef::new(NodeId(0), 1), dst: PortRef::new(NodeId(2), 1) },
            Edge { src: PortRef::new(NodeId(2), 2), dst: PortRef::new(NodeId(1), 1) },
            Edge { src: PortRef::new(NodeId(0), 2), dst: PortRef::new(NodeId(3), 1) },
            Edge { src: PortRef::new(NodeId(3), 2), dst: PortRef::new(NodeId(1), 1) },
        ];
        assert_eq!(Graph::build(nodes, edges), Err(Error::ValueFanInViolation(NodeId(1))));
    }

    #[test]
    fn structural_errors() {
        let mut b = GraphBuilder::new();
        let x = b.value(Label::Internal);
        let y = b.op1(Neg, &[x]);
        b.output(y, "y");
        assert_eq!(b.finish(), Err(Error::UnlabeledSourceValue(NodeId(0))));

        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let op = b.op_node(Add);
        b.connect_in(x, op, 0);
        let y = b.value(Label::Output("y".into()));
        b.connect_out(op, 0, y);
        assert_eq!(b.finish(), Err(Error::DanglingOpPort { node: NodeId(1), slot: 2 }));

        let mut b = GraphBuilder::new();
        let x = b.input("x");
        b.op1(Neg, &[x]);
        assert_eq!(b.finish(), Err(Error::UnlabeledSinkValue(NodeId(2))));
    }

    #[test]
    fn cycle_rejected() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let a = b.op_node(Add);
        let b_op = b.op_node(Neg);
        let v1 = b.value(Label::Internal);
        let v2 = b.value(Label::Output("o".into()));
        b.connect_in(x, a, 0);
        b.connect_in(v2, a, 1);
        b.connect_out(a, 0, v1);
        b.connect_in(v1, b_op, 0);
        b.connect_out(b_op, 0, v2);
        assert!(matches!(b.finish(), Err(Error::CycleDetected(_))));
    }

    #[test]
    fn topo_order_chain_and_diamond() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let a = b.op1(Neg, &[x]);
        let c = b.op1(Neg, &[a]);
        let d = b.op1(Neg, &[c]);
        b.output(d, "y");
        let g = b.finish().unwrap();
        assert_eq!(g.topo_order(), &[NodeId(1), NodeId(3), NodeId(5)]);

        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let s = b.op(Dupl(2), &[x]);
        let l = b.op1(Neg, &[s[0]]);
        let r = b.op1(Neg, &[s[1]]);
        let z = b.op1(Add, &[l, r]);
        b.output(z, "z");
        let g = b.finish().unwrap();
        let ops: Vec<NodeId> = g.op_ids().collect();
        assert_eq!(g.topo_order(), ops.as_slice());
    }

    #[test]
    fn topo_order_prefers_lower_ids() {
        // the consumer of the second input is created first
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let late = b.op_node(Neg);
        let early = b.op1(Neg, &[x]);
        let mid = b.value(Label::Output("a".into()));
        b.connect_in(early, late, 0);
        b.connect_out(late, 0, mid);
        let g = b.finish().unwrap();
        assert_eq!(g.topo_order(), &[NodeId(2), NodeId(1)]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let y = b.input("x");
        let z = b.op1(Add, &[x, y]);
        b.output(z, "z");
        assert!(matches!(b.finish(), Err(Error::DuplicateName { .. })));
    }

    #[test]
    fn from_graph_preserves_structure() {
        let g = add_graph();
        assert_eq!(GraphBuilder::from_graph(&g).finish().unwrap(), g);
    }
}
