//! Contraction insertion.

use crate::graph::{GraphBuilder, Label, NodeId, OpKind};
use crate::inversion::{InverseProgram, ThetaLayout};
use crate::space::ParamSpace;
use crate::value::Value;

/// Nearest member of `space` for every element of `v`.
pub fn contract_value(space: &ParamSpace, v: &Value) -> Value {
    space.contract_value(v)
}

fn input_domains(kind: &OpKind) -> Vec<ParamSpace> {
    match kind {
        OpKind::Inverse(inv) => {
            let mut d = inv.y_domains();
            d.extend(std::iter::repeat_n(ParamSpace::RealLine, inv.n_const()));
            d.extend(inv.param_spaces());
            d
        }
        OpKind::Prim(k) => k.input_domains(),
        OpKind::Contract(_) => vec![],
    }
}

/// Insert a contraction in front of every non-constant input of every
/// inverse op (data and parameter ports alike) and of every primitive op.
/// Idempotent: already totalized programs are returned unchanged.
pub fn totalize(ip: &InverseProgram) -> InverseProgram {
    if ip.totalized {
        return ip.clone();
    }
    let g = &ip.graph;
    let mut b = GraphBuilder::from_graph(g);
    let ops: Vec<NodeId> = g.op_ids().collect();
    for op in ops {
        let kind = g.op_kind(op).unwrap();
        let domains = input_domains(kind);
        for (i, (&v, dom)) in g.inputs_of(op).iter().zip(domains).enumerate() {
            if matches!(g.label(v), Some(Label::Constant(_))) {
                continue;
            }
            b.disconnect_in(op, i);
            let c = b.op1(OpKind::Contract(dom), &[v]);
            b.connect_in(c, op, i);
        }
    }
    let graph = b.finish().expect("contraction insertion keeps the graph valid");
    let layout = ThetaLayout::compute(&graph);
    InverseProgram {
        forward: ip.forward.clone(),
        graph,
        layout,
        port_map: ip.port_map.clone(),
        totalized: true,
    }
}
