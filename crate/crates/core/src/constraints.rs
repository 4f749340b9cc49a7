//! Symbolic constraints over inverse programs and elimination of parameters
//! fixed by equalities.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::E;
use std::fmt;

use serde_json::json;

use crate::error::Result;
use crate::exec::eval_inverse;
use crate::graph::{Graph, GraphBuilder, Label, NodeId, OpKind};
use crate::inversion::{InverseProgram, ThetaLayout, ThetaVec, THETA_PREFIX};
use crate::primitives::{InverseOp, PrimitiveKind, Variant};
use crate::space::ParamSpace;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Input node of the inverse graph (data or parameter).
    Sym(NodeId),
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
    /// Uninterpreted application; `node` is the value it stands for, if any.
    Apply {
        node: Option<NodeId>,
        name: String,
        args: Vec<Expr>,
    },
}

fn bx(e: Expr) -> Box<Expr> {
    Box::new(e)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(z), _) if *z == 0.0 => b,
        (_, Expr::Const(z)) if *z == 0.0 => a,
        _ => Expr::Add(bx(a), bx(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (_, Expr::Const(z)) if *z == 0.0 => a,
        (Expr::Const(z), _) if *z == 0.0 => neg(b),
        _ => Expr::Sub(bx(a), bx(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => Expr::Const(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(bx(other)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(o), _) if *o == 1.0 => b,
        (_, Expr::Const(o)) if *o == 1.0 => a,
        _ => Expr::Mul(bx(a), bx(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, &b) {
        (a, Expr::Const(o)) if *o == 1.0 => a,
        (Expr::Neg(inner), Expr::Const(c)) if *c < 0.0 => div(*inner, Expr::Const(-c)),
        (a, _) => Expr::Div(bx(a), bx(b)),
    }
}

impl Expr {
    pub fn contains(&self, v: NodeId) -> bool {
        match self {
            Expr::Sym(s) => *s == v,
            Expr::Const(_) => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.contains(v) || b.contains(v),
            Expr::Neg(a) | Expr::Exp(a) | Expr::Ln(a) => a.contains(v),
            Expr::Apply { node, args, .. } => *node == Some(v) || args.iter().any(|a| a.contains(v)),
        }
    }

    /// Nodes an emitted expression would read, or `None` if it refers to an
    /// application without a backing node.
    fn leaves(&self, out: &mut BTreeSet<NodeId>) -> Option<()> {
        match self {
            Expr::Sym(s) => {
                out.insert(*s);
            }
            Expr::Const(_) => {}
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.leaves(out)?;
                b.leaves(out)?;
            }
            Expr::Neg(a) | Expr::Exp(a) | Expr::Ln(a) => a.leaves(out)?,
            Expr::Apply { node, .. } => {
                out.insert((*node)?);
            }
        }
        Some(())
    }

    pub fn render(&self, g: &Graph) -> String {
        Rendered(self, g).to_string()
    }
}

struct Rendered<'a>(&'a Expr, &'a Graph);

impl fmt::Display for Rendered<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = self.1;
        let r = |e: &Expr| Rendered(e, g).to_string();
        match self.0 {
            Expr::Sym(v) => match g.label(*v) {
                Some(Label::Input { name, .. }) => match name.strip_prefix(THETA_PREFIX) {
                    Some(rest) => write!(f, "θ[{rest}]"),
                    None => write!(f, "{name}"),
                },
                _ => write!(f, "v{v}"),
            },
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Add(a, b) => write!(f, "({} + {})", r(a), r(b)),
            Expr::Sub(a, b) => write!(f, "({} - {})", r(a), r(b)),
            Expr::Mul(a, b) => write!(f, "{} * {}", r(a), r(b)),
            Expr::Div(a, b) => write!(f, "{} / {}", r(a), r(b)),
            Expr::Neg(a) => write!(f, "-{}", r(a)),
            Expr::Exp(a) => write!(f, "exp({})", r(a)),
            Expr::Ln(a) => write!(f, "ln({})", r(a)),
            Expr::Apply { name, args, .. } => {
                let args: Vec<String> = args.iter().map(r).collect();
                write!(f, "{name}({})", args.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SymConstraint {
    Eq { op: NodeId, lhs: Expr, rhs: Expr },
    InSpace { op: NodeId, expr: Expr, space: ParamSpace },
}

/// Expression for every value node, following the inverse graph's
/// evaluation order.
pub fn symbolic_values(g: &Graph) -> BTreeMap<NodeId, Expr> {
    let mut ex: BTreeMap<NodeId, Expr> = BTreeMap::new();
    for v in g.value_ids() {
        match g.label(v) {
            Some(Label::Input { .. }) => {
                ex.insert(v, Expr::Sym(v));
            }
            Some(Label::Constant(c)) => {
                let e = match c.as_f64() {
                    Some(x) if !matches!(c, Value::Bool(_)) => Expr::Const(x),
                    _ => Expr::Apply {
                        node: Some(v),
                        name: c.to_string(),
                        args: vec![],
                    },
                };
                ex.insert(v, e);
            }
            _ => {}
        }
    }
    for &op in g.topo_order() {
        let args: Vec<Expr> = g.inputs_of(op).iter().map(|v| ex[v].clone()).collect();
        let outs = g.outputs_of(op);
        let kind = g.op_kind(op).unwrap();
        for (j, &v) in outs.iter().enumerate() {
            let e = interpret(kind, j, &args).unwrap_or_else(|| Expr::Apply {
                node: Some(v),
                name: if outs.len() > 1 { format!("{kind}[{j}]") } else { kind.to_string() },
                args: args.clone(),
            });
            ex.insert(v, e);
        }
    }
    ex
}

fn interpret(kind: &OpKind, j: usize, a: &[Expr]) -> Option<Expr> {
    use PrimitiveKind::*;
    let c = |e: &Expr| match e {
        Expr::Const(x) => Some(*x),
        _ => None,
    };
    match kind {
        OpKind::Contract(_) => None,
        OpKind::Prim(k) => match k {
            Add => Some(add(a[0].clone(), a[1].clone())),
            Sub => Some(sub(a[0].clone(), a[1].clone())),
            Mul => Some(mul(a[0].clone(), a[1].clone())),
            Div => Some(div(a[0].clone(), a[1].clone())),
            Neg => Some(neg(a[0].clone())),
            Exp => Some(Expr::Exp(bx(a[0].clone()))),
            Log if c(&a[0]) == Some(E) => Some(Expr::Ln(bx(a[1].clone()))),
            Dupl(_) => Some(a[0].clone()),
            _ => None,
        },
        OpKind::Inverse(inv) => interpret_inverse(inv, j, a),
    }
}

fn interpret_inverse(inv: &InverseOp, j: usize, a: &[Expr]) -> Option<Expr> {
    use PrimitiveKind::*;
    let y = || a[0].clone();
    let arg = |i: usize| a[i].clone();
    match &inv.variant {
        Variant::Full => match (&inv.kind, j) {
            (Add, 0) => Some(sub(y(), arg(1))),
            (Sub, 0) => Some(add(y(), arg(1))),
            (Div, 0) => Some(mul(y(), arg(1))),
            (Add | Sub | Div, 1) => Some(arg(1)),
            (Neg, _) => Some(neg(y())),
            (Exp, _) => Some(Expr::Ln(bx(y()))),
            (Dupl(n), _) => {
                let sum = a.iter().skip(1).fold(a[0].clone(), |s, e| add(s, e.clone()));
                Some(div(sum, Expr::Const(*n as f64)))
            }
            _ => None,
        },
        Variant::Reduced(mask) => {
            let ci = mask.iter().position(|&m| m)?;
            let k = arg(1);
            let kv = match &k {
                Expr::Const(x) => Some(*x),
                _ => None,
            };
            match (&inv.kind, ci) {
                (Add, _) => Some(sub(y(), k)),
                (Sub, 1) => Some(add(y(), k)),
                (Sub, _) => Some(sub(k, y())),
                (Mul, _) => Some(div(y(), k)),
                (Div, 1) => Some(mul(y(), k)),
                (Div, _) => Some(div(k, y())),
                (Pow, 1) => Some(Expr::Exp(bx(div(Expr::Ln(bx(y())), k)))),
                (Pow, _) => Some(div(Expr::Ln(bx(y())), Expr::Const(kv?.ln()))),
                (Log, 0) => Some(Expr::Exp(bx(mul(y(), Expr::Const(kv?.ln()))))),
                (Log, _) => Some(Expr::Exp(bx(div(Expr::Const(kv?.ln()), y())))),
                _ => None,
            }
        }
        Variant::Degenerate(_) => Some(arg(2)),
        Variant::Pinned(_) => None,
    }
}

fn leaf_space(g: &Graph, v: NodeId) -> Option<&Label> {
    g.label(v)
}

/// Domain predicates in evaluation order: one `InSpace` per parameter port
/// and per restricted data input, and one `Eq` per coupling (duplicate
/// agreement, pinned constants, degenerate constants).
pub fn collect(ip: &InverseProgram) -> Vec<SymConstraint> {
    let g = &ip.graph;
    let ex = symbolic_values(g);
    let mut out = Vec::new();
    for &op in g.topo_order() {
        let Some(OpKind::Inverse(inv)) = g.op_kind(op) else { continue };
        let ins = g.inputs_of(op);
        let args: Vec<Expr> = ins.iter().map(|v| ex[v].clone()).collect();
        let (n_y, n_c) = (inv.n_y(), inv.n_const());
        for (i, dom) in inv.y_domains().into_iter().enumerate() {
            if dom != ParamSpace::RealLine {
                out.push(SymConstraint::InSpace {
                    op,
                    expr: args[i].clone(),
                    space: dom,
                });
            }
        }
        for (k, space) in inv.param_spaces().into_iter().enumerate() {
            let _ = leaf_space(g, ins[n_y + n_c + k]);
            out.push(SymConstraint::InSpace {
                op,
                expr: args[n_y + n_c + k].clone(),
                space,
            });
        }
        match &inv.variant {
            Variant::Full if matches!(inv.kind, PrimitiveKind::Dupl(_)) => {
                for w in args.windows(2) {
                    out.push(SymConstraint::Eq {
                        op,
                        lhs: w[0].clone(),
                        rhs: w[1].clone(),
                    });
                }
            }
            Variant::Pinned(mask) => {
                let mut ci = 0;
                for (slot, &is_const) in mask.iter().enumerate() {
                    if is_const {
                        out.push(SymConstraint::Eq {
                            op,
                            lhs: Expr::Apply {
                                node: None,
                                name: format!("{inv}[x{}]", slot + 1),
                                args: args.clone(),
                            },
                            rhs: args[n_y + ci].clone(),
                        });
                        ci += 1;
                    }
                }
            }
            Variant::Degenerate(mask) => {
                let target = match inv.kind {
                    PrimitiveKind::Pow => 1.0,
                    _ => 0.0,
                };
                let _ = mask;
                out.push(SymConstraint::Eq {
                    op,
                    lhs: args[0].clone(),
                    rhs: Expr::Const(target),
                });
            }
            _ => {}
        }
    }
    out
}

fn linear(e: &Expr, t: NodeId) -> Option<(f64, Expr)> {
    if !e.contains(t) {
        return Some((0.0, e.clone()));
    }
    match e {
        Expr::Sym(_) => Some((1.0, Expr::Const(0.0))),
        Expr::Add(a, b) => {
            let (p, q) = (linear(a, t)?, linear(b, t)?);
            Some((p.0 + q.0, add(p.1, q.1)))
        }
        Expr::Sub(a, b) => {
            let (p, q) = (linear(a, t)?, linear(b, t)?);
            Some((p.0 - q.0, sub(p.1, q.1)))
        }
        Expr::Neg(a) => {
            let p = linear(a, t)?;
            Some((-p.0, neg(p.1)))
        }
        Expr::Mul(a, b) => match (a.as_ref(), b.as_ref()) {
            (Expr::Const(c), other) | (other, Expr::Const(c)) => {
                let p = linear(other, t)?;
                Some((c * p.0, mul(p.1, Expr::Const(*c))))
            }
            _ => None,
        },
        Expr::Div(a, b) => match b.as_ref() {
            Expr::Const(c) if *c != 0.0 => {
                let p = linear(a, t)?;
                Some((p.0 / c, div(p.1, Expr::Const(*c))))
            }
            _ => None,
        },
        _ => None,
    }
}

/// Solve `l = r` for `t` where `l` contains `t` and `r` does not, peeling
/// invertible wrappers.
fn peel(l: &Expr, r: Expr, t: NodeId) -> Option<Expr> {
    match l {
        Expr::Sym(s) if *s == t => Some(r),
        Expr::Exp(u) => peel(u, Expr::Ln(bx(r)), t),
        Expr::Ln(u) => peel(u, Expr::Exp(bx(r)), t),
        Expr::Neg(u) => peel(u, neg(r), t),
        Expr::Add(u, v) if !v.contains(t) => peel(u, sub(r, *v.clone()), t),
        Expr::Add(u, v) if !u.contains(t) => peel(v, sub(r, *u.clone()), t),
        Expr::Sub(u, v) if !v.contains(t) => peel(u, add(r, *v.clone()), t),
        Expr::Sub(u, v) if !u.contains(t) => peel(v, sub(*u.clone(), r), t),
        Expr::Mul(u, v) => match (u.as_ref(), v.as_ref()) {
            (Expr::Const(c), w) | (w, Expr::Const(c)) if *c != 0.0 && w.contains(t) => {
                peel(w, div(r, Expr::Const(*c)), t)
            }
            _ => None,
        },
        Expr::Div(u, v) => match v.as_ref() {
            Expr::Const(c) if *c != 0.0 => peel(u, mul(r, Expr::Const(*c)), t),
            _ => None,
        },
        other => {
            let (a, b) = linear(other, t)?;
            (a != 0.0).then(|| div(sub(r, b), Expr::Const(a)))
        }
    }
}

/// `t` as a function of the other symbols, if the equation allows it.
pub fn isolate(lhs: &Expr, rhs: &Expr, t: NodeId) -> Option<Expr> {
    let (l, r) = if lhs.contains(t) { (lhs, rhs) } else { (rhs, lhs) };
    if !l.contains(t) {
        return None;
    }
    if r.contains(t) {
        let (a1, b1) = linear(l, t)?;
        let (a2, b2) = linear(r, t)?;
        let a = a1 - a2;
        if a == 0.0 {
            return None;
        }
        return Some(div(sub(b2, b1), Expr::Const(a)));
    }
    peel(l, r.clone(), t)
}

fn descendants(g: &Graph, from: NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([from]);
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        for &(op, _) in g.consumers(v) {
            for &w in g.outputs_of(op) {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
    }
    seen
}

fn emit(b: &mut GraphBuilder, e: &Expr) -> NodeId {
    use PrimitiveKind::*;
    match e {
        Expr::Sym(v) => *v,
        Expr::Apply { node, .. } => node.expect("checked before emitting"),
        Expr::Const(c) => b.constant(*c),
        Expr::Add(x, y) | Expr::Sub(x, y) | Expr::Mul(x, y) | Expr::Div(x, y) => {
            let k = match e {
                Expr::Add(..) => Add,
                Expr::Sub(..) => Sub,
                Expr::Mul(..) => Mul,
                _ => Div,
            };
            let (p, q) = (emit(b, x), emit(b, y));
            b.op1(k, &[p, q])
        }
        Expr::Neg(x) => {
            let p = emit(b, x);
            b.op1(Neg, &[p])
        }
        Expr::Exp(x) => {
            let p = emit(b, x);
            b.op1(Exp, &[p])
        }
        Expr::Ln(x) => {
            let base = b.constant(E);
            let p = emit(b, x);
            b.op1(Log, &[base, p])
        }
    }
}

/// A parameter replaced by a computed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    pub param: NodeId,
    pub gamma: Expr,
}

/// Remove parameters fixed by solvable equalities. Each eliminated
/// parameter node becomes an internal value computed from the others;
/// node ids of the input program are preserved.
pub fn eliminate(ip: &InverseProgram, constraints: &[SymConstraint]) -> Result<(InverseProgram, Vec<Elimination>)> {
    let mut graph = ip.graph.clone();
    let mut done = Vec::new();
    for c in constraints {
        let SymConstraint::Eq { lhs, rhs, .. } = c else { continue };
        let layout = ThetaLayout::compute(&graph);
        let candidates: Vec<NodeId> = layout
            .ports()
            .filter(|p| p.shape.is_empty() && !p.space.is_discrete())
            .map(|p| p.param)
            .filter(|&p| lhs.contains(p) || rhs.contains(p))
            .collect();
        for &t in candidates.iter().rev() {
            let Some(gamma) = isolate(lhs, rhs, t) else { continue };
            let mut leaves = BTreeSet::new();
            if gamma.leaves(&mut leaves).is_none() {
                continue;
            }
            let below = descendants(&graph, t);
            if leaves.iter().any(|v| below.contains(v)) {
                continue;
            }
            let mut b = GraphBuilder::from_graph(&graph);
            let v = emit(&mut b, &gamma);
            b.set_label(t, Label::Internal);
            let id = b.op_node(PrimitiveKind::Dupl(1));
            b.connect_in(v, id, 0);
            b.connect_out(id, 0, t);
            graph = b.finish()?;
            done.push(Elimination { param: t, gamma });
            break;
        }
    }
    let layout = ThetaLayout::compute(&graph);
    Ok((
        InverseProgram {
            forward: ip.forward.clone(),
            graph,
            layout,
            port_map: ip.port_map.clone(),
            totalized: ip.totalized,
        },
        done,
    ))
}

/// Collect and eliminate until no further parameter can be removed.
pub fn reduce(ip: &InverseProgram) -> Result<(InverseProgram, Vec<Elimination>)> {
    let mut current = ip.clone();
    let mut all = Vec::new();
    loop {
        let (next, done) = eliminate(&current, &collect(&current))?;
        if done.is_empty() {
            return Ok((current, all));
        }
        all.extend(done);
        current = next;
    }
}

/// Full θ for `original` matching a θ of its reduction: eliminated slots
/// take the values their expressions compute.
pub fn expand_theta(
    original: &InverseProgram,
    reduced: &InverseProgram,
    y: &BTreeMap<String, Value>,
    theta: &[f64],
) -> Result<ThetaVec> {
    let ev = eval_inverse(reduced, y, theta)?;
    let mut full = vec![0.0; original.layout.total];
    for p in original.layout.ports() {
        let v = ev.trace[p.param.0].clone().unwrap_or(Value::Undefined);
        let elems = v.elements().unwrap_or_else(|| vec![f64::NAN; p.len]);
        full[p.start..p.start + p.len].copy_from_slice(&elems[..p.len]);
    }
    Ok(full)
}

pub fn report_json(ip: &InverseProgram, constraints: &[SymConstraint], eliminated: &[Elimination]) -> serde_json::Value {
    let g = &ip.graph;
    let rows: Vec<serde_json::Value> = constraints
        .iter()
        .map(|c| match c {
            SymConstraint::Eq { op, lhs, rhs } => json!({
                "op": op.0, "relation": "eq", "lhs": lhs.render(g), "rhs": rhs.render(g),
            }),
            SymConstraint::InSpace { op, expr, space } => json!({
                "op": op.0, "relation": "in", "lhs": expr.render(g), "space": space.to_string(),
            }),
        })
        .collect();
    let elim: Vec<serde_json::Value> = eliminated
        .iter()
        .map(|e| json!({"param": e.param.0, "gamma": e.gamma.render(g)}))
        .collect();
    json!({
        "constraints": rows,
        "eliminated": elim,
        "slots": ip.layout.total,
    })
}
