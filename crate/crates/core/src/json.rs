//! Text form of graphs.
//!
//! ```text
//! {"nodes":[{"id":0,"kind":"value:input:x"}, {"id":1,"kind":"op:neg"}, ...],
//!  "edges":[[0,1,1,1], ...]}
//! ```
//!
//! Node kinds: `op:<kind>`, `value:input:<name>` (optionally
//! `value:input:<name>:[d1,d2]`), `value:const:<json>`, `value:output:<name>`,
//! `value:internal`. Ids may be any integers; they are renumbered densely in
//! array order on load.

use std::collections::HashMap;

use serde_json::json;

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph, Label, NodeId, NodeKind, PortRef};
use crate::value::{Shape, Value};

pub fn node_kind_string(kind: &NodeKind) -> String {
    match kind {
        NodeKind::Op(k) => format!("op:{k}"),
        NodeKind::Value(Label::Input { name, shape }) if shape.is_empty() => format!("value:input:{name}"),
        NodeKind::Value(Label::Input { name, shape }) => {
            let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
            format!("value:input:{name}:[{}]", dims.join(","))
        }
        NodeKind::Value(Label::Constant(v)) => format!("value:const:{}", v.to_json()),
        NodeKind::Value(Label::Output(name)) => format!("value:output:{name}"),
        NodeKind::Value(Label::Internal) => "value:internal".into(),
    }
}

pub fn parse_node_kind(s: &str) -> std::result::Result<NodeKind, String> {
    if let Some(op) = s.strip_prefix("op:") {
        return op.parse().map(NodeKind::Op).map_err(|e| format!("unknown op kind {op:?}: {e}"));
    }
    let rest = s
        .strip_prefix("value:")
        .ok_or_else(|| format!("unknown node kind {s:?}"))?;
    let label = if rest == "internal" {
        Label::Internal
    } else if let Some(name) = rest.strip_prefix("input:") {
        let (name, shape) = split_shape(name)?;
        check_name(name)?;
        Label::Input {
            name: name.into(),
            shape,
        }
    } else if let Some(name) = rest.strip_prefix("output:") {
        check_name(name)?;
        Label::Output(name.into())
    } else if let Some(payload) = rest.strip_prefix("const:") {
        let v: serde_json::Value =
            serde_json::from_str(payload).map_err(|e| format!("bad constant {payload:?}: {e}"))?;
        let v = Value::from_json(&v)?;
        if v.is_undefined() {
            return Err("constants cannot be undefined".into());
        }
        Label::Constant(v)
    } else {
        return Err(format!("unknown node kind {s:?}"));
    };
    Ok(NodeKind::Value(label))
}

fn check_name(name: &str) -> std::result::Result<(), String> {
    if name.is_empty() {
        Err("empty name".into())
    } else {
        Ok(())
    }
}

fn split_shape(s: &str) -> std::result::Result<(&str, Shape), String> {
    match s.rfind(":[") {
        Some(i) if s.ends_with(']') => {
            let inner = &s[i + 2..s.len() - 1];
            let dims = if inner.is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(|d| d.trim().parse::<usize>().map_err(|_| format!("bad dimension {d:?}")))
                    .collect::<std::result::Result<_, _>>()?
            };
            Ok((&s[..i], dims))
        }
        _ => Ok((s, Vec::new())),
    }
}

/// JSON value for a graph; ids equal positions.
pub fn graph_to_value(g: &Graph) -> serde_json::Value {
    let nodes: Vec<serde_json::Value> = g
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, k)| json!({"id": i, "kind": node_kind_string(k)}))
        .collect();
    let edges: Vec<serde_json::Value> = g
        .edges()
        .iter()
        .map(|e| json!([e.src.node.0, e.src.slot, e.dst.node.0, e.dst.slot]))
        .collect();
    json!({"nodes": nodes, "edges": edges})
}

/// One node or edge per line, so diffs and diagnostics stay readable.
pub fn to_json(g: &Graph) -> String {
    let mut out = String::from("{\n  \"nodes\": [\n");
    let n = g.len();
    for (i, k) in g.nodes().iter().enumerate() {
        let kind = serde_json::to_string(&node_kind_string(k)).unwrap();
        out.push_str(&format!("    {{\"id\": {i}, \"kind\": {kind}}}"));
        out.push_str(if i + 1 < n { ",\n" } else { "\n" });
    }
    out.push_str("  ],\n  \"edges\": [\n");
    let m = g.edges().len();
    for (i, e) in g.edges().iter().enumerate() {
        out.push_str(&format!(
            "    [{}, {}, {}, {}]",
            e.src.node.0, e.src.slot, e.dst.node.0, e.dst.slot
        ));
        out.push_str(if i + 1 < m { ",\n" } else { "\n" });
    }
    out.push_str("  ]\n}\n");
    out
}

fn line_of(text: &str, needle: &str) -> usize {
    text.find(needle)
        .map(|pos| text[..pos].matches('\n').count() + 1)
        .unwrap_or(0)
}

fn parse_err(text: &str, needle: &str, field: String, message: String) -> Error {
    Error::Parse {
        line: line_of(text, needle),
        field,
        message,
    }
}

pub fn from_json(text: &str) -> Result<Graph> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        field: String::new(),
        message: e.to_string(),
    })?;
    graph_from_value(&doc, text)
}

/// Decode a graph from an already parsed document. `text` is only used to
/// locate diagnostics.
pub fn graph_from_value(doc: &serde_json::Value, text: &str) -> Result<Graph> {
    let nodes = doc
        .get("nodes")
        .and_then(|n| n.as_array())
        .ok_or_else(|| parse_err(text, "nodes", "nodes".into(), "expected an array".into()))?;
    let mut ids: HashMap<i64, NodeId> = HashMap::new();
    let mut kinds = Vec::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let id = node.get("id").and_then(|v| v.as_i64()).ok_or_else(|| {
            parse_err(text, "\"id\"", format!("nodes[{i}].id"), "expected an integer".into())
        })?;
        let kind = node.get("kind").and_then(|v| v.as_str()).ok_or_else(|| {
            parse_err(text, "\"kind\"", format!("nodes[{i}].kind"), "expected a string".into())
        })?;
        let parsed = parse_node_kind(kind).map_err(|m| parse_err(text, kind, format!("nodes[{i}].kind"), m))?;
        if ids.insert(id, NodeId(i)).is_some() {
            return Err(parse_err(
                text,
                &format!("\"id\": {id}"),
                format!("nodes[{i}].id"),
                format!("duplicate id {id}"),
            ));
        }
        kinds.push(parsed);
    }
    let edges = doc
        .get("edges")
        .and_then(|n| n.as_array())
        .ok_or_else(|| parse_err(text, "edges", "edges".into(), "expected an array".into()))?;
    let mut out = Vec::with_capacity(edges.len());
    for (i, e) in edges.iter().enumerate() {
        let field = format!("edges[{i}]");
        let quad: Vec<i64> = e
            .as_array()
            .filter(|a| a.len() == 4)
            .and_then(|a| a.iter().map(|v| v.as_i64()).collect::<Option<Vec<_>>>())
            .ok_or_else(|| parse_err(text, "edges", field.clone(), "expected [src, srcSlot, dst, dstSlot]".into()))?;
        let node = |raw: i64| ids.get(&raw).copied().ok_or(Error::UnknownNode(raw));
        let slot = |raw: i64| {
            usize::try_from(raw)
                .ok()
                .filter(|&s| s >= 1)
                .ok_or_else(|| parse_err(text, "edges", field.clone(), format!("slot {raw} must be ≥ 1")))
        };
        out.push(Edge {
            src: PortRef::new(node(quad[0])?, slot(quad[1])?),
            dst: PortRef::new(node(quad[2])?, slot(quad[3])?),
        });
    }
    Graph::build(kinds, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::primitives::PrimitiveKind::*;

    #[test]
    fn round_trip_add() {
        let mut b = GraphBuilder::new();
        let x = b.input("x");
        let c = b.constant(3.0);
        let z = b.op1(Add, &[x, c]);
        b.output(z, "z");
        let g = b.finish().unwrap();
        let text = to_json(&g);
        assert!(text.contains("\"value:const:3.0\""));
        assert_eq!(from_json(&text).unwrap(), g);
    }

    #[test]
    fn unknown_kind_is_reported() {
        let text = "{\"nodes\": [\n {\"id\": 1, \"kind\": \"op:frobnicate\"}\n], \"edges\": []}";
        match from_json(text) {
            Err(Error::Parse { line, field, message }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "nodes[0].kind");
                assert!(message.contains("frobnicate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sparse_ids_are_remapped() {
        let text = r#"{"nodes":[{"id":10,"kind":"value:input:a:[3]"},{"id":7,"kind":"op:neg"},
            {"id":3,"kind":"value:output:b"}],"edges":[[10,1,7,1],[7,2,3,1]]}"#;
        let g = from_json(text).unwrap();
        assert_eq!(g.inputs(), vec![(NodeId(0), "a")]);
        assert_eq!(
            g.label(NodeId(0)),
            Some(&Label::Input {
                name: "a".into(),
                shape: vec![3]
            })
        );
    }

    #[test]
    fn kind_strings() {
        for s in [
            "op:dupl:3",
            "op:clip:0.0:1.0",
            "op:inv:add@red=xc",
            "op:contract:interval:-1.0:1.0",
            "value:const:[0.0,2.0]",
            "value:const:true",
            "value:const:3",
            "value:input:t:[5]",
        ] {
            assert_eq!(node_kind_string(&parse_node_kind(s).unwrap()), s);
        }
        assert!(parse_node_kind("value:bogus").is_err());
    }
}
