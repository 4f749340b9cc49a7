use thiserror::Error;

use crate::graph::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("graph contains a cycle through node {0}")]
    CycleDetected(NodeId),
    #[error("edge {src} -> {dst} does not connect an op port to a value port")]
    NonBipartiteEdge { src: NodeId, dst: NodeId },
    #[error("value node {0} receives more than one edge")]
    ValueFanInViolation(NodeId),
    #[error("value node {0} has no producer but is not labeled input or constant")]
    UnlabeledSourceValue(NodeId),
    #[error("value node {0} has no consumer but is not labeled output")]
    UnlabeledSinkValue(NodeId),
    #[error("value node {0} is labeled input or constant but has a producer")]
    LabeledSourceHasProducer(NodeId),
    #[error("op node {node} port {slot} is not connected")]
    DanglingOpPort { node: NodeId, slot: usize },
    #[error("port {slot} of node {node} is out of range or used twice")]
    BadPort { node: NodeId, slot: usize },
    #[error("edge references unknown node {0}")]
    UnknownNode(i64),
    #[error("duplicate {kind} name {name:?}")]
    DuplicateName { kind: &'static str, name: String },

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("{kind}: expected {expected} inputs, got {got}")]
    ArityMismatch {
        kind: String,
        expected: usize,
        got: usize,
    },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("inputs are not in the domain: {0}")]
    NotInDomain(String),
    #[error("no parameter reaches this preimage element: {0}")]
    Unreachable(String),
    #[error("unsupported for inversion: {0}")]
    UnsupportedKind(String),

    #[error("missing input {0:?}")]
    MissingInput(String),
    #[error("forward run is undefined at node {0}")]
    ForwardUndefined(NodeId),
    #[error("program is not totalized: undefined value at node {0}")]
    NotTotalized(NodeId),
    #[error("theta has {got} entries, layout expects {expected}")]
    ThetaLength { expected: usize, got: usize },

    #[error("random graph generation exhausted after {0} rejections")]
    GenerationExhausted(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
