//! Parametric inversion of dataflow programs.

pub mod bench;
pub mod constraints;
pub mod error;
pub mod exec;
pub mod graph;
pub mod inversion;
pub mod json;
pub mod primitives;
pub mod propagation;
pub mod solve;
pub mod space;
pub mod totalization;
pub mod value;

pub use error::{Error, Result};
pub use graph::{Graph, GraphBuilder, Label, NodeId, NodeKind, OpKind, PortRef};
pub use inversion::{invert, invert_graph, InverseProgram, ThetaLayout, ThetaVec};
pub use primitives::PrimitiveKind;
pub use space::ParamSpace;
pub use totalization::totalize;
pub use value::{Shape, Value};
