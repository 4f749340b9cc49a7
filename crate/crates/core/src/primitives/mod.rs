//! Primitive operations: forward semantics, input domains and naming.
//!
//! Parametric inverses live in [`inverse`].

pub mod inverse;

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::space::ParamSpace;
use crate::value::{Shape, Value};

pub use inverse::{inverse_eval, extract_theta, InverseOp, Variant};

#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveKind {
    Add,
    Sub,
    Mul,
    Div,
    /// `x1 ^ x2` with base `x1 > 0`.
    Pow,
    /// `log_{x1}(x2)`: base first.
    Log,
    Abs,
    Sqr,
    Min,
    Max,
    Cos,
    Sin,
    Tan,
    Gt,
    Lt,
    Eq,
    And,
    Or,
    Xor,
    Dupl(usize),
    /// `(a, b, c) -> if c then a else b`
    Select,
    Clip(f64, f64),
    /// `(x, indices) -> x[indices]`, rank 1.
    GatherNd,
    /// `(z, indices, shape) -> zeros(shape)` with `z` stored at `indices`.
    Scatter,
    /// `(x, shape) -> x` viewed with a new shape.
    Reshape,
    Neg,
    Exp,
}

use PrimitiveKind::*;

impl PrimitiveKind {
    /// `(inputs, outputs)`
    pub fn arity(&self) -> (usize, usize) {
        match self {
            Abs | Sqr | Cos | Sin | Tan | Neg | Exp | Clip(..) => (1, 1),
            Dupl(n) => (1, *n),
            Select | Scatter => (3, 1),
            _ => (2, 1),
        }
    }

    pub fn is_boolean(&self) -> bool {
        matches!(self, And | Or | Xor)
    }

    pub fn is_comparison(&self) -> bool {
        matches!(self, Gt | Lt | Eq)
    }

    /// Kinds applied element by element over tensors.
    pub fn is_elementwise(&self) -> bool {
        !matches!(self, GatherNd | Scatter | Reshape)
    }

    /// Declared input domains (ε-shrunk for open sets), one per input slot.
    /// Boolean and index inputs are reported as the real line.
    pub fn input_domains(&self) -> Vec<ParamSpace> {
        use ParamSpace as S;
        match self {
            Div => vec![S::RealLine, S::RealNonzero],
            Pow => vec![S::RealPositive, S::RealLine],
            Log => vec![S::RealPositiveNotOne, S::RealPositive],
            _ => vec![S::RealLine; self.arity().0],
        }
    }

    /// Every kind, with representative parameters for the parameterized ones.
    pub fn catalog() -> Vec<PrimitiveKind> {
        vec![
            Add, Sub, Mul, Div, Pow, Log, Abs, Sqr, Min, Max, Cos, Sin, Tan, Gt, Lt, Eq, And, Or,
            Xor, Dupl(2), Select, Clip(-1.0, 1.0), GatherNd, Scatter, Reshape, Neg, Exp,
        ]
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Div => "div",
            Pow => "pow",
            Log => "log",
            Abs => "abs",
            Sqr => "sqr",
            Min => "min",
            Max => "max",
            Cos => "cos",
            Sin => "sin",
            Tan => "tan",
            Gt => "gt",
            Lt => "lt",
            Eq => "eq",
            And => "and",
            Or => "or",
            Xor => "xor",
            Dupl(n) => return write!(f, "dupl:{n}"),
            Select => "select",
            Clip(a, b) => return write!(f, "clip:{a:?}:{b:?}"),
            GatherNd => "gathernd",
            Scatter => "scatter",
            Reshape => "reshape",
            Neg => "neg",
            Exp => "exp",
        };
        f.write_str(name)
    }
}

impl FromStr for PrimitiveKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let kind = match parts.as_slice() {
            ["add"] => Add,
            ["sub"] => Sub,
            ["mul"] => Mul,
            ["div"] => Div,
            ["pow"] => Pow,
            ["log"] => Log,
            ["abs"] => Abs,
            ["sqr"] => Sqr,
            ["min"] => Min,
            ["max"] => Max,
            ["cos"] => Cos,
            ["sin"] => Sin,
            ["tan"] => Tan,
            ["gt"] => Gt,
            ["lt"] => Lt,
            ["eq"] => Eq,
            ["and"] => And,
            ["or"] => Or,
            ["xor"] => Xor,
            ["select"] => Select,
            ["gathernd"] => GatherNd,
            ["scatter"] => Scatter,
            ["reshape"] => Reshape,
            ["neg"] => Neg,
            ["exp"] => Exp,
            ["dupl", n] => {
                let n: usize = n.parse().map_err(|_| format!("bad dupl arity {n:?}"))?;
                if n < 1 {
                    return Err("dupl arity must be at least 1".into());
                }
                Dupl(n)
            }
            ["clip", a, b] => {
                let a: f64 = a.parse().map_err(|_| format!("bad clip bound {a:?}"))?;
                let b: f64 = b.parse().map_err(|_| format!("bad clip bound {b:?}"))?;
                if !(a < b) {
                    return Err(format!("clip bounds must satisfy a < b, got {a}, {b}"));
                }
                Clip(a, b)
            }
            _ => return Err(format!("unknown primitive kind {s:?}")),
        };
        Ok(kind)
    }
}

/// Common element count of the arguments; scalars broadcast.
pub(crate) fn broadcast_shape(kind: &dyn fmt::Display, args: &[&Value]) -> Result<Option<Shape>> {
    let mut shape: Option<Shape> = None;
    for a in args {
        if let Value::Tensor { shape: s, .. } = a {
            match &shape {
                None => shape = Some(s.clone()),
                Some(prev) if prev == s => {}
                Some(prev) => {
                    return Err(Error::ShapeMismatch(format!(
                        "{kind}: operands of shape {prev:?} and {s:?}"
                    )))
                }
            }
        }
    }
    Ok(shape)
}

pub(crate) fn lane(v: &Value, i: usize) -> f64 {
    match v {
        Value::Tensor { data, .. } => data[i],
        other => other.as_f64().unwrap_or(f64::NAN),
    }
}

fn bool_of(v: f64) -> bool {
    v != 0.0
}

fn from_bool(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn check_arity(kind: &PrimitiveKind, inputs: &[Value]) -> Result<()> {
    let expected = kind.arity().0;
    if inputs.len() != expected {
        return Err(Error::ArityMismatch {
            kind: kind.to_string(),
            expected,
            got: inputs.len(),
        });
    }
    Ok(())
}

fn require_numeric(kind: &PrimitiveKind, v: &Value) -> Result<()> {
    if matches!(v, Value::Bool(_)) {
        return Err(Error::TypeMismatch(format!("{kind} expects numbers, got a boolean")));
    }
    Ok(())
}

fn require_bool(kind: &PrimitiveKind, v: &Value) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| Error::TypeMismatch(format!("{kind} expects a boolean, got {v}")))
}

fn require_scalar(kind: &PrimitiveKind, v: &Value) -> Result<f64> {
    match v {
        Value::Real(_) | Value::Int(_) => Ok(v.as_f64().unwrap()),
        other => Err(Error::TypeMismatch(format!("{kind} expects a scalar number, got {other}"))),
    }
}

/// Scalar forward kernel for the real elementwise kinds. `None` is ⊥.
fn real_kernel(kind: &PrimitiveKind, x: &[f64]) -> Option<f64> {
    let r = match kind {
        Add => x[0] + x[1],
        Sub => x[0] - x[1],
        Mul => x[0] * x[1],
        Div if x[1] == 0.0 => return None,
        Div => x[0] / x[1],
        Pow if x[0] <= 0.0 => return None,
        Pow => x[0].powf(x[1]),
        Log if x[0] <= 0.0 || x[0] == 1.0 || x[1] <= 0.0 => return None,
        Log => x[1].ln() / x[0].ln(),
        Abs => x[0].abs(),
        Sqr => x[0] * x[0],
        Min => x[0].min(x[1]),
        Max => x[0].max(x[1]),
        Cos => x[0].cos(),
        Sin => x[0].sin(),
        Tan => x[0].tan(),
        Neg => -x[0],
        Exp => E.powf(x[0]),
        Clip(a, b) => x[0].clamp(*a, *b),
        _ => unreachable!("{kind} is not a real elementwise kind"),
    };
    r.is_finite().then_some(r)
}

fn index_list(kind: &PrimitiveKind, v: &Value, bound: usize) -> Option<Vec<usize>> {
    let elems = v.elements()?;
    let _ = kind;
    elems
        .into_iter()
        .map(|i| (i >= 0.0 && i.fract() == 0.0 && (i as usize) < bound).then_some(i as usize))
        .collect()
}

/// Dims encoded by a shape operand: an integer, or a rank-1 tensor of dims.
pub(crate) fn shape_operand(v: &Value) -> Option<Shape> {
    let dims = match v {
        Value::Tensor { shape, data } if shape.len() == 1 => data.clone(),
        other => vec![other.as_f64()?],
    };
    dims.into_iter()
        .map(|d| (d >= 0.0 && d.fract() == 0.0).then_some(d as usize))
        .collect()
}

/// Forward semantics. Outputs are ⊥ when any input is ⊥ or outside the
/// declared domain; type and arity errors are reported as errors.
pub fn forward_eval(kind: &PrimitiveKind, inputs: &[Value]) -> Result<Vec<Value>> {
    check_arity(kind, inputs)?;
    let n_out = kind.arity().1;
    if inputs.iter().any(Value::is_undefined) {
        return Ok(vec![Value::Undefined; n_out]);
    }
    match kind {
        Dupl(n) => Ok(vec![inputs[0].clone(); *n]),
        And | Or | Xor => {
            let (a, b) = (require_bool(kind, &inputs[0])?, require_bool(kind, &inputs[1])?);
            let r = match kind {
                And => a && b,
                Or => a || b,
                _ => a ^ b,
            };
            Ok(vec![Value::Bool(r)])
        }
        Gt | Lt | Eq => {
            let (a, b) = (require_scalar(kind, &inputs[0])?, require_scalar(kind, &inputs[1])?);
            let r = match kind {
                Gt => a > b,
                Lt => a < b,
                _ => a == b,
            };
            Ok(vec![Value::Bool(r)])
        }
        Select => {
            let c = require_bool(kind, &inputs[2])?;
            let (a, b) = (&inputs[0], &inputs[1]);
            if a.value_type() != b.value_type() || a.shape() != b.shape() {
                return Err(Error::TypeMismatch(format!("select branches {a} and {b} differ in type")));
            }
            Ok(vec![if c { a.clone() } else { b.clone() }])
        }
        GatherNd => {
            let x = &inputs[0];
            let xs = match x {
                Value::Tensor { shape, data } if shape.len() == 1 => data,
                other => return Err(Error::TypeMismatch(format!("gathernd expects a rank-1 tensor, got {other}"))),
            };
            let Some(idx) = index_list(kind, &inputs[1], xs.len()) else {
                return Ok(vec![Value::Undefined]);
            };
            Ok(vec![Value::vector(idx.iter().map(|&i| xs[i]).collect())])
        }
        Scatter => {
            let z = inputs[0]
                .elements()
                .ok_or_else(|| Error::TypeMismatch("scatter expects numeric values".into()))?;
            let Some(shape) = shape_operand(&inputs[2]) else {
                return Ok(vec![Value::Undefined]);
            };
            if shape.len() != 1 {
                return Err(Error::ShapeMismatch(format!("scatter supports rank-1 shapes, got {shape:?}")));
            }
            let Some(idx) = index_list(kind, &inputs[1], shape[0]) else {
                return Ok(vec![Value::Undefined]);
            };
            if idx.len() != z.len() {
                return Err(Error::ShapeMismatch(format!(
                    "scatter has {} values for {} indices",
                    z.len(),
                    idx.len()
                )));
            }
            let mut seen = vec![false; shape[0]];
            let mut out = vec![0.0; shape[0]];
            for (k, &i) in idx.iter().enumerate() {
                if seen[i] {
                    return Ok(vec![Value::Undefined]);
                }
                seen[i] = true;
                out[i] = z[k];
            }
            Ok(vec![Value::vector(out)])
        }
        Reshape => {
            let x = inputs[0]
                .elements()
                .ok_or_else(|| Error::TypeMismatch("reshape expects numeric values".into()))?;
            require_numeric(kind, &inputs[0])?;
            let Some(shape) = shape_operand(&inputs[1]) else {
                return Ok(vec![Value::Undefined]);
            };
            if shape.iter().product::<usize>() != x.len() {
                return Ok(vec![Value::Undefined]);
            }
            Ok(vec![Value::from_elements(&shape, x)])
        }
        _ => {
            for v in inputs {
                require_numeric(kind, v)?;
            }
            let refs: Vec<&Value> = inputs.iter().collect();
            let shape = broadcast_shape(kind, &refs)?;
            let n = shape.as_ref().map_or(1, |s| s.iter().product());
            let mut out = Vec::with_capacity(n);
            let mut args = vec![0.0; inputs.len()];
            for i in 0..n {
                for (a, v) in args.iter_mut().zip(inputs) {
                    *a = lane(v, i);
                }
                match real_kernel(kind, &args) {
                    Some(r) => out.push(r),
                    None => return Ok(vec![Value::Undefined]),
                }
            }
            Ok(vec![match shape {
                Some(s) => Value::Tensor { shape: s, data: out },
                None => Value::Real(out[0]),
            }])
        }
    }
}

/// Distance of the inputs to the kind's declared input domain; zero iff all
/// inputs are members. For `Dupl(n)` given `n` values (the inverse side) the
/// distance is their disagreement `Σ |x_i - mean|`.
pub fn domain_distance(kind: &PrimitiveKind, inputs: &[Value]) -> Result<f64> {
    if let Dupl(n) = kind {
        if inputs.len() == *n && *n > 1 {
            return Ok(disagreement(inputs));
        }
    }
    check_arity(kind, inputs)?;
    Ok(kind
        .input_domains()
        .iter()
        .zip(inputs)
        .map(|(d, v)| match v {
            Value::Bool(_) => 0.0,
            _ => d.distance_value(v),
        })
        .sum())
}

/// `Σ_i |x_i - mean|`, summed over elements for tensors.
pub(crate) fn disagreement(values: &[Value]) -> f64 {
    let Some(n) = values.first().map(Value::numel) else {
        return 0.0;
    };
    let cols: Option<Vec<Vec<f64>>> = values.iter().map(Value::elements).collect();
    let Some(cols) = cols else {
        return f64::INFINITY;
    };
    if cols.iter().any(|c| c.len() != n) {
        return f64::INFINITY;
    }
    (0..n)
        .map(|i| {
            let mean = cols.iter().map(|c| c[i]).sum::<f64>() / cols.len() as f64;
            cols.iter().map(|c| (c[i] - mean).abs()).sum::<f64>()
        })
        .sum()
}

pub(crate) fn bool_value(v: f64) -> Value {
    Value::Bool(bool_of(v))
}

pub(crate) fn bool_lane(b: bool) -> f64 {
    from_bool(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: f64) -> Value {
        Value::Real(v)
    }

    #[test]
    fn basic_forward_examples() {
        assert_eq!(forward_eval(&Add, &[r(2.0), r(3.0)]).unwrap(), vec![r(5.0)]);
        assert_eq!(forward_eval(&Div, &[r(1.0), r(0.0)]).unwrap(), vec![Value::Undefined]);
        assert_eq!(forward_eval(&Cos, &[r(0.0)]).unwrap(), vec![r(1.0)]);
        assert_eq!(forward_eval(&Log, &[r(1.0), r(8.0)]).unwrap(), vec![Value::Undefined]);
        assert_eq!(forward_eval(&Pow, &[r(-2.0), r(2.0)]).unwrap(), vec![Value::Undefined]);
    }

    #[test]
    fn select_identity() {
        let (a, b) = (r(1.5), r(-2.0));
        assert_eq!(forward_eval(&Select, &[a.clone(), b.clone(), true.into()]).unwrap(), vec![a]);
        assert_eq!(forward_eval(&Select, &[r(1.5), b.clone(), false.into()]).unwrap(), vec![b]);
    }

    #[test]
    fn arity_and_type_errors() {
        assert!(matches!(
            forward_eval(&Add, &[r(1.0)]),
            Err(Error::ArityMismatch { expected: 2, got: 1, .. })
        ));
        assert!(matches!(forward_eval(&And, &[r(1.0), true.into()]), Err(Error::TypeMismatch(_))));
        assert!(matches!(forward_eval(&Add, &[true.into(), r(1.0)]), Err(Error::TypeMismatch(_))));
    }

    #[test]
    fn undefined_propagates() {
        assert_eq!(forward_eval(&Mul, &[Value::Undefined, r(2.0)]).unwrap(), vec![Value::Undefined]);
        assert_eq!(
            forward_eval(&Dupl(3), &[Value::Undefined]).unwrap(),
            vec![Value::Undefined; 3]
        );
    }

    #[test]
    fn array_primitives() {
        let x = Value::vector(vec![10.0, 11.0, 12.0, 13.0, 14.0]);
        let idx = Value::vector(vec![0.0, 2.0]);
        assert_eq!(
            forward_eval(&GatherNd, &[x, idx.clone()]).unwrap(),
            vec![Value::vector(vec![10.0, 12.0])]
        );
        let z = Value::vector(vec![1.0, 2.0]);
        assert_eq!(
            forward_eval(&Scatter, &[z, idx, Value::Int(4)]).unwrap(),
            vec![Value::vector(vec![1.0, 0.0, 2.0, 0.0])]
        );
        let m = forward_eval(
            &Reshape,
            &[Value::vector(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), Value::vector(vec![2.0, 3.0])],
        )
        .unwrap();
        assert_eq!(m[0].shape(), vec![2, 3]);
    }

    #[test]
    fn elementwise_tensors_and_shape_errors() {
        let a = Value::vector(vec![1.0, 2.0]);
        let b = Value::vector(vec![3.0, 4.0]);
        assert_eq!(forward_eval(&Add, &[a.clone(), b]).unwrap(), vec![Value::vector(vec![4.0, 6.0])]);
        let c = Value::vector(vec![1.0, 2.0, 3.0]);
        assert!(matches!(forward_eval(&Add, &[a, c]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn domain_distance_examples() {
        assert_eq!(domain_distance(&Div, &[r(1.0), r(0.0)]).unwrap(), 1e-9);
        assert_eq!(domain_distance(&Log, &[r(2.0), r(8.0)]).unwrap(), 0.0);
        assert_eq!(domain_distance(&Dupl(3), &[r(4.0), r(4.0), r(4.0)]).unwrap(), 0.0);
        assert_eq!(domain_distance(&Dupl(2), &[r(1.0), r(3.0)]).unwrap(), 2.0);
        assert!(domain_distance(&Log, &[r(-1.0), r(8.0)]).unwrap() > 0.0);
    }

    #[test]
    fn names_round_trip() {
        for k in PrimitiveKind::catalog() {
            assert_eq!(k.to_string().parse::<PrimitiveKind>().unwrap(), k);
        }
        assert!("frobnicate".parse::<PrimitiveKind>().is_err());
        assert!("clip:1:0".parse::<PrimitiveKind>().is_err());
    }
}
