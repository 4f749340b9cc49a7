//! Parametric inverses of the primitives.
//!
//! An inverse op consumes the forward outputs `y`, any constant forward
//! inputs, and its parameter ports `θ`; it produces the non-constant forward
//! inputs. Selector conventions follow `[a, b]^c = if c then a else b`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use super::PrimitiveKind::{self, *};
use super::{bool_lane, bool_value, broadcast_shape, forward_eval, lane};
use crate::error::{Error, Result};
use crate::space::ParamSpace;
use crate::value::{Shape, Value};

/// Penalty charged per element whose inverse result had to be saturated to a
/// finite number in a totalized run.
pub const SATURATION_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// Every forward input is recovered.
    Full,
    /// Constant inputs (mask `true`) are fed to the full inverse and the
    /// recovered value is compared against them.
    Pinned(Vec<bool>),
    /// Specialized inverse exploiting a constant operand.
    Reduced(Vec<bool>),
    /// Constant operand annihilates the other one (e.g. multiplication by 0);
    /// the remaining input becomes a free parameter.
    Degenerate(Vec<bool>),
}

impl Variant {
    pub fn mask(&self) -> Option<&[bool]> {
        match self {
            Variant::Full => None,
            Variant::Pinned(m) | Variant::Reduced(m) | Variant::Degenerate(m) => Some(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseOp {
    pub kind: PrimitiveKind,
    pub variant: Variant,
    /// Shape of the recovered input, for inverses that cannot infer it
    /// from their operands (gathernd, reshape).
    pub shape: Option<Shape>,
}

/// Result of applying an inverse op.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub outputs: Vec<Value>,
    /// Violation of constraints that couple several inputs (duplicate
    /// agreement, pinned constants); zero when satisfied.
    pub joint: f64,
}

fn unsupported(msg: impl Into<String>) -> Error {
    Error::UnsupportedKind(msg.into())
}

fn const_index(mask: &[bool]) -> usize {
    mask.iter().position(|&c| c).expect("mask has a constant")
}

impl InverseOp {
    pub fn full(kind: PrimitiveKind) -> InverseOp {
        InverseOp {
            kind,
            variant: Variant::Full,
            shape: None,
        }
    }

    /// Choose the inverse for a forward op given which inputs are constant.
    /// `input_shapes` are the forward input shapes.
    pub fn for_constants(
        kind: &PrimitiveKind,
        constants: &[Option<Value>],
        input_shapes: &[Shape],
    ) -> Result<InverseOp> {
        let mask: Vec<bool> = constants.iter().map(Option::is_some).collect();
        let n_const = mask.iter().filter(|&&c| c).count();
        let k = kind.clone();
        if n_const == mask.len() {
            return Err(unsupported(format!("{kind}: every input is constant; fold constants first")));
        }
        let make = |variant, shape| Ok(InverseOp { kind: k.clone(), variant, shape });
        match kind {
            GatherNd => {
                if mask != [false, true] {
                    return Err(unsupported("gathernd needs constant indices"));
                }
                return make(Variant::Reduced(mask), Some(input_shapes[0].clone()));
            }
            Scatter => {
                if mask != [false, true, true] {
                    return Err(unsupported("scatter needs constant indices and shape"));
                }
                return make(Variant::Reduced(mask), None);
            }
            Reshape => {
                if mask != [false, true] {
                    return Err(unsupported("reshape needs a constant shape"));
                }
                return make(Variant::Reduced(mask), Some(input_shapes[0].clone()));
            }
            _ => {}
        }
        if n_const == 0 {
            return make(Variant::Full, None);
        }
        if !matches!(kind, Add | Sub | Mul | Div | Pow | Log) {
            return make(Variant::Pinned(mask), None);
        }
        let ci = const_index(&mask);
        let c = constants[ci].as_ref().unwrap();
        let elems = c
            .elements()
            .ok_or_else(|| Error::TypeMismatch(format!("{kind}: non-numeric constant {c}")))?;
        if matches!(c, Value::Bool(_)) {
            return Err(Error::TypeMismatch(format!("{kind}: boolean constant")));
        }
        let scalar = elems.len() == 1 && !matches!(c, Value::Tensor { .. });
        let any = |p: &dyn Fn(f64) -> bool| elems.iter().any(|&v| p(v));
        // (never valid, degenerate) predicates on the constant
        let (invalid, degenerate): (&dyn Fn(f64) -> bool, &dyn Fn(f64) -> bool) = match (kind, ci) {
            (Add, _) | (Sub, _) => (&|_| false, &|_| false),
            (Mul, _) => (&|_| false, &|v| v == 0.0),
            (Div, 1) => (&|v| v == 0.0, &|_| false),
            (Div, _) => (&|_| false, &|v| v == 0.0),
            (Pow, 1) => (&|_| false, &|v| v == 0.0),
            (Pow, _) => (&|v| v <= 0.0, &|v| v == 1.0),
            (Log, 0) => (&|v| v <= 0.0 || v == 1.0, &|_| false),
            (Log, _) => (&|v| v <= 0.0, &|v| v == 1.0),
            _ => unreachable!(),
        };
        if any(invalid) {
            return Err(unsupported(format!(
                "{kind}: constant operand {c} makes the forward op undefined"
            )));
        }
        if any(degenerate) {
            if scalar {
                return make(Variant::Degenerate(mask), None);
            }
            return make(Variant::Pinned(mask), None);
        }
        make(Variant::Reduced(mask), None)
    }

    pub fn const_mask(&self) -> Vec<bool> {
        match self.variant.mask() {
            Some(m) => m.to_vec(),
            None => vec![false; self.kind.arity().0],
        }
    }

    pub fn n_y(&self) -> usize {
        self.kind.arity().1
    }

    pub fn n_const(&self) -> usize {
        self.const_mask().iter().filter(|&&c| c).count()
    }

    pub fn n_outputs(&self) -> usize {
        self.kind.arity().0 - self.n_const()
    }

    pub fn n_theta(&self) -> usize {
        self.param_spaces().len()
    }

    /// `(inputs, outputs)`: inputs are `y`, then constants, then `θ`.
    pub fn arity(&self) -> (usize, usize) {
        (self.n_y() + self.n_const() + self.n_theta(), self.n_outputs())
    }

    /// Parameter space of each θ port.
    pub fn param_spaces(&self) -> Vec<ParamSpace> {
        use ParamSpace as S;
        match &self.variant {
            Variant::Full | Variant::Pinned(_) => full_params(&self.kind),
            Variant::Reduced(_) => match self.kind {
                GatherNd => vec![S::RealLine],
                _ => vec![],
            },
            Variant::Degenerate(m) => match (&self.kind, const_index(m)) {
                (Mul, _) => vec![S::RealLine],
                (Div, _) => vec![S::RealNonzero],
                (Pow, 1) => vec![S::RealPositive],
                (Pow, _) => vec![S::RealLine],
                (Log, _) => vec![S::RealPositiveNotOne],
                _ => unreachable!(),
            },
        }
    }

    /// Shape of each θ port given the forward output shape and constants.
    pub fn param_shapes(&self, y_shape: &[usize], constants: &[Value]) -> Vec<Shape> {
        match (&self.variant, &self.kind) {
            (Variant::Reduced(_), GatherNd) => {
                let n = self.shape.as_ref().map_or(0, |s| s.iter().product());
                let mut used: Vec<usize> = constants[0]
                    .elements()
                    .unwrap_or_default()
                    .into_iter()
                    .map(|v| v as usize)
                    .collect();
                used.sort_unstable();
                used.dedup();
                vec![vec![n - used.len()]]
            }
            _ => vec![y_shape.to_vec(); self.n_theta()],
        }
    }

    /// Domain of each `y` port.
    pub fn y_domains(&self) -> Vec<ParamSpace> {
        use ParamSpace as S;
        let n = self.n_y();
        match &self.variant {
            Variant::Full | Variant::Pinned(_) => match &self.kind {
                Pow | Exp => vec![S::RealPositive],
                Abs | Sqr => vec![S::RealNonneg],
                Cos | Sin => vec![S::Interval(-1.0, 1.0)],
                Clip(a, b) => vec![S::Interval(*a, *b)],
                Gt | Lt | Eq | And | Or | Xor => vec![S::boolean()],
                _ => vec![S::RealLine; n],
            },
            Variant::Reduced(m) => match (&self.kind, const_index(m)) {
                (Div, 0) => vec![S::RealNonzero],
                (Pow, _) => vec![S::RealPositive],
                (Log, 1) => vec![S::RealNonzero],
                _ => vec![S::RealLine],
            },
            Variant::Degenerate(_) => vec![S::RealLine],
        }
    }

    /// Whether each output carries booleans, given whether `y` does.
    fn bool_outputs(&self, y_is_bool: bool) -> Vec<bool> {
        let mask = self.const_mask();
        let all: Vec<bool> = match self.kind {
            And | Or | Xor => vec![true, true],
            Select => vec![y_is_bool, y_is_bool, true],
            Dupl(_) => vec![y_is_bool],
            _ => vec![false; self.kind.arity().0],
        };
        all.into_iter().zip(mask).filter(|(_, c)| !c).map(|(b, _)| b).collect()
    }

    /// Apply the inverse without domain checks. Results may be non-finite
    /// when inputs lie outside the domain.
    pub fn apply(&self, y: &[Value], constants: &[Value], theta: &[Value]) -> Result<Applied> {
        self.check_ports(y, constants, theta)?;
        match (&self.variant, &self.kind) {
            (Variant::Reduced(_), GatherNd) => return self.apply_gather(y, constants, theta),
            (Variant::Reduced(_), Scatter) => return self.apply_scatter(y, constants),
            (Variant::Reduced(_), Reshape) => {
                let shape = self.shape.clone().unwrap_or_default();
                let data = y[0].elements().ok_or_else(|| Error::TypeMismatch("reshape⁻¹ of ⊥".into()))?;
                if data.len() != shape.iter().product::<usize>() {
                    return Err(Error::ShapeMismatch(format!(
                        "reshape⁻¹ to {shape:?} from {} elements",
                        data.len()
                    )));
                }
                return Ok(Applied {
                    outputs: vec![Value::from_elements(&shape, data)],
                    joint: 0.0,
                });
            }
            _ => {}
        }
        let all: Vec<&Value> = y.iter().chain(constants).chain(theta).collect();
        if all.iter().any(|v| v.is_undefined()) {
            return Ok(Applied {
                outputs: vec![Value::Undefined; self.n_outputs()],
                joint: 0.0,
            });
        }
        let shape = broadcast_shape(self, &all)?;
        let n = shape.as_ref().map_or(1, |s| s.iter().product());
        let n_out = self.n_outputs();
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); n_out];
        let mut joint = 0.0;
        let (mut yl, mut cl, mut tl) = (vec![0.0; y.len()], vec![0.0; constants.len()], vec![0.0; theta.len()]);
        for i in 0..n {
            fill(&mut yl, y, i);
            fill(&mut cl, constants, i);
            fill(&mut tl, theta, i);
            let (xs, j) = self.kernel(&yl, &cl, &tl);
            for (col, x) in cols.iter_mut().zip(xs) {
                col.push(x);
            }
            joint += j;
        }
        let y_is_bool = matches!(y.first(), Some(Value::Bool(_)));
        let outputs = cols
            .into_iter()
            .zip(self.bool_outputs(y_is_bool))
            .map(|(col, is_bool)| match (&shape, is_bool) {
                (None, true) => bool_value(col[0]),
                (None, false) => Value::Real(col[0]),
                (Some(s), _) => Value::Tensor {
                    shape: s.clone(),
                    data: col,
                },
            })
            .collect();
        Ok(Applied { outputs, joint })
    }

    fn check_ports(&self, y: &[Value], constants: &[Value], theta: &[Value]) -> Result<()> {
        let expected = (self.n_y(), self.n_const(), self.n_theta());
        let got = (y.len(), constants.len(), theta.len());
        if expected != got {
            return Err(Error::ArityMismatch {
                kind: self.to_string(),
                expected: expected.0 + expected.1 + expected.2,
                got: got.0 + got.1 + got.2,
            });
        }
        Ok(())
    }

    /// Scalar kernel: returns the non-constant outputs and the joint violation.
    fn kernel(&self, y: &[f64], c: &[f64], t: &[f64]) -> (Vec<f64>, f64) {
        match &self.variant {
            Variant::Full if matches!(self.kind, Dupl(_)) => Self::kernel_dupl(y),
            Variant::Full => (full_kernel(&self.kind, y, t), 0.0),
            Variant::Pinned(mask) => {
                let xs = full_kernel(&self.kind, y, t);
                let mut out = Vec::with_capacity(xs.len());
                let mut joint = 0.0;
                let mut ci = 0;
                for (x, &is_const) in xs.into_iter().zip(mask) {
                    if is_const {
                        joint += (x - c[ci]).abs();
                        ci += 1;
                    } else {
                        out.push(x);
                    }
                }
                (out, if joint.is_nan() { f64::INFINITY } else { joint })
            }
            Variant::Reduced(mask) => (vec![reduced_kernel(&self.kind, const_index(mask), y[0], c[0])], 0.0),
            Variant::Degenerate(mask) => {
                let target = match (&self.kind, const_index(mask)) {
                    (Mul, _) | (Div, _) | (Log, _) => 0.0,
                    (Pow, _) => 1.0,
                    _ => unreachable!(),
                };
                (vec![t[0]], (y[0] - target).abs())
            }
        }
    }

    fn apply_gather(&self, y: &[Value], constants: &[Value], theta: &[Value]) -> Result<Applied> {
        let n: usize = self.shape.as_ref().map_or(0, |s| s.iter().product());
        let idx = index_elements(&constants[0], n)?;
        let ys = y[0]
            .elements()
            .ok_or_else(|| Error::TypeMismatch("gathernd⁻¹ of ⊥".into()))?;
        let free = theta[0]
            .elements()
            .ok_or_else(|| Error::TypeMismatch("gathernd⁻¹ parameter is ⊥".into()))?;
        if ys.len() != idx.len() {
            return Err(Error::ShapeMismatch(format!(
                "gathernd⁻¹: {} values for {} indices",
                ys.len(),
                idx.len()
            )));
        }
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        for (&i, &v) in idx.iter().zip(&ys) {
            sums[i] += v;
            counts[i] += 1;
        }
        let mut x = vec![0.0; n];
        let mut next_free = free.iter();
        for i in 0..n {
            x[i] = if counts[i] > 0 {
                sums[i] / counts[i] as f64
            } else {
                *next_free
                    .next()
                    .ok_or_else(|| Error::ShapeMismatch("gathernd⁻¹ parameter too short".into()))?
            };
        }
        let joint = idx.iter().zip(&ys).map(|(&i, &v)| (v - x[i]).abs()).sum();
        let shape = self.shape.clone().unwrap_or_else(|| vec![n]);
        Ok(Applied {
            outputs: vec![Value::from_elements(&shape, x)],
            joint,
        })
    }

    fn apply_scatter(&self, y: &[Value], constants: &[Value]) -> Result<Applied> {
        let ys = y[0]
            .elements()
            .ok_or_else(|| Error::TypeMismatch("scatter⁻¹ of ⊥".into()))?;
        let idx = index_elements(&constants[0], ys.len())?;
        let mut hit = vec![false; ys.len()];
        let z: Vec<f64> = idx
            .iter()
            .map(|&i| {
                hit[i] = true;
                ys[i]
            })
            .collect();
        let joint = ys.iter().zip(&hit).filter(|(_, &h)| !h).map(|(v, _)| v.abs()).sum();
        Ok(Applied {
            outputs: vec![Value::vector(z)],
            joint,
        })
    }

    /// Parameters under which the inverse maps `y = f(x)` back to `x`.
    /// `x` holds every forward input, constants included.
    pub fn extract(&self, x: &[Value], y: &[Value]) -> Result<Vec<Value>> {
        let fx = forward_eval(&self.kind, x)?;
        if fx.iter().any(Value::is_undefined) || !values_close(&fx, y) {
            return Err(Error::NotInDomain(format!(
                "{}: forward of the inputs does not reproduce the outputs",
                self.kind
            )));
        }
        if self.n_theta() == 0 {
            return Ok(Vec::new());
        }
        let mask = self.const_mask();
        let constants: Vec<Value> = x.iter().zip(&mask).filter(|(_, &c)| c).map(|(v, _)| v.clone()).collect();
        match (&self.variant, &self.kind) {
            (Variant::Reduced(_), GatherNd) => {
                let n: usize = self.shape.as_ref().map_or(0, |s| s.iter().product());
                let idx = index_elements(&constants[0], n)?;
                let xs = x[0].elements().unwrap_or_default();
                let free: Vec<f64> = (0..n).filter(|i| !idx.contains(i)).map(|i| xs[i]).collect();
                return Ok(vec![Value::vector(free)]);
            }
            (Variant::Degenerate(m), _) => {
                return Ok(vec![x[1 - const_index(m)].clone()]);
            }
            _ => {}
        }
        let all: Vec<&Value> = x.iter().chain(y).collect();
        let shape = broadcast_shape(self, &all)?;
        let n = shape.as_ref().map_or(1, |s| s.iter().product());
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); self.n_theta()];
        let (mut xl, mut yl) = (vec![0.0; x.len()], vec![0.0; y.len()]);
        for i in 0..n {
            fill(&mut xl, x, i);
            fill(&mut yl, y, i);
            let t = full_extract(&self.kind, &xl, &yl)
                .map_err(|m| Error::Unreachable(format!("{}: {m}", self.kind)))?;
            for (col, v) in cols.iter_mut().zip(t) {
                col.push(v);
            }
        }
        Ok(cols
            .into_iter()
            .map(|col| match &shape {
                None => Value::Real(col[0]),
                Some(s) => Value::Tensor {
                    shape: s.clone(),
                    data: col,
                },
            })
            .collect())
    }
}

fn fill(dst: &mut [f64], src: &[Value], i: usize) {
    for (d, v) in dst.iter_mut().zip(src) {
        *d = lane(v, i);
    }
}

fn index_elements(v: &Value, bound: usize) -> Result<Vec<usize>> {
    let elems = v
        .elements()
        .ok_or_else(|| Error::TypeMismatch(format!("indices must be numeric, got {v}")))?;
    elems
        .into_iter()
        .map(|i| {
            if i >= 0.0 && i.fract() == 0.0 && (i as usize) < bound {
                Ok(i as usize)
            } else {
                Err(Error::ShapeMismatch(format!("index {i} out of range 0..{bound}")))
            }
        })
        .collect()
}

fn values_close(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(p, q)| match (p, q) {
            (Value::Bool(x), Value::Bool(y)) => x == y,
            _ => match (p.elements(), q.elements()) {
                (Some(xs), Some(ys)) => {
                    xs.len() == ys.len()
                        && xs
                            .iter()
                            .zip(&ys)
                            .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
                }
                _ => false,
            },
        })
}

fn full_params(kind: &PrimitiveKind) -> Vec<ParamSpace> {
    use ParamSpace as S;
    match kind {
        Add | Sub => vec![S::RealLine],
        Mul => vec![S::RealNonzero, S::boolean()],
        Div => vec![S::RealNonzero],
        Pow => vec![S::RealPositiveNotOne, S::boolean(), S::RealLine],
        Log => vec![S::RealPositiveNotOne],
        Abs | Sqr => vec![S::sign()],
        Min | Max => vec![S::RealNonneg, S::boolean()],
        Cos | Sin | Tan => vec![S::IntegerLine],
        Gt | Lt => vec![S::RealLine, S::RealPositive],
        Eq => vec![S::RealLine, S::RealNonzero],
        And | Or | Xor => vec![S::boolean(), S::boolean()],
        Select => vec![S::boolean(), S::RealLine],
        Clip(..) => vec![S::RealNonneg],
        Dupl(_) | Neg | Exp => vec![],
        GatherNd | Scatter | Reshape => vec![],
    }
}

fn sel(c: f64, a: f64, b: f64) -> f64 {
    if c != 0.0 {
        a
    } else {
        b
    }
}

fn sign_pow(k: f64) -> f64 {
    if k.rem_euclid(2.0) == 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Preimage selected by `θ` for each `y`. Returns every forward input.
fn full_kernel(kind: &PrimitiveKind, y: &[f64], t: &[f64]) -> Vec<f64> {
    let b = |v: f64| v != 0.0;
    match kind {
        Add => vec![y[0] - t[0], t[0]],
        Sub => vec![y[0] + t[0], t[0]],
        Mul => {
            let q = y[0] / t[0];
            vec![sel(t[1], q, t[0]), sel(t[1], t[0], q)]
        }
        Div => vec![y[0] * t[0], t[0]],
        Pow => {
            // selector: (y ≠ 1) ∨ θ₂
            let c = y[0] != 1.0 || b(t[1]);
            if c {
                vec![t[0], y[0].ln() / t[0].ln()]
            } else {
                vec![1.0, t[2]]
            }
        }
        Log => vec![t[0], t[0].powf(y[0])],
        Abs => vec![t[0] * y[0]],
        Sqr => vec![t[0] * y[0].sqrt()],
        Min => vec![sel(t[1], y[0], y[0] + t[0]), sel(t[1], y[0] + t[0], y[0])],
        Max => vec![sel(t[1], y[0], y[0] - t[0]), sel(t[1], y[0] - t[0], y[0])],
        Cos => vec![2.0 * PI * (t[0] / 2.0).ceil() + sign_pow(t[0]) * y[0].acos()],
        Sin => vec![PI * t[0] + sign_pow(t[0]) * y[0].asin()],
        Tan => vec![PI * t[0] + y[0].atan()],
        Gt => vec![t[0], sel(y[0], t[0] - t[1], t[0] + t[1])],
        Lt => vec![t[0], sel(y[0], t[0] + t[1], t[0] - t[1])],
        Eq => vec![t[0], sel(y[0], t[0], t[0] + t[1])],
        And => {
            if b(y[0]) {
                vec![1.0, 1.0]
            } else {
                vec![bool_lane(b(t[0]) && b(t[1])), bool_lane(b(t[0]) ^ b(t[1]))]
            }
        }
        Or => OR_INVERSE[usize::from(b(y[0]))][usize::from(b(t[0]))][usize::from(b(t[1]))].to_vec(),
        Xor => vec![t[0], bool_lane(b(t[0]) ^ b(y[0]))],
        Select => {
            if b(t[0]) {
                vec![y[0], t[1], 1.0]
            } else {
                vec![t[1], y[0], 0.0]
            }
        }
        Clip(a, hi) => {
            let v = y[0];
            vec![if v == *a {
                v - t[0]
            } else if v == *hi {
                v + t[0]
            } else {
                v
            }]
        }
        Neg => vec![-y[0]],
        Exp => vec![y[0].ln()],
        Dupl(_) => unreachable!("dupl inverse is handled by the mean kernel"),
        GatherNd | Scatter | Reshape => unreachable!("array inverses need constants"),
    }
}

/// Inverse of `or`, indexed `[y][θ₁][θ₂] -> (x₁, x₂)`. Every θ is sound and
/// the three preimages of `true` are all reached.
pub const OR_INVERSE: [[[[f64; 2]; 2]; 2]; 2] = [
    [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]],
    // y = 1: (θ₁ ∨ ¬θ₂, θ₁ ⊕ θ₂)
    [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 1.0], [1.0, 0.0]]],
];

fn reduced_kernel(kind: &PrimitiveKind, const_slot: usize, y: f64, c: f64) -> f64 {
    match (kind, const_slot) {
        (Add, _) => y - c,
        (Sub, 1) => y + c,
        (Sub, _) => c - y,
        (Mul, _) => y / c,
        (Div, 1) => y * c,
        (Div, _) => c / y,
        (Pow, 1) => y.powf(1.0 / c),
        (Pow, _) => y.ln() / c.ln(),
        (Log, 0) => c.powf(y),
        (Log, _) => c.powf(1.0 / y),
        _ => unreachable!("{kind} has no reduced inverse"),
    }
}

impl InverseOp {
    fn kernel_dupl(y: &[f64]) -> (Vec<f64>, f64) {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let spread = y.iter().map(|v| (v - mean).abs()).sum();
        (vec![mean], spread)
    }
}

/// Scalar extraction for the full inverse: θ with `f⁻¹(f(x); θ) = x`.
fn full_extract(kind: &PrimitiveKind, x: &[f64], y: &[f64]) -> std::result::Result<Vec<f64>, String> {
    use crate::space::EPSILON;
    let t = match kind {
        Add | Sub | Div => vec![x[1]],
        Mul => {
            if x[1].abs() >= EPSILON {
                vec![x[1], 1.0]
            } else if x[0].abs() >= EPSILON {
                vec![x[0], 0.0]
            } else {
                return Err("both factors are zero".into());
            }
        }
        Pow => {
            let (base, ex) = (x[0], x[1]);
            let usable = ParamSpace::RealPositiveNotOne.contains(base);
            if y[0] != 1.0 {
                if !usable {
                    return Err(format!("base {base} is within ε of 1"));
                }
                vec![base, 0.0, 0.0]
            } else if ex == 0.0 && usable {
                vec![base, 1.0, 0.0]
            } else if base == 1.0 {
                vec![2.0, 0.0, ex]
            } else {
                return Err(format!("base {base} is within ε of 1"));
            }
        }
        Log => vec![x[0]],
        Abs | Sqr => vec![if x[0] >= 0.0 { 1.0 } else { -1.0 }],
        Min => vec![(x[0] - x[1]).abs(), bool_lane(x[0] <= x[1])],
        Max => vec![(x[0] - x[1]).abs(), bool_lane(x[0] >= x[1])],
        Cos | Sin | Tan => {
            let guess = match kind {
                Cos => (x[0] / PI).floor(),
                _ => (x[0] / PI).round(),
            };
            let best = [guess - 1.0, guess, guess + 1.0]
                .into_iter()
                .min_by(|a, b| {
                    let da = (full_kernel(kind, y, &[*a])[0] - x[0]).abs();
                    let db = (full_kernel(kind, y, &[*b])[0] - x[0]).abs();
                    da.total_cmp(&db)
                })
                .unwrap();
            vec![best]
        }
        Gt | Lt => {
            let gap = (x[0] - x[1]).abs();
            if gap < EPSILON {
                return Err("operands are within ε of each other".into());
            }
            vec![x[0], gap]
        }
        Eq => {
            let gap = x[1] - x[0];
            if y[0] != 0.0 {
                vec![x[0], 1.0]
            } else if gap.abs() < EPSILON {
                return Err("operands are within ε of each other".into());
            } else {
                vec![x[0], gap]
            }
        }
        And | Or => {
            let mut found = None;
            'search: for t1 in [0.0, 1.0] {
                for t2 in [0.0, 1.0] {
                    let cand = full_kernel(kind, y, &[t1, t2]);
                    if cand[0] == x[0] && cand[1] == x[1] {
                        found = Some(vec![t1, t2]);
                        break 'search;
                    }
                }
            }
            found.ok_or("no parameter reproduces the inputs")?
        }
        Xor => vec![x[0], 0.0],
        Select => {
            let c = x[2] != 0.0;
            vec![bool_lane(c), if c { x[1] } else { x[0] }]
        }
        Clip(a, b) => {
            let v = y[0];
            vec![if v == *a {
                a - x[0]
            } else if v == *b {
                x[0] - b
            } else {
                0.0
            }]
        }
        _ => vec![],
    };
    Ok(t)
}

impl InverseOp {
    /// Domain check used by untotalized evaluation.
    pub fn inputs_in_domain(&self, y: &[Value], theta: &[Value]) -> bool {
        self.y_domains().iter().zip(y).all(|(d, v)| d.contains_value(v))
            && self.param_spaces().iter().zip(theta).all(|(s, v)| s.contains_value(v))
    }

    /// Untotalized evaluation: ⊥ outputs when an input leaves its domain or
    /// a result is not finite, underflowed, or outside the forward domain.
    pub fn eval_strict(&self, y: &[Value], constants: &[Value], theta: &[Value]) -> Result<Applied> {
        self.check_ports(y, constants, theta)?;
        let undefined = || Applied {
            outputs: vec![Value::Undefined; self.n_outputs()],
            joint: 0.0,
        };
        if y.iter().chain(theta).any(Value::is_undefined) || !self.inputs_in_domain(y, theta) {
            return Ok(undefined());
        }
        let applied = self.apply(y, constants, theta)?;
        let domains = self.kind.input_domains();
        let free_domains = domains.iter().zip(self.const_mask()).filter(|(_, c)| !c).map(|(d, _)| d);
        let representable = applied
            .outputs
            .iter()
            .zip(free_domains)
            .all(|(v, d)| is_finite_value(v) && !has_subnormal(v) && d.contains_value(v));
        if !representable {
            return Ok(undefined());
        }
        Ok(applied)
    }

    /// Totalized evaluation: non-finite results are saturated to finite
    /// numbers and charged [`SATURATION_PENALTY`] per element.
    pub fn eval_total(&self, y: &[Value], constants: &[Value], theta: &[Value]) -> Result<Applied> {
        let mut applied = self.apply(y, constants, theta)?;
        let mut saturated = 0usize;
        for v in applied.outputs.iter_mut() {
            saturate(v, &mut saturated);
        }
        if !applied.joint.is_finite() {
            applied.joint = SATURATION_PENALTY;
        }
        applied.joint += saturated as f64 * SATURATION_PENALTY;
        Ok(applied)
    }

    /// Per-input distances to the domain plus the joint violation.
    pub fn domain_distance(&self, y: &[Value], constants: &[Value], theta: &[Value]) -> Result<f64> {
        let per_input: f64 = self
            .y_domains()
            .iter()
            .zip(y)
            .map(|(d, v)| d.distance_value(v))
            .chain(self.param_spaces().iter().zip(theta).map(|(s, v)| s.distance_value(v)))
            .sum();
        let joint = self.apply(y, constants, theta)?.joint;
        Ok(per_input + joint)
    }
}

pub(crate) fn is_finite_value(v: &Value) -> bool {
    match v {
        Value::Real(x) => x.is_finite(),
        Value::Tensor { data, .. } => data.iter().all(|x| x.is_finite()),
        Value::Undefined => false,
        _ => true,
    }
}

/// Nonzero results that underflowed past the normal range carry too few
/// significant bits to reproduce `y`.
fn has_subnormal(v: &Value) -> bool {
    let sub = |x: &f64| *x != 0.0 && x.abs() < f64::MIN_POSITIVE;
    match v {
        Value::Real(x) => sub(x),
        Value::Tensor { data, .. } => data.iter().any(sub),
        _ => false,
    }
}

fn saturate_f64(x: &mut f64, count: &mut usize) {
    if !x.is_finite() {
        *count += 1;
        *x = if x.is_nan() { 0.0 } else { x.clamp(-f64::MAX, f64::MAX) };
    }
}

pub(crate) fn saturate(v: &mut Value, count: &mut usize) {
    match v {
        Value::Real(x) => saturate_f64(x, count),
        Value::Tensor { data, .. } => data.iter_mut().for_each(|x| saturate_f64(x, count)),
        _ => {}
    }
}

/// Untotalized parametric inverse of a primitive with no constant inputs.
pub fn inverse_eval(kind: &PrimitiveKind, y: &[Value], theta: &[Value]) -> Result<Vec<Value>> {
    if matches!(kind, GatherNd | Scatter | Reshape) {
        return Err(unsupported(format!("{kind} needs constant index/shape operands")));
    }
    Ok(InverseOp::full(kind.clone()).eval_strict(y, &[], theta)?.outputs)
}

/// Parameters reproducing `x` under [`inverse_eval`].
pub fn extract_theta(kind: &PrimitiveKind, x: &[Value], y: &[Value]) -> Result<Vec<Value>> {
    if matches!(kind, GatherNd | Scatter | Reshape) {
        return Err(unsupported(format!("{kind} needs constant index/shape operands")));
    }
    InverseOp::full(kind.clone()).extract(x, y)
}

impl fmt::Display for InverseOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "inv:{}", self.kind)?;
        let mask_str = |m: &[bool]| m.iter().map(|&c| if c { 'c' } else { 'x' }).collect::<String>();
        match &self.variant {
            Variant::Full => {}
            Variant::Pinned(m) => write!(f, "@pin={}", mask_str(m))?,
            Variant::Reduced(m) => write!(f, "@red={}", mask_str(m))?,
            Variant::Degenerate(m) => write!(f, "@deg={}", mask_str(m))?,
        }
        if let Some(s) = &self.shape {
            let dims: Vec<String> = s.iter().map(usize::to_string).collect();
            write!(f, "@shape=[{}]", dims.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for InverseOp {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let rest = s.strip_prefix("inv:").ok_or_else(|| format!("{s:?} is not an inverse kind"))?;
        let mut parts = rest.split('@');
        let kind: PrimitiveKind = parts.next().unwrap_or_default().parse()?;
        let mut op = InverseOp::full(kind);
        for attr in parts {
            let (key, val) = attr.split_once('=').ok_or_else(|| format!("bad attribute {attr:?}"))?;
            let mask = || -> std::result::Result<Vec<bool>, String> {
                let m: Vec<bool> = val
                    .chars()
                    .map(|c| match c {
                        'c' => Ok(true),
                        'x' => Ok(false),
                        other => Err(format!("bad mask character {other:?}")),
                    })
                    .collect::<std::result::Result<_, _>>()?;
                if m.len() != op.kind.arity().0 || m.iter().all(|&c| c) || !m.iter().any(|&c| c) {
                    return Err(format!("mask {val:?} does not fit {}", op.kind));
                }
                Ok(m)
            };
            match key {
                "pin" => op.variant = Variant::Pinned(mask()?),
                "red" => op.variant = Variant::Reduced(mask()?),
                "deg" => op.variant = Variant::Degenerate(mask()?),
                "shape" => {
                    let inner = val
                        .strip_prefix('[')
                        .and_then(|v| v.strip_suffix(']'))
                        .ok_or_else(|| format!("bad shape {val:?}"))?;
                    let dims = if inner.is_empty() {
                        Vec::new()
                    } else {
                        inner
                            .split(',')
                            .map(|d| d.parse::<usize>().map_err(|_| format!("bad dim {d:?}")))
                            .collect::<std::result::Result<_, _>>()?
                    };
                    op.shape = Some(dims);
                }
                other => return Err(format!("unknown attribute {other:?}")),
            }
        }
        let valid = match (&op.variant, &op.kind) {
            (Variant::Full, GatherNd | Scatter | Reshape) => false,
            (Variant::Reduced(m), GatherNd | Reshape) => m == &[false, true] && op.shape.is_some(),
            (Variant::Reduced(m), Scatter) => m == &[false, true, true],
            (Variant::Reduced(m) | Variant::Degenerate(m), Add | Sub | Mul | Div | Pow | Log) => {
                m.iter().filter(|&&c| c).count() == 1
            }
            (Variant::Reduced(_) | Variant::Degenerate(_), _) => false,
            (Variant::Pinned(_), GatherNd | Scatter | Reshape) => false,
            _ => true,
        };
        if !valid {
            return Err(format!("{s:?} is not a valid inverse variant"));
        }
        Ok(op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn r(v: f64) -> Value {
        Value::Real(v)
    }

    fn reals(vals: &[Value]) -> Vec<f64> {
        vals.iter().map(|v| v.as_f64().unwrap()).collect()
    }

    #[test]
    fn table_examples() {
        assert_eq!(reals(&inverse_eval(&Add, &[r(5.0)], &[r(2.0)]).unwrap()), vec![3.0, 2.0]);
        assert_eq!(
            reals(&inverse_eval(&Mul, &[r(6.0)], &[r(2.0), r(1.0)]).unwrap()),
            vec![3.0, 2.0]
        );
        assert_eq!(reals(&inverse_eval(&Cos, &[r(1.0)], &[r(0.0)]).unwrap()), vec![0.0]);
        assert_eq!(reals(&inverse_eval(&Abs, &[r(3.0)], &[r(-1.0)]).unwrap()), vec![-3.0]);
    }

    #[test]
    fn out_of_domain_is_bottom() {
        assert_eq!(inverse_eval(&Cos, &[r(2.0)], &[r(0.0)]).unwrap(), vec![Value::Undefined]);
        assert_eq!(
            inverse_eval(&Div, &[r(2.0)], &[r(0.0)]).unwrap(),
            vec![Value::Undefined, Value::Undefined]
        );
        assert_eq!(inverse_eval(&Sqr, &[r(4.0)], &[r(0.5)]).unwrap(), vec![Value::Undefined]);
        assert!(matches!(
            inverse_eval(&Add, &[r(1.0)], &[]),
            Err(Error::ArityMismatch { .. })
        ));
    }

    #[test]
    fn extraction_examples() {
        let t = extract_theta(&Add, &[r(3.0), r(2.0)], &[r(5.0)]).unwrap();
        assert_eq!(t, vec![r(2.0)]);
        let x = 2.0 * PI + 0.5;
        let t = extract_theta(&Cos, &[r(x)], &[r(x.cos())]).unwrap();
        assert_eq!(t, vec![r(2.0)]);
        let t = extract_theta(&Min, &[r(4.0), r(7.0)], &[r(4.0)]).unwrap();
        assert_eq!(t, vec![r(3.0), r(1.0)]);
        assert!(matches!(
            extract_theta(&Add, &[r(3.0), r(2.0)], &[r(6.0)]),
            Err(Error::NotInDomain(_))
        ));
    }

    #[test]
    fn cos_extraction_matches_scan() {
        // independent oracle: scan θ over [-8, 8] for the exact preimage
        for &x in &[-7.0, -3.5, -0.2, 0.0, 1.0, 3.3, 6.5, 2.0 * PI + 0.5] {
            let y = f64::cos(x);
            let scanned = (-8..=8)
                .map(|k| k as f64)
                .min_by(|a, b| {
                    let da = (full_kernel(&Cos, &[y], &[*a])[0] - x).abs();
                    let db = (full_kernel(&Cos, &[y], &[*b])[0] - x).abs();
                    da.total_cmp(&db)
                })
                .unwrap();
            let t = extract_theta(&Cos, &[r(x)], &[r(y)]).unwrap();
            assert_eq!(t, vec![r(scanned)], "x = {x}");
        }
    }

    #[test]
    fn dupl_inverse_is_mean_with_disagreement() {
        let op = InverseOp::full(Dupl(3));
        let a = op.apply(&[r(1.0), r(2.0), r(3.0)], &[], &[]).unwrap();
        assert_eq!(a.outputs, vec![r(2.0)]);
        assert_eq!(a.joint, 2.0);
        let a = op.apply(&[r(4.0), r(4.0), r(4.0)], &[], &[]).unwrap();
        assert_eq!(a.joint, 0.0);
    }

    #[test]
    fn reduced_variants() {
        let add = InverseOp::for_constants(&Add, &[None, Some(r(3.0))], &[vec![], vec![]]).unwrap();
        assert_eq!(add.n_theta(), 0);
        assert_eq!(add.apply(&[r(10.0)], &[r(3.0)], &[]).unwrap().outputs, vec![r(7.0)]);

        let sub = InverseOp::for_constants(&Sub, &[Some(r(3.0)), None], &[vec![], vec![]]).unwrap();
        assert_eq!(sub.apply(&[r(10.0)], &[r(3.0)], &[]).unwrap().outputs, vec![r(-7.0)]);

        let mul0 = InverseOp::for_constants(&Mul, &[None, Some(r(0.0))], &[vec![], vec![]]).unwrap();
        assert!(matches!(mul0.variant, Variant::Degenerate(_)));
        let a = mul0.apply(&[r(2.0)], &[r(0.0)], &[r(5.0)]).unwrap();
        assert_eq!((a.outputs, a.joint), (vec![r(5.0)], 2.0));

        let exp = InverseOp::for_constants(&Pow, &[Some(r(E)), None], &[vec![], vec![]]).unwrap();
        let x = exp.apply(&[r(E.powf(1.5))], &[r(E)], &[]).unwrap().outputs[0].as_f64().unwrap();
        assert!((x - 1.5).abs() < 1e-12);

        assert!(InverseOp::for_constants(&Div, &[None, Some(r(0.0))], &[vec![], vec![]]).is_err());
        let min = InverseOp::for_constants(&Min, &[None, Some(r(1.0))], &[vec![], vec![]]).unwrap();
        assert!(matches!(min.variant, Variant::Pinned(_)));
        assert_eq!(min.n_theta(), 2);
    }

    #[test]
    fn pinned_constant_mismatch_is_joint() {
        let min = InverseOp::for_constants(&Min, &[None, Some(r(5.0))], &[vec![], vec![]]).unwrap();
        // θ = (2, 1): x = (y, y + 2) = (3, 5): matches the constant
        let a = min.apply(&[r(3.0)], &[r(5.0)], &[r(2.0), r(1.0)]).unwrap();
        assert_eq!((a.outputs.clone(), a.joint), (vec![r(3.0)], 0.0));
        let a = min.apply(&[r(3.0)], &[r(5.0)], &[r(1.0), r(1.0)]).unwrap();
        assert_eq!(a.joint, 1.0);
    }

    #[test]
    fn gather_scatter_reshape_inverses() {
        let idx = Value::vector(vec![0.0, 2.0]);
        let g = InverseOp::for_constants(&GatherNd, &[None, Some(idx.clone())], &[vec![5], vec![2]]).unwrap();
        assert_eq!(g.param_shapes(&[2], std::slice::from_ref(&idx)), vec![vec![3]]);
        let a = g
            .apply(&[Value::vector(vec![1.0, 2.0])], std::slice::from_ref(&idx), &[Value::vector(vec![7.0, 8.0, 9.0])])
            .unwrap();
        assert_eq!(a.outputs, vec![Value::vector(vec![1.0, 7.0, 2.0, 8.0, 9.0])]);

        let s = InverseOp::for_constants(
            &Scatter,
            &[None, Some(idx.clone()), Some(Value::Int(4))],
            &[vec![2], vec![2], vec![]],
        )
        .unwrap();
        let a = s
            .apply(&[Value::vector(vec![1.0, 0.5, 2.0, 0.0])], &[idx, Value::Int(4)], &[])
            .unwrap();
        assert_eq!(a.outputs, vec![Value::vector(vec![1.0, 2.0])]);
        assert_eq!(a.joint, 0.5);

        let shape = Value::vector(vec![2.0, 2.0]);
        let rs = InverseOp::for_constants(&Reshape, &[None, Some(shape.clone())], &[vec![4], vec![2]]).unwrap();
        let m = Value::tensor(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let a = rs.apply(&[m], &[shape], &[]).unwrap();
        assert_eq!(a.outputs, vec![Value::vector(vec![1.0, 2.0, 3.0, 4.0])]);
    }

    #[test]
    fn kind_strings_round_trip() {
        let ops = [
            InverseOp::full(Cos),
            InverseOp::for_constants(&Add, &[None, Some(r(1.0))], &[vec![], vec![]]).unwrap(),
            InverseOp::for_constants(&Min, &[Some(r(1.0)), None], &[vec![], vec![]]).unwrap(),
            InverseOp::for_constants(&Mul, &[Some(r(0.0)), None], &[vec![], vec![]]).unwrap(),
            InverseOp::for_constants(&GatherNd, &[None, Some(Value::vector(vec![1.0]))], &[vec![3], vec![1]])
                .unwrap(),
        ];
        for op in ops {
            assert_eq!(op.to_string().parse::<InverseOp>().unwrap(), op);
        }
        assert!("inv:gathernd".parse::<InverseOp>().is_err());
        assert!("inv:add@red=cc".parse::<InverseOp>().is_err());
    }

    #[test]
    fn totalized_eval_saturates() {
        let op = InverseOp::full(Div);
        let a = op.eval_total(&[r(1e300)], &[], &[r(1e300)]).unwrap();
        assert_eq!(a.outputs[0], r(f64::MAX));
        assert_eq!(a.joint, SATURATION_PENALTY);
    }
}
