//! Runtime values flowing along graph edges.

use std::fmt;

use serde_json::json;

/// Tensor dimensions. An empty shape denotes a scalar.
pub type Shape = Vec<usize>;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(f64),
    Int(i64),
    Bool(bool),
    Tensor { shape: Shape, data: Vec<f64> },
    /// Bottom: the result of evaluating outside a domain.
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Real,
    Int,
    Bool,
    Tensor,
}

impl Value {
    pub fn tensor(shape: Shape, data: Vec<f64>) -> Value {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Value::Tensor { shape, data }
    }

    pub fn vector(data: Vec<f64>) -> Value {
        Value::Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn is_undefined(&self) -> bool {
        matches!(self, Value::Undefined)
    }

    pub fn value_type(&self) -> Option<ValueType> {
        match self {
            Value::Real(_) => Some(ValueType::Real),
            Value::Int(_) => Some(ValueType::Int),
            Value::Bool(_) => Some(ValueType::Bool),
            Value::Tensor { .. } => Some(ValueType::Tensor),
            Value::Undefined => None,
        }
    }

    /// Shape of the value; scalars have the empty shape.
    pub fn shape(&self) -> Shape {
        match self {
            Value::Tensor { shape, .. } => shape.clone(),
            _ => Vec::new(),
        }
    }

    /// Numeric view of a scalar (Int promotes, Bool maps to 0/1).
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Real(v) => Some(v),
            Value::Int(v) => Some(v as f64),
            Value::Bool(b) => Some(if b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match *self {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    /// Flattened numeric elements: scalars yield one element.
    pub fn elements(&self) -> Option<Vec<f64>> {
        match self {
            Value::Tensor { data, .. } => Some(data.clone()),
            Value::Undefined => None,
            other => other.as_f64().map(|v| vec![v]),
        }
    }

    pub fn numel(&self) -> usize {
        match self {
            Value::Tensor { data, .. } => data.len(),
            _ => 1,
        }
    }

    /// Rebuild a real value of the given shape from flat elements.
    pub fn from_elements(shape: &[usize], data: Vec<f64>) -> Value {
        if shape.is_empty() {
            Value::Real(data[0])
        } else {
            Value::Tensor {
                shape: shape.to_vec(),
                data,
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Real(v) => json_f64(*v),
            Value::Int(v) => json!(v),
            Value::Bool(b) => json!(b),
            Value::Tensor { shape, data } if shape.len() == 1 => {
                serde_json::Value::Array(data.iter().map(|v| json_f64(*v)).collect())
            }
            Value::Tensor { shape, data } => json!({
                "shape": shape,
                "data": data.iter().map(|v| json_f64(*v)).collect::<Vec<_>>(),
            }),
            Value::Undefined => serde_json::Value::Null,
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Value, String> {
        match v {
            serde_json::Value::Null => Ok(Value::Undefined),
            serde_json::Value::Bool(b) => Ok(Value::Bool(*b)),
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64().filter(|_| !n.to_string().contains(['.', 'e', 'E'])) {
                    Ok(Value::Int(i))
                } else {
                    n.as_f64()
                        .map(Value::Real)
                        .ok_or_else(|| format!("unrepresentable number {n}"))
                }
            }
            serde_json::Value::Array(items) => {
                let data = items
                    .iter()
                    .map(|x| x.as_f64().ok_or_else(|| format!("tensor element {x} is not a number")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Value::vector(data))
            }
            serde_json::Value::Object(map) => {
                let shape: Shape = map
                    .get("shape")
                    .and_then(|s| s.as_array())
                    .ok_or("tensor object needs a \"shape\" array")?
                    .iter()
                    .map(|d| d.as_u64().map(|d| d as usize).ok_or("shape dims must be nonnegative integers"))
                    .collect::<Result<_, _>>()?;
                let data: Vec<f64> = map
                    .get("data")
                    .and_then(|s| s.as_array())
                    .ok_or("tensor object needs a \"data\" array")?
                    .iter()
                    .map(|d| d.as_f64().ok_or("tensor data must be numbers"))
                    .collect::<Result<_, _>>()?;
                if shape.iter().product::<usize>() != data.len() {
                    return Err(format!(
                        "tensor shape {shape:?} does not match {} elements",
                        data.len()
                    ));
                }
                Ok(Value::Tensor { shape, data })
            }
            serde_json::Value::String(s) => Err(format!("unexpected string {s:?} for a value")),
        }
    }
}

fn json_f64(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(v) => write!(f, "{v:?}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Tensor { .. } => write!(f, "{}", self.to_json()),
            Value::Undefined => write!(f, "⊥"),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}
