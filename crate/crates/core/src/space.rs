//! Parameter spaces and domain sets, with the contractions that funnel an
//! arbitrary real into them.
//!
//! Open sets are realized as their ε-shrunk closures: `ℝ\0` is `|v| ≥ ε`,
//! `ℝ>0` is `v ≥ ε`. This keeps `contains`, `distance_to` and `contract`
//! mutually consistent (`distance_to(v) == |v - contract(v)|`, zero exactly
//! on members).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::value::Value;

/// Clamp used for punctured and open sets.
pub const EPSILON: f64 = 1e-9;

/// Default half-width of the search range for integer-valued slots.
pub const DEFAULT_INT_BOUND: i64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum ParamSpace {
    RealLine,
    RealNonzero,
    RealPositive,
    RealNonneg,
    RealPositiveNotOne,
    Interval(f64, f64),
    IntegerLine,
    FiniteSet(Vec<f64>),
}

impl ParamSpace {
    pub fn boolean() -> ParamSpace {
        ParamSpace::FiniteSet(vec![0.0, 1.0])
    }

    pub fn sign() -> ParamSpace {
        ParamSpace::FiniteSet(vec![-1.0, 1.0])
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ParamSpace::IntegerLine | ParamSpace::FiniteSet(_))
    }

    pub fn contains(&self, v: f64) -> bool {
        v.is_finite() && self.contract(v) == v
    }

    pub fn distance_to(&self, v: f64) -> f64 {
        if v.is_nan() {
            return f64::INFINITY;
        }
        (v - self.contract(v)).abs()
    }

    /// Nearest member of the set; the identity on members.
    pub fn contract(&self, v: f64) -> f64 {
        let v = if v.is_nan() {
            0.0
        } else {
            v.clamp(-f64::MAX, f64::MAX)
        };
        match self {
            ParamSpace::RealLine => v,
            ParamSpace::RealNonzero => {
                if v.abs() >= EPSILON {
                    v
                } else if v < 0.0 {
                    -EPSILON
                } else {
                    EPSILON
                }
            }
            ParamSpace::RealPositive => v.max(EPSILON),
            ParamSpace::RealNonneg => v.max(0.0),
            ParamSpace::RealPositiveNotOne => {
                let v = v.max(EPSILON);
                if (v - 1.0).abs() >= EPSILON {
                    v
                } else if v < 1.0 {
                    1.0 - EPSILON
                } else {
                    1.0 + EPSILON
                }
            }
            ParamSpace::Interval(a, b) => v.clamp(*a, *b),
            ParamSpace::IntegerLine => v.round_ties_even(),
            ParamSpace::FiniteSet(members) => {
                let mut best = members[0];
                for &m in &members[1..] {
                    let (dm, db) = ((v - m).abs(), (v - best).abs());
                    if dm < db || (dm == db && m < best) {
                        best = m;
                    }
                }
                best
            }
        }
    }

    /// The bounded member list searched for discrete spaces.
    pub fn members(&self, int_bound: i64) -> Option<Vec<f64>> {
        match self {
            ParamSpace::IntegerLine => Some((-int_bound..=int_bound).map(|k| k as f64).collect()),
            ParamSpace::FiniteSet(m) => Some(m.clone()),
            _ => None,
        }
    }

    /// Draw a member. Integer slots are drawn from `[-int_bound, int_bound]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, int_bound: i64) -> f64 {
        let normal = |rng: &mut R| -> f64 { StandardNormal.sample(rng) };
        match self {
            ParamSpace::RealLine => 2.0 * normal(rng),
            ParamSpace::RealNonzero => self.contract(2.0 * normal(rng)),
            ParamSpace::RealPositive => self.contract(normal(rng).exp()),
            ParamSpace::RealNonneg => (2.0 * normal(rng)).abs(),
            ParamSpace::RealPositiveNotOne => self.contract(normal(rng).exp()),
            ParamSpace::Interval(a, b) => match (a.is_finite(), b.is_finite()) {
                (true, true) => rng.random_range(*a..=*b),
                (true, false) => a + normal(rng).abs(),
                (false, true) => b - normal(rng).abs(),
                (false, false) => normal(rng),
            },
            ParamSpace::IntegerLine => rng.random_range(-int_bound..=int_bound) as f64,
            ParamSpace::FiniteSet(m) => m[rng.random_range(0..m.len())],
        }
    }

    /// Contract every numeric element of a value. Booleans are left alone.
    pub fn contract_value(&self, v: &Value) -> Value {
        match v {
            Value::Real(x) => Value::Real(self.contract(*x)),
            Value::Int(i) => {
                let c = self.contract(*i as f64);
                if c == *i as f64 {
                    Value::Int(*i)
                } else {
                    Value::Real(c)
                }
            }
            Value::Tensor { shape, data } => Value::Tensor {
                shape: shape.clone(),
                data: data.iter().map(|x| self.contract(*x)).collect(),
            },
            Value::Bool(_) | Value::Undefined => v.clone(),
        }
    }

    /// Sum of per-element distances to the set.
    pub fn distance_value(&self, v: &Value) -> f64 {
        match v {
            Value::Bool(_) => 0.0,
            Value::Undefined => f64::INFINITY,
            other => other
                .elements()
                .map(|xs| xs.iter().map(|x| self.distance_to(*x)).sum())
                .unwrap_or(f64::INFINITY),
        }
    }

    pub fn contains_value(&self, v: &Value) -> bool {
        self.distance_value(v) == 0.0
    }
}

fn fmt_bound(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn parse_bound(s: &str) -> Result<f64, String> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| format!("bad bound {s:?}")),
    }
}

impl fmt::Display for ParamSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamSpace::RealLine => write!(f, "real"),
            ParamSpace::RealNonzero => write!(f, "nonzero"),
            ParamSpace::RealPositive => write!(f, "positive"),
            ParamSpace::RealNonneg => write!(f, "nonneg"),
            ParamSpace::RealPositiveNotOne => write!(f, "positive_not_one"),
            ParamSpace::Interval(a, b) => write!(f, "interval:{}:{}", fmt_bound(*a), fmt_bound(*b)),
            ParamSpace::IntegerLine => write!(f, "int"),
            ParamSpace::FiniteSet(m) => {
                let items: Vec<String> = m.iter().map(|v| format!("{v:?}")).collect();
                write!(f, "set:{}", items.join(","))
            }
        }
    }
}

impl FromStr for ParamSpace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["real"] => Ok(ParamSpace::RealLine),
            ["nonzero"] => Ok(ParamSpace::RealNonzero),
            ["positive"] => Ok(ParamSpace::RealPositive),
            ["nonneg"] => Ok(ParamSpace::RealNonneg),
            ["positive_not_one"] => Ok(ParamSpace::RealPositiveNotOne),
            ["int"] => Ok(ParamSpace::IntegerLine),
            ["interval", a, b] => {
                let (a, b) = (parse_bound(a)?, parse_bound(b)?);
                if a > b {
                    return Err(format!("empty interval [{a}, {b}]"));
                }
                Ok(ParamSpace::Interval(a, b))
            }
            ["set", items] => {
                let mut m = items
                    .split(',')
                    .map(|v| v.parse::<f64>().map_err(|_| format!("bad set member {v:?}")))
                    .collect::<Result<Vec<_>, _>>()?;
                if m.is_empty() {
                    return Err("empty finite set".into());
                }
                m.sort_by(f64::total_cmp);
                m.dedup();
                Ok(ParamSpace::FiniteSet(m))
            }
            _ => Err(format!("unknown parameter space {s:?}")),
        }
    }
}

impl serde::Serialize for ParamSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> serde::Deserialize<'de> for ParamSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
