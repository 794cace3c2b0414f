use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Integer { low: i64, high: i64 },
    RealLinear { low: f64, high: f64 },
    RealLog { low: f64, high: f64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub domain: Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Choice(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            Value::Choice(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{v}"),
            Value::Choice(v) => f.write_str(v),
        }
    }
}

/// One value per dimension, in the space's order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub values: Vec<(String, Value)>,
}

impl Point {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn real(&self, name: &str) -> Result<f64> {
        self.get(name)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Config(format!("point has no numeric `{name}`")))
    }

    pub fn int(&self, name: &str) -> Result<i64> {
        match self.get(name) {
            Some(Value::Int(v)) => Ok(*v),
            _ => Err(Error::Config(format!("point has no integer `{name}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dimensions: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self> {
        let space = Self { dimensions };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::Config("search space has no dimensions".into()));
        }
        for d in &self.dimensions {
            let ok = match &d.domain {
                Domain::Integer { low, high } => low <= high,
                Domain::RealLinear { low, high } => low.is_finite() && high.is_finite() && low <= high,
                Domain::RealLog { low, high } => *low > 0.0 && high.is_finite() && low <= high,
                Domain::Categorical { choices } => !choices.is_empty(),
            };
            if !ok {
                return Err(Error::Config(format!("dimension `{}` has invalid bounds", d.name)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dimensions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dimensions.is_empty()
    }

    /// True when the space holds exactly one point.
    pub fn is_singleton(&self) -> bool {
        self.dimensions.iter().all(|d| match &d.domain {
            Domain::Integer { low, high } => low == high,
            Domain::RealLinear { low, high } | Domain::RealLog { low, high } => low == high,
            Domain::Categorical { choices } => choices.len() == 1,
        })
    }

    /// Maps a unit-cube coordinate vector to a point, snapping integers and
    /// categories.
    pub fn decode(&self, u: &[f64]) -> Point {
        let values = self
            .dimensions
            .iter()
            .zip(u)
            .map(|(d, &x)| {
                let x = x.clamp(0.0, 1.0);
                let v = match &d.domain {
                    Domain::Integer { low, high } => {
                        Value::Int((*low as f64 + x * (high - low) as f64).round() as i64)
                    }
                    Domain::RealLinear { low, high } => Value::Real(low + x * (high - low)),
                    Domain::RealLog { low, high } => {
                        Value::Real((low.ln() + x * (high.ln() - low.ln())).exp().clamp(*low, *high))
                    }
                    Domain::Categorical { choices } => {
                        let k = ((x * choices.len() as f64).floor() as usize).min(choices.len() - 1);
                        Value::Choice(choices[k].clone())
                    }
                };
                (d.name.clone(), v)
            })
            .collect();
        Point { values }
    }

    /// Inverse of [`decode`](Self::decode) up to snapping.
    pub fn encode(&self, p: &Point) -> Result<Vec<f64>> {
        self.dimensions
            .iter()
            .map(|d| {
                let v = p
                    .get(&d.name)
                    .ok_or_else(|| Error::Config(format!("point lacks `{}`", d.name)))?;
                let frac = |x: f64, lo: f64, hi: f64| if hi > lo { (x - lo) / (hi - lo) } else { 0.5 };
                Ok(match (&d.domain, v) {
                    (Domain::Integer { low, high }, Value::Int(x)) => frac(*x as f64, *low as f64, *high as f64),
                    (Domain::RealLinear { low, high }, Value::Real(x)) => frac(*x, *low, *high),
                    (Domain::RealLog { low, high }, Value::Real(x)) => frac(x.ln(), low.ln(), high.ln()),
                    (Domain::Categorical { choices }, Value::Choice(c)) => {
                        let k = choices
                            .iter()
                            .position(|x| x == c)
                            .ok_or_else(|| Error::Config(format!("`{c}` is not a choice of `{}`", d.name)))?;
                        (k as f64 + 0.5) / choices.len() as f64
                    }
                    _ => return Err(Error::Config(format!("value type mismatch for `{}`", d.name))),
                })
            })
            .collect()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.values.len() == self.dimensions.len()
            && self.dimensions.iter().zip(&p.values).all(|(d, (name, v))| {
                name == &d.name
                    && match (&d.domain, v) {
                        (Domain::Integer { low, high }, Value::Int(x)) => low <= x && x <= high,
                        (Domain::RealLinear { low, high }, Value::Real(x))
                        | (Domain::RealLog { low, high }, Value::Real(x)) => low <= x && x <= high,
                        (Domain::Categorical { choices }, Value::Choice(c)) => choices.contains(c),
                        _ => false,
                    }
            })
    }

    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.len()).map(|_| rng.random::<f64>()).collect()
    }
}
