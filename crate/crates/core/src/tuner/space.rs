use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            ParamValue::Text(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(i) => Some(*i),
            ParamValue::Float(f) if f.fract() == 0.0 => Some(*f as i64),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

pub type Point = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dimension {
    Continuous { name: String, low: f64, high: f64 },
    Integer { name: String, low: i64, high: i64 },
    Categorical { name: String, choices: Vec<ParamValue> },
}

impl Dimension {
    pub fn continuous(name: &str, low: f64, high: f64) -> Self {
        Dimension::Continuous { name: name.into(), low, high }
    }

    pub fn integer(name: &str, low: i64, high: i64) -> Self {
        Dimension::Integer { name: name.into(), low, high }
    }

    pub fn categorical(name: &str, choices: Vec<ParamValue>) -> Self {
        Dimension::Categorical { name: name.into(), choices }
    }

    pub fn name(&self) -> &str {
        match self {
            Dimension::Continuous { name, .. } | Dimension::Integer { name, .. } | Dimension::Categorical { name, .. } => name,
        }
    }

    /// Width in the unit-cube encoding.
    pub fn width(&self) -> usize {
        match self {
            Dimension::Categorical { choices, .. } => choices.len(),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParamSpace {
    dimensions: Vec<Dimension>,
}

impl HyperParamSpace {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self> {
        if dimensions.is_empty() {
            return Err(Error::invalid("a space needs at least one dimension"));
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &dimensions {
            if !names.insert(d.name()) {
                return Err(Error::invalid(format!("duplicate dimension {:?}", d.name())));
            }
            match d {
                Dimension::Continuous { name, low, high } if !(low < high) || !low.is_finite() || !high.is_finite() => {
                    return Err(Error::invalid(format!("{name}: need low < high, got [{low}, {high}]")))
                }
                Dimension::Integer { name, low, high } if low >= high => {
                    return Err(Error::invalid(format!("{name}: need low < high, got [{low}, {high}]")))
                }
                Dimension::Categorical { name, choices } if choices.is_empty() => {
                    return Err(Error::invalid(format!("{name}: no choices")))
                }
                _ => {}
            }
        }
        Ok(HyperParamSpace { dimensions })
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn encoded_len(&self) -> usize {
        self.dimensions.iter().map(Dimension::width).sum()
    }

    /// Min-max scaling for numeric dimensions, one-hot for categorical ones.
    pub fn encode(&self, point: &Point) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.encoded_len());
        for d in &self.dimensions {
            let v = point.get(d.name()).ok_or_else(|| Error::invalid(format!("point lacks {:?}", d.name())))?;
            let outside = || Error::invalid(format!("{} = {v} is outside the space", d.name()));
            match d {
                Dimension::Continuous { low, high, .. } => {
                    let x = v.as_f64().ok_or_else(outside)?;
                    if !(*low..=*high).contains(&x) {
                        return Err(outside());
                    }
                    out.push((x - low) / (high - low));
                }
                Dimension::Integer { low, high, .. } => {
                    let x = v.as_i64().ok_or_else(outside)?;
                    if !(*low..=*high).contains(&x) {
                        return Err(outside());
                    }
                    out.push((x - low) as f64 / (high - low) as f64);
                }
                Dimension::Categorical { choices, .. } => {
                    let i = choices.iter().position(|c| c == v).ok_or_else(outside)?;
                    out.extend((0..choices.len()).map(|j| if j == i { 1.0 } else { 0.0 }));
                }
            }
        }
        if point.len() != self.dimensions.len() {
            return Err(Error::invalid("point has dimensions not in the space"));
        }
        Ok(out)
    }

    /// Inverse of [`encode`](Self::encode); integers round to nearest,
    /// categoricals take the largest coordinate of their block.
    pub fn decode(&self, x: &[f64]) -> Result<Point> {
        if x.len() != self.encoded_len() {
            return Err(Error::shape(format!("expected {} coordinates, got {}", self.encoded_len(), x.len())));
        }
        let mut point = Point::new();
        let mut at = 0;
        for d in &self.dimensions {
            let v = match d {
                Dimension::Continuous { low, high, .. } => {
                    ParamValue::Float((low + x[at].clamp(0.0, 1.0) * (high - low)).clamp(*low, *high))
                }
                Dimension::Integer { low, high, .. } => {
                    let raw = *low as f64 + x[at].clamp(0.0, 1.0) * (high - low) as f64;
                    ParamValue::Int((raw.round() as i64).clamp(*low, *high))
                }
                Dimension::Categorical { choices, .. } => {
                    let block = &x[at..at + choices.len()];
                    let best = (0..block.len()).fold(0, |b, j| if block[j] > block[b] { j } else { b });
                    choices[best].clone()
                }
            };
            at += d.width();
            point.insert(d.name().to_string(), v);
        }
        Ok(point)
    }

    fn place(&self, u: &[f64], out: &mut Vec<f64>) {
        for (d, &ui) in self.dimensions.iter().zip(u) {
            match d {
                Dimension::Categorical { choices, .. } => {
                    let pick = ((ui * choices.len() as f64) as usize).min(choices.len() - 1);
                    out.extend((0..choices.len()).map(|j| if j == pick { 1.0 } else { 0.0 }));
                }
                _ => out.push(ui),
            }
        }
    }

    /// A uniformly random encoded point (categoricals as one-hot vertices).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let u: Vec<f64> = (0..self.dimensions.len()).map(|_| rng.gen::<f64>()).collect();
        let mut out = Vec::with_capacity(self.encoded_len());
        self.place(&u, &mut out);
        out
    }

    /// Latin-hypercube design of `n` encoded points.
    pub fn latin_hypercube<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let dims = self.dimensions.len();
        let strata: Vec<Vec<usize>> = (0..dims)
            .map(|_| {
                let mut s: Vec<usize> = (0..n).collect();
                s.shuffle(rng);
                s
            })
            .collect();
        (0..n)
            .map(|i| {
                let u: Vec<f64> = (0..dims).map(|d| (strata[d][i] as f64 + rng.gen::<f64>()) / n as f64).collect();
                let mut out = Vec::with_capacity(self.encoded_len());
                self.place(&u, &mut out);
                out
            })
            .collect()
    }

    pub fn contains(&self, point: &Point) -> bool {
        self.encode(point).is_ok()
    }
}
