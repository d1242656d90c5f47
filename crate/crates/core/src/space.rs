//! Hyperparameter domains, configurations and the space document format.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Continuous {
        low: f64,
        high: f64,
        log_scale: bool,
    },
    Integer {
        low: i64,
        high: i64,
    },
    Categorical {
        categories: Vec<String>,
    },
}

impl Domain {
    /// Bounds of the encoded (real) representation.
    pub fn encoded_bounds(&self) -> (f64, f64) {
        match self {
            Domain::Continuous {
                low,
                high,
                log_scale: true,
            } => (low.ln(), high.ln()),
            Domain::Continuous { low, high, .. } => (*low, *high),
            Domain::Integer { low, high } => (*low as f64, *high as f64),
            Domain::Categorical { categories } => (0.0, (categories.len() - 1) as f64),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, Domain::Categorical { .. })
    }

    pub fn n_categories(&self) -> Option<usize> {
        match self {
            Domain::Categorical { categories } => Some(categories.len()),
            _ => None,
        }
    }
}

/// A parameter is active only when `parent` holds `value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub parent: usize,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub domain: Domain,
    pub condition: Option<Condition>,
}

impl ParamSpec {
    pub fn continuous(name: &str, low: f64, high: f64) -> Self {
        Self::new(
            name,
            Domain::Continuous {
                low,
                high,
                log_scale: false,
            },
        )
    }

    pub fn log_continuous(name: &str, low: f64, high: f64) -> Self {
        Self::new(
            name,
            Domain::Continuous {
                low,
                high,
                log_scale: true,
            },
        )
    }

    pub fn integer(name: &str, low: i64, high: i64) -> Self {
        Self::new(name, Domain::Integer { low, high })
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        let categories = categories.iter().map(|c| c.to_string()).collect();
        Self::new(name, Domain::Categorical { categories })
    }

    fn new(name: &str, domain: Domain) -> Self {
        Self {
            name: name.to_string(),
            domain,
            condition: None,
        }
    }
}

/// One assigned value. `Inactive` marks a parameter whose condition fails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Float(f64),
    Int(i64),
    Cat(usize),
    Inactive,
}

impl Value {
    pub fn is_active(&self) -> bool {
        !matches!(self, Value::Inactive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    values: Vec<Value>,
}

impl Configuration {
    pub fn new(values: Vec<Value>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn get(&self, index: usize) -> Option<Value> {
        self.values.get(index).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    WrongLength { expected: usize, got: usize },
    OutOfDomain,
    WrongType,
    ActiveWhenConditionUnmet,
    InactiveWhenConditionMet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub param: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::WrongLength { expected, got } => {
                write!(f, "expected {expected} values, got {got}")
            }
            ViolationKind::OutOfDomain => write!(f, "{}: value outside domain", self.param),
            ViolationKind::WrongType => write!(f, "{}: value has the wrong kind", self.param),
            ViolationKind::ActiveWhenConditionUnmet => {
                write!(
                    f,
                    "{}: active although its condition is unsatisfied",
                    self.param
                )
            }
            ViolationKind::InactiveWhenConditionMet => {
                write!(
                    f,
                    "{}: inactive although its condition is satisfied",
                    self.param
                )
            }
        }
    }
}

/// An immutable, validated configuration space.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpace {
    params: Vec<ParamSpec>,
}

impl ConfigSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        let invalid = |m: String| Err(Error::InvalidSpace(m));
        if params.is_empty() {
            return invalid("space has no parameters".into());
        }
        let mut seen = HashMap::new();
        for (i, p) in params.iter().enumerate() {
            if seen.insert(p.name.as_str(), i).is_some() {
                return invalid(format!("duplicate parameter name `{}`", p.name));
            }
            match &p.domain {
                Domain::Continuous {
                    low,
                    high,
                    log_scale,
                } => {
                    if !(low.is_finite()
                        && high.is_finite()
                        && low < high
                        && (high - low).is_finite())
                    {
                        return invalid(format!("`{}`: need finite low < high", p.name));
                    }
                    if *log_scale && *low <= 0.0 {
                        return invalid(format!("`{}`: log scale needs low > 0", p.name));
                    }
                }
                Domain::Integer { low, high } => {
                    if low > high {
                        return invalid(format!("`{}`: need low <= high", p.name));
                    }
                }
                Domain::Categorical { categories } => {
                    if categories.len() < 2 {
                        return invalid(format!("`{}`: need at least 2 categories", p.name));
                    }
                    let distinct: std::collections::HashSet<&String> = categories.iter().collect();
                    if distinct.len() != categories.len() {
                        return invalid(format!("`{}`: duplicate category label", p.name));
                    }
                }
            }
            if let Some(c) = &p.condition {
                // Parents must be declared earlier, which also rules out cycles.
                if c.parent >= i {
                    return invalid(format!(
                        "`{}`: condition parent must be declared earlier",
                        p.name
                    ));
                }
                let parent = &params[c.parent];
                let ok = match (&parent.domain, c.value) {
                    (Domain::Categorical { categories }, Value::Cat(k)) => k < categories.len(),
                    (Domain::Integer { low, high }, Value::Int(v)) => *low <= v && v <= *high,
                    _ => false,
                };
                if !ok {
                    return invalid(format!(
                        "`{}`: condition must name a categorical or integer parent and a value in its domain",
                        p.name
                    ));
                }
            }
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    fn condition_met(&self, index: usize, values: &[Value]) -> bool {
        match &self.params[index].condition {
            None => true,
            Some(c) => values.get(c.parent).is_some_and(|v| *v == c.value),
        }
    }

    /// Draws a configuration uniformly (log-uniformly for log-scale
    /// parameters), resolving conditions parent first.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mut values = Vec::with_capacity(self.dim());
        for (i, p) in self.params.iter().enumerate() {
            if !self.condition_met(i, &values) {
                values.push(Value::Inactive);
                continue;
            }
            let v = match &p.domain {
                Domain::Continuous {
                    low,
                    high,
                    log_scale: false,
                } => Value::Float(rng.random_range(*low..=*high)),
                Domain::Continuous {
                    low,
                    high,
                    log_scale: true,
                } => {
                    let x = rng.random_range(low.ln()..=high.ln()).exp();
                    Value::Float(x.clamp(*low, *high))
                }
                Domain::Integer { low, high } => Value::Int(rng.random_range(*low..=*high)),
                Domain::Categorical { categories } => {
                    Value::Cat(rng.random_range(0..categories.len()))
                }
            };
            values.push(v);
        }
        Configuration::new(values)
    }

    /// Returns every domain and conditionality violation; empty means valid.
    pub fn validate(&self, cfg: &Configuration) -> Vec<Violation> {
        if cfg.len() != self.dim() {
            return vec![Violation {
                param: String::new(),
                kind: ViolationKind::WrongLength {
                    expected: self.dim(),
                    got: cfg.len(),
                },
            }];
        }
        let mut out = Vec::new();
        for (i, p) in self.params.iter().enumerate() {
            let v = cfg.values[i];
            let should_be_active = self.condition_met(i, &cfg.values);
            let kind = match (v, should_be_active) {
                (Value::Inactive, true) => Some(ViolationKind::InactiveWhenConditionMet),
                (Value::Inactive, false) => None,
                (_, false) => Some(ViolationKind::ActiveWhenConditionUnmet),
                (v, true) => match (&p.domain, v) {
                    (Domain::Continuous { low, high, .. }, Value::Float(x)) => {
                        (!(x >= *low && x <= *high)).then_some(ViolationKind::OutOfDomain)
                    }
                    (Domain::Integer { low, high }, Value::Int(x)) => {
                        (x < *low || x > *high).then_some(ViolationKind::OutOfDomain)
                    }
                    (Domain::Categorical { categories }, Value::Cat(k)) => {
                        (k >= categories.len()).then_some(ViolationKind::OutOfDomain)
                    }
                    _ => Some(ViolationKind::WrongType),
                },
            };
            if let Some(kind) = kind {
                out.push(Violation {
                    param: p.name.clone(),
                    kind,
                });
            }
        }
        out
    }

    /// Numeric representation used by the density estimators. Inactive
    /// parameters are imputed with the first category or the encoded midpoint.
    pub fn encode(&self, cfg: &Configuration) -> Result<Vec<f64>> {
        let violations = self.validate(cfg);
        if !violations.is_empty() {
            return Err(Error::InvalidConfig(violations));
        }
        Ok(self.encode_unchecked(cfg))
    }

    pub(crate) fn encode_unchecked(&self, cfg: &Configuration) -> Vec<f64> {
        self.params
            .iter()
            .zip(&cfg.values)
            .map(|(p, v)| match (&p.domain, v) {
                (
                    Domain::Continuous {
                        log_scale: true, ..
                    },
                    Value::Float(x),
                ) => x.ln(),
                (_, Value::Float(x)) => *x,
                (_, Value::Int(x)) => *x as f64,
                (_, Value::Cat(k)) => *k as f64,
                (Domain::Categorical { .. }, Value::Inactive) => 0.0,
                (d, Value::Inactive) => {
                    let (lo, hi) = d.encoded_bounds();
                    0.5 * (lo + hi)
                }
            })
            .collect()
    }

    /// Inverse of `encode`: clamps into domains, rounds integer and
    /// categorical dimensions, then re-derives activity from conditions.
    pub fn decode(&self, encoded: &[f64]) -> Result<Configuration> {
        if encoded.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "encoded vector has {} entries, space has {}",
                encoded.len(),
                self.dim()
            )));
        }
        let mut values = Vec::with_capacity(self.dim());
        for (i, (p, &x)) in self.params.iter().zip(encoded).enumerate() {
            if !self.condition_met(i, &values) {
                values.push(Value::Inactive);
                continue;
            }
            let v = match &p.domain {
                Domain::Continuous {
                    low,
                    high,
                    log_scale,
                } => {
                    let x = if *log_scale { x.exp() } else { x };
                    Value::Float(x.clamp(*low, *high))
                }
                Domain::Integer { low, high } => Value::Int((x.round() as i64).clamp(*low, *high)),
                Domain::Categorical { categories } => {
                    Value::Cat((x.round().max(0.0) as usize).min(categories.len() - 1))
                }
            };
            values.push(v);
        }
        Ok(Configuration::new(values))
    }

    /// Name-to-value map with inactive parameters omitted.
    pub fn to_json_map(&self, cfg: &Configuration) -> Map<String, Json> {
        let mut map = Map::new();
        for (p, v) in self.params.iter().zip(&cfg.values) {
            let j = match (&p.domain, v) {
                (_, Value::Inactive) => continue,
                (_, Value::Float(x)) => Json::from(*x),
                (_, Value::Int(x)) => Json::from(*x),
                (Domain::Categorical { categories }, Value::Cat(k)) => {
                    Json::from(categories.get(*k).cloned().unwrap_or_default())
                }
                (_, Value::Cat(k)) => Json::from(*k),
            };
            map.insert(p.name.clone(), j);
        }
        map
    }

    /// Parses a name-to-value map; absent names are inactive. The result is
    /// validated.
    pub fn from_json_map(&self, map: &Map<String, Json>) -> Result<Configuration> {
        for key in map.keys() {
            if self.index_of(key).is_none() {
                return Err(Error::InvalidArgument(format!("unknown parameter `{key}`")));
            }
        }
        let mut values = Vec::with_capacity(self.dim());
        for p in &self.params {
            let v = match map.get(&p.name) {
                None => Value::Inactive,
                Some(j) => json_to_value(&p.domain, j).ok_or_else(|| {
                    Error::InvalidArgument(format!("`{}`: cannot interpret {j}", p.name))
                })?,
            };
            values.push(v);
        }
        let cfg = Configuration::new(values);
        let violations = self.validate(&cfg);
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::InvalidConfig(violations))
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: SpaceDoc = serde_json::from_str(s)?;
        Self::from_doc(&doc)
    }

    pub fn from_doc(doc: &SpaceDoc) -> Result<Self> {
        let mut params: Vec<ParamSpec> = Vec::with_capacity(doc.params.len());
        for pd in &doc.params {
            let invalid = |m: &str| Error::InvalidSpace(format!("`{}`: {m}", pd.name));
            let domain = match pd.kind {
                Kind::Continuous => {
                    let [low, high] = pd.bounds.ok_or_else(|| invalid("missing bounds"))?;
                    Domain::Continuous {
                        low,
                        high,
                        log_scale: pd.log_scale,
                    }
                }
                Kind::Integer => {
                    let [low, high] = pd.bounds.ok_or_else(|| invalid("missing bounds"))?;
                    if low.fract() != 0.0
                        || high.fract() != 0.0
                        || low.abs() > 9e15
                        || high.abs() > 9e15
                    {
                        return Err(invalid(
                            "integer bounds must be integers of magnitude at most 9e15",
                        ));
                    }
                    Domain::Integer {
                        low: low as i64,
                        high: high as i64,
                    }
                }
                Kind::Categorical => Domain::Categorical {
                    categories: pd
                        .categories
                        .clone()
                        .ok_or_else(|| invalid("missing categories"))?,
                },
            };
            if pd.log_scale && pd.kind != Kind::Continuous {
                return Err(invalid("log_scale applies to continuous parameters only"));
            }
            let condition = match &pd.condition {
                None => None,
                Some(cd) => {
                    let parent = params
                        .iter()
                        .position(|p| p.name == cd.parent)
                        .ok_or_else(|| invalid("condition parent must be declared earlier"))?;
                    let value = json_to_value(&params[parent].domain, &cd.value)
                        .filter(|v| matches!(v, Value::Cat(_) | Value::Int(_)))
                        .ok_or_else(|| invalid("condition value not in parent domain"))?;
                    Some(Condition { parent, value })
                }
            };
            params.push(ParamSpec {
                name: pd.name.clone(),
                domain,
                condition,
            });
        }
        Self::new(params)
    }

    pub fn to_doc(&self) -> SpaceDoc {
        let params = self
            .params
            .iter()
            .map(|p| {
                let (kind, bounds, categories, log_scale) = match &p.domain {
                    Domain::Continuous {
                        low,
                        high,
                        log_scale,
                    } => (Kind::Continuous, Some([*low, *high]), None, *log_scale),
                    Domain::Integer { low, high } => (
                        Kind::Integer,
                        Some([*low as f64, *high as f64]),
                        None,
                        false,
                    ),
                    Domain::Categorical { categories } => {
                        (Kind::Categorical, None, Some(categories.clone()), false)
                    }
                };
                let condition = p.condition.as_ref().map(|c| {
                    let parent = &self.params[c.parent];
                    let value = match (&parent.domain, c.value) {
                        (Domain::Categorical { categories }, Value::Cat(k)) => {
                            Json::from(categories[k].clone())
                        }
                        (_, Value::Int(v)) => Json::from(v),
                        _ => Json::Null,
                    };
                    ConditionDoc {
                        parent: parent.name.clone(),
                        value,
                    }
                });
                ParamDoc {
                    name: p.name.clone(),
                    kind,
                    bounds,
                    categories,
                    log_scale,
                    condition,
                }
            })
            .collect();
        SpaceDoc { params }
    }
}

fn json_to_value(domain: &Domain, j: &Json) -> Option<Value> {
    match domain {
        Domain::Continuous { .. } => j.as_f64().map(Value::Float),
        Domain::Integer { .. } => j
            .as_i64()
            .or_else(|| {
                j.as_f64()
                    .filter(|x| x.fract() == 0.0 && x.abs() < 9e15)
                    .map(|x| x as i64)
            })
            .map(Value::Int),
        Domain::Categorical { categories } => match j {
            Json::String(s) => categories.iter().position(|c| c == s).map(Value::Cat),
            _ => None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Continuous,
    Integer,
    Categorical,
}

/// On-disk form of a configuration space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDoc {
    pub params: Vec<ParamDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDoc {
    pub name: String,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub log_scale: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionDoc {
    pub parent: String,
    pub value: Json,
}
