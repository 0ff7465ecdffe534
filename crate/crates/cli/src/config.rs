//! JSON run configuration: parsing with path-qualified errors, validation
//! against the core model, and normalized re-emission.

use std::fmt;

use regime_rkf::model::{
    validate_model, GeneratorMatrix, GridSpec, MarketModel, RegimeParams, StepControlConfig, ValidationReport,
};
use regime_rkf::SolverError;
use serde_json::{json, Map, Value};

/// A malformed or missing key, located by its path in the document.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema error at {0}")]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Model(#[from] ValidationReport),
    #[error("invalid numerical setup: {0}")]
    Setup(#[from] SolverError),
}

/// Generator entry as written: a plain number or an exact `p/q` rational.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorEntry {
    Number(f64),
    Rational { num: i64, den: i64 },
}

impl GeneratorEntry {
    pub fn value(&self) -> f64 {
        match *self {
            GeneratorEntry::Number(x) => x,
            GeneratorEntry::Rational { num, den } => num as f64 / den as f64,
        }
    }

    fn to_json(self) -> Value {
        match self {
            GeneratorEntry::Number(x) => json!(x),
            GeneratorEntry::Rational { num, den } => Value::String(format!("{}/{}", num, den)),
        }
    }
}

/// Parses `"p/q"` (or a bare integer `"p"`) with `|p|, q < 2^53`.
pub fn parse_rational(text: &str) -> Option<GeneratorEntry> {
    const LIMIT: i64 = 1 << 53;
    let (p, q) = match text.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (text.trim(), "1"),
    };
    let num: i64 = p.parse().ok()?;
    let den: i64 = q.parse().ok()?;
    if den <= 0 || num.abs() >= LIMIT || den >= LIMIT {
        return None;
    }
    Some(GeneratorEntry::Rational { num, den })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialDt {
    HSquared,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBlock {
    pub x_max: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlBlock {
    pub tol: f64,
    pub phi: f64,
    pub safety: f64,
    pub initial_dt: InitialDt,
    pub xbar_cells: usize,
    pub accept_exponent: f64,
    pub reject_exponent: f64,
    pub standard_controller: bool,
}

impl Default for ControlBlock {
    fn default() -> Self {
        let d = StepControlConfig::default();
        Self {
            tol: d.tol,
            phi: d.phi,
            safety: d.safety,
            initial_dt: InitialDt::HSquared,
            xbar_cells: d.xbar_cells,
            accept_exponent: d.accept_exponent,
            reject_exponent: d.reject_exponent,
            standard_controller: d.standard_controller,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputsBlock {
    pub spots: Vec<f64>,
    pub gamma: bool,
    pub digits: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub strike: f64,
    pub maturity: f64,
    pub regimes: Vec<RegimeParams>,
    pub generator: Vec<Vec<GeneratorEntry>>,
    pub grid: GridBlock,
    pub control: ControlBlock,
    pub outputs: OutputsBlock,
}

impl RunConfig {
    pub fn model(&self) -> MarketModel {
        MarketModel {
            strike: self.strike,
            maturity: self.maturity,
            regimes: self.regimes.clone(),
            generator: GeneratorMatrix::from_rows(
                self.generator
                    .iter()
                    .map(|row| row.iter().map(GeneratorEntry::value).collect())
                    .collect(),
            ),
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec, SolverError> {
        GridSpec::new(self.grid.x_max, self.grid.m)
    }

    pub fn step_control(&self) -> StepControlConfig {
        let c = &self.control;
        StepControlConfig {
            tol: c.tol,
            safety: c.safety,
            phi: c.phi,
            accept_exponent: c.accept_exponent,
            reject_exponent: c.reject_exponent,
            initial_dt: match c.initial_dt {
                InitialDt::HSquared => None,
                InitialDt::Fixed(k) => Some(k),
            },
            xbar_cells: c.xbar_cells,
            standard_controller: c.standard_controller,
            ..StepControlConfig::default()
        }
    }

    /// Model, grid and controller checks of the core crate.
    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_model(self.model())?;
        let grid = self.grid_spec()?;
        self.step_control().validate()?;
        let needed = 3 * self.control.xbar_cells;
        if needed > grid.interior() {
            return Err(SolverError::StencilOutOfRange {
                needed,
                available: grid.interior(),
            }
            .into());
        }
        Ok(())
    }

    /// Every key written out explicitly, defaults included.
    pub fn to_json(&self) -> Value {
        let c = &self.control;
        let mut control = Map::new();
        control.insert("tol".into(), json!(c.tol));
        control.insert("phi".into(), json!(c.phi));
        control.insert("safety".into(), json!(c.safety));
        control.insert(
            "initial_dt".into(),
            match c.initial_dt {
                InitialDt::HSquared => json!("h^2"),
                InitialDt::Fixed(k) => json!(k),
            },
        );
        control.insert("xbar_cells".into(), json!(c.xbar_cells));
        control.insert("accept_exponent".into(), json!(c.accept_exponent));
        control.insert("reject_exponent".into(), json!(c.reject_exponent));
        control.insert("standard_controller".into(), json!(c.standard_controller));
        let mut outputs = Map::new();
        outputs.insert("spots".into(), json!(self.outputs.spots));
        outputs.insert("gamma".into(), json!(self.outputs.gamma));
        if let Some(d) = self.outputs.digits {
            outputs.insert("digits".into(), json!(d));
        }
        json!({
            "strike": self.strike,
            "maturity": self.maturity,
            "regimes": self.regimes.iter().map(|p| json!({"rate": p.rate, "sigma": p.sigma})).collect::<Vec<_>>(),
            "generator": self.generator.iter()
                .map(|row| Value::Array(row.iter().map(|e| e.to_json()).collect()))
                .collect::<Vec<_>>(),
            "grid": {"x_max": self.grid.x_max, "m": self.grid.m},
            "control": control,
            "outputs": outputs,
        })
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = serde_json::to_string_pretty(&self.to_json()).map_err(|_| fmt::Error)?;
        f.write_str(&text)
    }
}

/// Typed access to one JSON object, tracking its path.
struct Obj<'a> {
    path: String,
    map: &'a Map<String, Value>,
}

fn child(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{}.{}", path, key)
    }
}

impl<'a> Obj<'a> {
    fn new(path: String, v: &'a Value) -> Result<Self, SchemaError> {
        match v {
            Value::Object(map) => Ok(Self { path, map }),
            _ => Err(SchemaError::new(display_path(&path), "expected an object")),
        }
    }

    fn only(&self, keys: &[&str]) -> Result<(), SchemaError> {
        match self.map.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(SchemaError::new(child(&self.path, k), "unknown key")),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    fn required(&self, key: &str) -> Result<&'a Value, SchemaError> {
        self.get(key)
            .ok_or_else(|| SchemaError::new(child(&self.path, key), "missing required key"))
    }

    fn number(&self, key: &str) -> Result<f64, SchemaError> {
        as_number(self.required(key)?, &child(&self.path, key))
    }

    fn number_or(&self, key: &str, default: f64) -> Result<f64, SchemaError> {
        self.get(key)
            .map_or(Ok(default), |v| as_number(v, &child(&self.path, key)))
    }

    fn count(&self, key: &str) -> Result<usize, SchemaError> {
        as_count(self.required(key)?, &child(&self.path, key))
    }

    fn count_or(&self, key: &str, default: usize) -> Result<usize, SchemaError> {
        self.get(key)
            .map_or(Ok(default), |v| as_count(v, &child(&self.path, key)))
    }

    fn flag_or(&self, key: &str, default: bool) -> Result<bool, SchemaError> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Bool(b)) => Ok(*b),
            Some(_) => Err(SchemaError::new(child(&self.path, key), "expected a boolean")),
        }
    }

    fn array(&self, key: &str) -> Result<&'a Vec<Value>, SchemaError> {
        match self.required(key)? {
            Value::Array(a) => Ok(a),
            _ => Err(SchemaError::new(child(&self.path, key), "expected an array")),
        }
    }
}

fn display_path(path: &str) -> &str {
    if path.is_empty() {
        "<root>"
    } else {
        path
    }
}

fn as_number(v: &Value, path: &str) -> Result<f64, SchemaError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| SchemaError::new(path, "expected a finite number"))
}

fn as_count(v: &Value, path: &str) -> Result<usize, SchemaError> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| SchemaError::new(path, "expected a non-negative integer"))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Value = serde_json::from_str(text)?;
    let cfg = from_value(&root)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Structural parse only; no model validation.
pub fn from_value(root: &Value) -> Result<RunConfig, SchemaError> {
    let top = Obj::new(String::new(), root)?;
    top.only(&[
        "strike",
        "maturity",
        "regimes",
        "generator",
        "grid",
        "control",
        "outputs",
    ])?;
    let strike = top.number("strike")?;
    let maturity = top.number("maturity")?;

    let mut regimes = Vec::new();
    for (i, r) in top.array("regimes")?.iter().enumerate() {
        let o = Obj::new(format!("regimes[{}]", i), r)?;
        o.only(&["rate", "sigma"])?;
        regimes.push(RegimeParams::new(o.number("rate")?, o.number("sigma")?));
    }

    let mut generator = Vec::new();
    for (i, row) in top.array("generator")?.iter().enumerate() {
        let path = format!("generator[{}]", i);
        let Value::Array(row) = row else {
            return Err(SchemaError::new(path, "expected an array"));
        };
        let mut out = Vec::with_capacity(row.len());
        for (j, e) in row.iter().enumerate() {
            let path = format!("generator[{}][{}]", i, j);
            out.push(match e {
                Value::String(s) => parse_rational(s)
                    .ok_or_else(|| SchemaError::new(&path, format!("cannot parse {:?} as a rational p/q", s)))?,
                other => GeneratorEntry::Number(as_number(other, &path)?),
            });
        }
        generator.push(out);
    }

    let g = Obj::new("grid".into(), top.required("grid")?)?;
    g.only(&["x_max", "m"])?;
    let grid = GridBlock {
        x_max: g.number("x_max")?,
        m: g.count("m")?,
    };

    let mut control = ControlBlock::default();
    if let Some(v) = top.get("control") {
        let c = Obj::new("control".into(), v)?;
        c.only(&[
            "tol",
            "phi",
            "safety",
            "initial_dt",
            "xbar_cells",
            "accept_exponent",
            "reject_exponent",
            "standard_controller",
        ])?;
        let d = control;
        control = ControlBlock {
            tol: c.number_or("tol", d.tol)?,
            phi: c.number_or("phi", d.phi)?,
            safety: c.number_or("safety", d.safety)?,
            initial_dt: match c.get("initial_dt") {
                None => InitialDt::HSquared,
                Some(Value::String(s)) if s == "h^2" => InitialDt::HSquared,
                Some(v) => InitialDt::Fixed(
                    as_number(v, "control.initial_dt")
                        .map_err(|_| SchemaError::new("control.initial_dt", "expected a number or \"h^2\""))?,
                ),
            },
            xbar_cells: c.count_or("xbar_cells", d.xbar_cells)?,
            accept_exponent: c.number_or("accept_exponent", d.accept_exponent)?,
            reject_exponent: c.number_or("reject_exponent", d.reject_exponent)?,
            standard_controller: c.flag_or("standard_controller", d.standard_controller)?,
        };
    }

    let mut outputs = OutputsBlock::default();
    if let Some(v) = top.get("outputs") {
        let o = Obj::new("outputs".into(), v)?;
        o.only(&["spots", "gamma", "digits"])?;
        if o.get("spots").is_some() {
            for (i, s) in o.array("spots")?.iter().enumerate() {
                let path = format!("outputs.spots[{}]", i);
                let s = as_number(s, &path)?;
                if s <= 0.0 {
                    return Err(SchemaError::new(path, "spot must be positive"));
                }
                outputs.spots.push(s);
            }
        }
        outputs.gamma = o.flag_or("gamma", false)?;
        outputs.digits = o.get("digits").map(|v| as_count(v, "outputs.digits")).transpose()?;
    }

    Ok(RunConfig {
        strike,
        maturity,
        regimes,
        generator,
        grid,
        control,
        outputs,
    })
}
