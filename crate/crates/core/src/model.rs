//! Market data, grid layout and solver state for the regime-switching put.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Row-sum tolerance for generator validation. Decimal encodings of thirds
/// must still pass.
pub const GENERATOR_ROW_TOL: f64 = 1e-12;

/// Smallest admissible node count. The one-sided compact rows need four
/// interior unknowns.
pub const MIN_NODES: usize = 8;

/// Intensity matrix of the continuous-time Markov chain driving the regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    rows: Vec<Vec<f64>>,
}

impl GeneratorMatrix {
    /// Wraps rows as given. Nothing is checked until [`validate_model`].
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    /// Number of rows.
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn get(&self, m: usize, l: usize) -> f64 {
        self.rows[m][l]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// A generator with no switching at all.
    pub fn zeros(dim: usize) -> Self {
        Self {
            rows: vec![vec![0.0; dim]; dim],
        }
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        let n = self.rows.len();
        if n == 0 {
            out.push(Violation::DimensionMismatch {
                detail: String::from("generator must have at least one row"),
            });
            return;
        }
        for (m, row) in self.rows.iter().enumerate() {
            if row.len() != n {
                out.push(Violation::DimensionMismatch {
                    detail: format!("generator row {} has {} entries, expected {}", m, row.len(), n),
                });
                continue;
            }
            if row.iter().any(|q| !q.is_finite()) {
                out.push(Violation::InvalidGenerator {
                    row: m,
                    rule: String::from("entries must be finite"),
                });
                continue;
            }
            for (l, &q) in row.iter().enumerate() {
                if l != m && q < 0.0 {
                    out.push(Violation::InvalidGenerator {
                        row: m,
                        rule: format!("off-diagonal entry q[{}][{}] = {} is negative", m, l, q),
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            let scale = row.iter().fold(1.0_f64, |acc, q| acc.max(q.abs()));
            if sum.abs() > GENERATOR_ROW_TOL * scale {
                out.push(Violation::InvalidGenerator {
                    row: m,
                    rule: format!("row sums to {} instead of 0", sum),
                });
            }
        }
    }
}

/// Interest rate and volatility of one regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeParams {
    pub rate: f64,
    pub sigma: f64,
}

impl RegimeParams {
    pub fn new(rate: f64, sigma: f64) -> Self {
        Self { rate, sigma }
    }

    /// Drift of log-price, `r - sigma^2 / 2`.
    #[inline]
    pub fn log_drift(&self) -> f64 {
        self.rate - 0.5 * self.sigma * self.sigma
    }
}

/// American put contract plus the regime-switching market.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub strike: f64,
    pub maturity: f64,
    pub regimes: Vec<RegimeParams>,
    pub generator: GeneratorMatrix,
}

impl MarketModel {
    pub fn num_regimes(&self) -> usize {
        self.regimes.len()
    }

    /// Two-regime benchmark: K = 9, T = 1, Q = [[-6, 6], [9, -9]].
    pub fn two_regime_benchmark() -> Self {
        Self {
            strike: 9.0,
            maturity: 1.0,
            regimes: vec![RegimeParams::new(0.10, 0.80), RegimeParams::new(0.05, 0.30)],
            generator: GeneratorMatrix::from_rows(vec![vec![-6.0, 6.0], vec![9.0, -9.0]]),
        }
    }

    /// Four-regime benchmark with uniform switching intensity 1/3. Strike
    /// and maturity are taken as K = 9, T = 1.
    pub fn four_regime_benchmark() -> Self {
        let third = 1.0 / 3.0;
        let mut rows = vec![vec![third; 4]; 4];
        for (m, row) in rows.iter_mut().enumerate() {
            row[m] = -1.0;
        }
        Self {
            strike: 9.0,
            maturity: 1.0,
            regimes: vec![
                RegimeParams::new(0.02, 0.90),
                RegimeParams::new(0.10, 0.50),
                RegimeParams::new(0.06, 0.70),
                RegimeParams::new(0.15, 0.20),
            ],
            generator: GeneratorMatrix::from_rows(rows),
        }
    }

    /// Single-regime model with the given parameters and a zero generator.
    pub fn single_regime(strike: f64, maturity: f64, params: RegimeParams) -> Self {
        Self {
            strike,
            maturity,
            regimes: vec![params],
            generator: GeneratorMatrix::zeros(1),
        }
    }
}

/// One broken rule found by [`validate_model`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    InvalidGenerator {
        row: usize,
        rule: String,
    },
    InvalidRegime {
        index: usize,
        field: &'static str,
        rule: String,
    },
    InvalidContract {
        field: &'static str,
        rule: String,
    },
    DimensionMismatch {
        detail: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidGenerator { row, rule } => write!(f, "generator[{}]: {}", row, rule),
            Violation::InvalidRegime { index, field, rule } => {
                write!(f, "regimes[{}].{}: {}", index, field, rule)
            }
            Violation::InvalidContract { field, rule } => write!(f, "{}: {}", field, rule),
            Violation::DimensionMismatch { detail } => write!(f, "dimension mismatch: {}", detail),
        }
    }
}

/// Every violation found in a model, in discovery order.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid market model: {}", join(.0))]
pub struct ValidationReport(pub Vec<Violation>);

fn join(v: &[Violation]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push_str("; ");
        }
        s.push_str(&format!("{}", x));
    }
    s
}

/// Returns the model unchanged if every structural and sign rule holds.
pub fn validate_model(model: MarketModel) -> Result<MarketModel, ValidationReport> {
    let mut out = Vec::new();
    if !(model.strike > 0.0 && model.strike.is_finite()) {
        out.push(Violation::InvalidContract {
            field: "strike",
            rule: format!("must be positive, got {}", model.strike),
        });
    }
    if !(model.maturity > 0.0 && model.maturity.is_finite()) {
        out.push(Violation::InvalidContract {
            field: "maturity",
            rule: format!("must be positive, got {}", model.maturity),
        });
    }
    if model.regimes.is_empty() {
        out.push(Violation::DimensionMismatch {
            detail: String::from("at least one regime is required"),
        });
    }
    for (i, p) in model.regimes.iter().enumerate() {
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            out.push(Violation::InvalidRegime {
                index: i,
                field: "sigma",
                rule: format!("must be positive, got {}", p.sigma),
            });
        }
        if !(p.rate > 0.0 && p.rate.is_finite()) {
            out.push(Violation::InvalidRegime {
                index: i,
                field: "rate",
                rule: format!("must be positive, got {}", p.rate),
            });
        }
    }
    if model.generator.dim() != model.regimes.len() {
        out.push(Violation::DimensionMismatch {
            detail: format!(
                "{} regimes but generator is {}x{}",
                model.regimes.len(),
                model.generator.dim(),
                model.generator.dim()
            ),
        });
    }
    model.generator.violations(&mut out);
    if out.is_empty() {
        Ok(model)
    } else {
        Err(ValidationReport(out))
    }
}

/// Uniform log-moneyness grid `x_i = i h`, `i = 0..=m`, shared by all regimes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_max: f64,
    pub m: usize,
    pub h: f64,
}

impl GridSpec {
    pub fn new(x_max: f64, m: usize) -> Result<Self, crate::SolverError> {
        if m < MIN_NODES {
            return Err(crate::SolverError::GridTooSmall { m, min: MIN_NODES });
        }
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(crate::SolverError::InvalidGrid { x_max, m });
        }
        Ok(Self {
            x_max,
            m,
            h: x_max / m as f64,
        })
    }

    /// Grid on `[0, x_max]` with spacing as close as possible to `h`.
    pub fn with_spacing(x_max: f64, h: f64) -> Result<Self, crate::SolverError> {
        let m = libm::round(x_max / h) as usize;
        Self::new(x_max, m)
    }

    /// Number of interior unknowns, `m - 1`.
    #[inline]
    pub fn interior(&self) -> usize {
        self.m - 1
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

/// Knobs of the adaptive step controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControlConfig {
    pub tol: f64,
    pub safety: f64,
    /// Shrink factor applied while the boundary ODE has no real root.
    pub phi: f64,
    pub accept_exponent: f64,
    pub reject_exponent: f64,
    /// `None` means `h^2`.
    pub initial_dt: Option<f64>,
    /// Extrapolation spacing in cells, `xbar = xbar_cells * h`.
    pub xbar_cells: usize,
    /// Swap accept/reject exponents to the usual embedded-pair convention.
    pub standard_controller: bool,
    pub field_coupling: FieldCoupling,
}

/// Which boundary position and slope the field stages see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldCoupling {
    /// Boundary data and `xi` taken from the step entry for all six stages.
    Frozen,
    /// Each field stage uses the matching boundary stage value and slope.
    StageCoupled,
}

impl Default for StepControlConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            safety: 0.9,
            phi: 0.5,
            accept_exponent: 0.25,
            reject_exponent: 0.2,
            initial_dt: None,
            xbar_cells: 4,
            standard_controller: false,
            field_coupling: FieldCoupling::StageCoupled,
        }
    }
}

impl StepControlConfig {
    pub fn validate(&self) -> Result<(), crate::SolverError> {
        let bad = |what: &'static str| Err(crate::SolverError::InvalidControl(what));
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad("tol must be positive");
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return bad("safety must lie in (0, 1)");
        }
        if !(0.1..=0.5).contains(&self.phi) {
            return bad("phi must lie in [0.1, 0.5]");
        }
        if !(self.accept_exponent > 0.0 && self.reject_exponent > 0.0) {
            return bad("controller exponents must be positive");
        }
        if self.xbar_cells == 0 {
            return bad("xbar_cells must be positive");
        }
        if let Some(k) = self.initial_dt {
            if !(k > 0.0 && k.is_finite()) {
                return bad("initial_dt must be positive");
            }
        }
        Ok(())
    }

    /// Exponents `(accept, reject)` after applying the controller variant.
    pub fn exponents(&self) -> (f64, f64) {
        if self.standard_controller {
            (self.reject_exponent, self.accept_exponent)
        } else {
            (self.accept_exponent, self.reject_exponent)
        }
    }

    pub fn initial_step(&self, grid: &GridSpec) -> f64 {
        self.initial_dt.unwrap_or(grid.h * grid.h)
    }
}

/// Per-regime interior fields plus boundary positions at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub tau: f64,
    pub sf: Vec<f64>,
    /// Option value on interior nodes `1..m`.
    pub u: Vec<Vec<f64>>,
    /// Delta in log-moneyness, `dU/dx`.
    pub w: Vec<Vec<f64>>,
    /// Gamma in log-moneyness, `d2U/dx2`, when requested.
    pub y: Option<Vec<Vec<f64>>>,
}

impl SolverState {
    pub fn num_regimes(&self) -> usize {
        self.sf.len()
    }

    pub fn has_gamma(&self) -> bool {
        self.y.is_some()
    }

    pub fn gamma(&self) -> Result<&[Vec<f64>], crate::SolverError> {
        self.y.as_deref().ok_or(crate::SolverError::GammaNotComputed)
    }
}

/// Payoff state at expiry: boundary at the strike, all fields zero.
pub fn initial_state(model: &MarketModel, grid: &GridSpec, with_gamma: bool) -> SolverState {
    let n = model.num_regimes();
    let zeros = vec![vec![0.0; grid.interior()]; n];
    SolverState {
        tau: 0.0,
        sf: vec![model.strike; n],
        u: zeros.clone(),
        w: zeros.clone(),
        y: if with_gamma { Some(zeros) } else { None },
    }
}
