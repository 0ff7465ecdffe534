//! Asset-space prices and Greeks from a finished solve, benchmark tables and
//! the spatial convergence study.

use alloc::vec::Vec;

use crate::error::SolverError;
use crate::hermite::{cubic_cell, cubic_cell_d1};
use crate::model::{GridSpec, MarketModel, SolverState, StepControlConfig};
use crate::rkf::Integrator;

/// Nodal option, delta and gamma fields of every regime at one time level,
/// boundary nodes included.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSurface {
    pub strike: f64,
    pub maturity: f64,
    pub tau: f64,
    pub grid: GridSpec,
    pub sf: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub y: Option<Vec<Vec<f64>>>,
}

/// Greeks in the front-fixed coordinate: `W = dU/dx`, `Y = dW/dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedGreeks {
    pub x: f64,
    pub value: f64,
    pub w: f64,
    pub y: Option<f64>,
}

fn nodal(interior: &[f64], left: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(interior.len() + 2);
    v.push(left);
    v.extend_from_slice(interior);
    v.push(0.0);
    v
}

impl PriceSurface {
    pub fn from_state(model: &MarketModel, grid: &GridSpec, state: &SolverState) -> Self {
        let k = model.strike;
        let u = state.u.iter().zip(&state.sf).map(|(v, &s)| nodal(v, k - s)).collect();
        let w = state.w.iter().zip(&state.sf).map(|(v, &s)| nodal(v, -s)).collect();
        let y = state
            .y
            .as_ref()
            .map(|y| y.iter().zip(&state.sf).map(|(v, &s)| nodal(v, -s)).collect());
        Self {
            strike: k,
            maturity: model.maturity,
            tau: state.tau,
            grid: *grid,
            sf: state.sf.clone(),
            u,
            w,
            y,
        }
    }

    pub fn num_regimes(&self) -> usize {
        self.sf.len()
    }

    /// Cell index and offset of `x` in `(0, x_max)`.
    fn locate(&self, x: f64) -> (usize, f64) {
        let h = self.grid.h;
        let j = (libm::floor(x / h) as usize).min(self.grid.m - 1);
        (j, x - j as f64 * h)
    }

    /// Log-moneyness of spot `s` in regime `m`.
    pub fn moneyness(&self, m: usize, s: f64) -> f64 {
        libm::log(s / self.sf[m])
    }

    /// Option value of regime `m` at spot `s`.
    pub fn price_at(&self, m: usize, s: f64) -> f64 {
        let x = self.moneyness(m, s);
        if x <= 0.0 {
            return self.strike - s;
        }
        if x >= self.grid.x_max {
            return 0.0;
        }
        let (j, t) = self.locate(x);
        let (u, w) = (&self.u[m], &self.w[m]);
        cubic_cell(u[j], w[j], u[j + 1], w[j + 1], self.grid.h, t)
    }

    /// Value, `W` and (when available) `Y` at spot `s`.
    pub fn transformed_at(&self, m: usize, s: f64) -> TransformedGreeks {
        let x = self.moneyness(m, s);
        if x <= 0.0 {
            return TransformedGreeks {
                x,
                value: self.strike - s,
                w: -s,
                y: self.y.as_ref().map(|_| -s),
            };
        }
        if x >= self.grid.x_max {
            return TransformedGreeks {
                x,
                value: 0.0,
                w: 0.0,
                y: self.y.as_ref().map(|_| 0.0),
            };
        }
        let (j, t) = self.locate(x);
        let h = self.grid.h;
        let (u, w) = (&self.u[m], &self.w[m]);
        let (value, wx) = cubic_cell_d1(u[j], w[j], u[j + 1], w[j + 1], h, t);
        let yx = self.y.as_ref().map(|y| {
            let y = &y[m];
            cubic_cell_d1(w[j], y[j], w[j + 1], y[j + 1], h, t).1
        });
        TransformedGreeks { x, value, w: wx, y: yx }
    }

    /// `dV/dS = W / S`.
    pub fn delta_at(&self, m: usize, s: f64) -> f64 {
        if self.moneyness(m, s) <= 0.0 {
            return -1.0;
        }
        self.transformed_at(m, s).w / s
    }

    /// `d2V/dS2 = (Y - W) / S^2`.
    pub fn gamma_at(&self, m: usize, s: f64) -> Result<f64, SolverError> {
        if self.y.is_none() {
            return Err(SolverError::GammaNotComputed);
        }
        if self.moneyness(m, s) <= 0.0 {
            return Ok(0.0);
        }
        let g = self.transformed_at(m, s);
        Ok((g.y.unwrap_or(0.0) - g.w) / (s * s))
    }

    /// Prices of every regime at each spot.
    pub fn table(&self, spots: &[f64]) -> Vec<TableRow> {
        spots
            .iter()
            .map(|&s| TableRow {
                spot: s,
                prices: (0..self.num_regimes()).map(|m| self.price_at(m, s)).collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub spot: f64,
    pub prices: Vec<f64>,
}

/// Adaptive solve to maturity, returned as a surface.
pub fn price_surface(
    model: &MarketModel,
    grid: &GridSpec,
    cfg: &StepControlConfig,
    with_gamma: bool,
) -> Result<PriceSurface, SolverError> {
    let sol = Integrator::new(model.clone(), *grid, *cfg)?.solve(with_gamma)?;
    Ok(PriceSurface::from_state(model, grid, &sol.state))
}

/// One grid of the convergence study. Errors compare against the next finer
/// grid on shared nodes, so the finest grid has none; orders compare against
/// the previous coarser grid. Missing or undefined entries are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub max_error_u: f64,
    pub order_u: f64,
    pub max_error_w: f64,
    pub order_w: f64,
    /// Boundary breakdown that prevented the solve on this grid, if any.
    pub failure: Option<SolverError>,
}

/// `log2(coarse / fine)`, NaN when either error is zero or not finite.
pub fn observed_order(coarse: f64, fine: f64) -> f64 {
    if coarse > 0.0 && fine > 0.0 && coarse.is_finite() && fine.is_finite() {
        libm::log2(coarse / fine)
    } else {
        f64::NAN
    }
}

/// True when each spacing is half the previous one, to `1e-9` relative.
pub fn is_halving(hs: &[f64]) -> bool {
    hs.iter().all(|h| *h > 0.0 && h.is_finite()) && hs.windows(2).all(|p| (p[0] - 2.0 * p[1]).abs() <= 1e-9 * p[0])
}

/// Max-norm difference over shared nodes of consecutive grids, over the
/// selected regime or all of them.
fn restricted_error(coarse: &[Vec<f64>], fine: &[Vec<f64>], regime: Option<usize>) -> f64 {
    let mut e = 0.0_f64;
    for (m, (c, f)) in coarse.iter().zip(fine).enumerate() {
        if regime.is_some_and(|r| r != m) {
            continue;
        }
        // interior node i of the coarse grid is interior node 2i + 1 of the fine one
        for (i, v) in c.iter().enumerate() {
            e = e.max((v - f[2 * i + 1]).abs());
        }
    }
    e
}

/// Outcome of the fixed-step solve on one grid of the study: the final
/// state, or the boundary breakdown that stopped it.
pub type GridOutcome = Result<SolverState, SolverError>;

/// Fixed-step fifth-order solve to `t_short` on the grid of spacing `h`.
///
/// Boundary breakdowns are returned inside the outcome; configuration
/// errors abort.
pub fn fixed_step_outcome(
    model: &MarketModel,
    x_max: f64,
    h: f64,
    fixed_k: f64,
    t_short: f64,
    cfg: &StepControlConfig,
) -> Result<GridOutcome, SolverError> {
    let grid = GridSpec::with_spacing(x_max, h)?;
    match Integrator::new(model.clone(), grid, *cfg)?.solve_fixed(fixed_k, t_short, false) {
        Ok(sol) => Ok(Ok(sol.state)),
        Err(e @ SolverError::AtTime { .. }) => Ok(Err(e)),
        Err(e) => Err(e),
    }
}

/// Errors and orders from the per-grid outcomes of a halving sequence.
pub fn assemble_convergence(hs: &[f64], outcomes: &[GridOutcome], regime: Option<usize>) -> Vec<ConvergenceRow> {
    let mut rows: Vec<ConvergenceRow> = hs
        .iter()
        .zip(outcomes)
        .map(|(&h, o)| ConvergenceRow {
            h,
            max_error_u: f64::NAN,
            order_u: f64::NAN,
            max_error_w: f64::NAN,
            order_w: f64::NAN,
            failure: o.as_ref().err().cloned(),
        })
        .collect();
    for i in 0..rows.len().saturating_sub(1) {
        if let (Ok(c), Ok(f)) = (&outcomes[i], &outcomes[i + 1]) {
            rows[i].max_error_u = restricted_error(&c.u, &f.u, regime);
            rows[i].max_error_w = restricted_error(&c.w, &f.w, regime);
        }
    }
    for i in 1..rows.len() {
        rows[i].order_u = observed_order(rows[i - 1].max_error_u, rows[i].max_error_u);
        rows[i].order_w = observed_order(rows[i - 1].max_error_w, rows[i].max_error_w);
    }
    rows
}

/// Checks the inputs of a convergence study.
pub fn check_study(hs: &[f64], fixed_k: f64, t_short: f64) -> Result<(), SolverError> {
    if hs.is_empty() || !is_halving(hs) {
        return Err(SolverError::InvalidControl("grid sequence must halve h"));
    }
    if !(fixed_k > 0.0 && t_short > 0.0) {
        return Err(SolverError::InvalidControl("fixed step and horizon must be positive"));
    }
    Ok(())
}

/// Fixed-step fifth-order solves to `t_short` on each grid of `hs`.
///
/// A grid on which the boundary pipeline breaks down yields a row without
/// errors instead of failing the study. `regime` restricts the error norm
/// to one regime.
pub fn convergence_study(
    model: &MarketModel,
    x_max: f64,
    hs: &[f64],
    fixed_k: f64,
    t_short: f64,
    regime: Option<usize>,
    cfg: &StepControlConfig,
) -> Result<Vec<ConvergenceRow>, SolverError> {
    check_study(hs, fixed_k, t_short)?;
    let outcomes = hs
        .iter()
        .map(|&h| fixed_step_outcome(model, x_max, h, fixed_k, t_short, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble_convergence(hs, &outcomes, regime))
}

/// Observed orders of a study, skipping undefined entries.
pub fn orders(rows: &[ConvergenceRow]) -> (Vec<f64>, Vec<f64>) {
    let pick = |f: fn(&ConvergenceRow) -> f64| rows.iter().map(f).filter(|o| !o.is_nan()).collect();
    (pick(|r| r.order_u), pick(|r| r.order_w))
}

/// Payoff surface at expiry.
pub fn expiry_surface(model: &MarketModel, grid: &GridSpec, with_gamma: bool) -> PriceSurface {
    let state = crate::model::initial_state(model, grid, with_gamma);
    PriceSurface::from_state(model, grid, &state)
}
