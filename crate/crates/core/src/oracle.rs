//! Reference pricers on a different formulation: projected SOR on an
//! implicit asset-space grid, and a Cox–Ross–Rubinstein tree.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::MarketModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("invalid oracle configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("projected SOR did not converge in {sweeps} sweeps at time step {step}")]
    NoConvergence { step: usize, sweeps: usize },
}

/// Grid and iteration settings of [`psor_price`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsorConfig {
    pub s_max: f64,
    /// Intervals on `[0, s_max]`.
    pub nodes: usize,
    pub time_steps: usize,
    pub omega: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl PsorConfig {
    /// Desk-scale defaults for a strike `k`: `S` up to `5 K`.
    pub fn for_strike(k: f64) -> Self {
        Self {
            s_max: 5.0 * k,
            nodes: 600,
            time_steps: 4000,
            omega: 1.7,
            tol: 1e-9,
            max_sweeps: 10_000,
        }
    }

    fn validate(&self) -> Result<(), OracleError> {
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(OracleError::InvalidConfig("omega must lie in (0, 2)"));
        }
        if self.nodes < 4 || self.nodes > 2000 {
            return Err(OracleError::InvalidConfig("nodes must lie in [4, 2000]"));
        }
        if self.time_steps == 0 || self.time_steps > 20_000 {
            return Err(OracleError::InvalidConfig("time_steps must lie in [1, 20000]"));
        }
        if !(self.s_max > 0.0 && self.tol > 0.0) {
            return Err(OracleError::InvalidConfig("s_max and tol must be positive"));
        }
        Ok(())
    }
}

/// Per-regime nodal values at maturity plus interpolated spot prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PsorResult {
    pub ds: f64,
    /// `values[m][i]` at `S = i ds`.
    pub values: Vec<Vec<f64>>,
    /// `prices[m][j]` at `spots[j]`.
    pub prices: Vec<Vec<f64>>,
    /// Largest node with `V = payoff`, per regime.
    pub boundary: Vec<f64>,
    pub max_sweeps_used: usize,
}

impl PsorResult {
    /// Linear interpolation of regime `m` at `s`.
    pub fn price(&self, m: usize, s: f64) -> f64 {
        let v = &self.values[m];
        let x = s / self.ds;
        let i = (libm::floor(x) as usize).min(v.len() - 2);
        let t = x - i as f64;
        v[i] * (1.0 - t) + v[i + 1] * t
    }
}

/// Backward Euler in time, central differences in `S`, projected SOR for the
/// early-exercise constraint. Switching terms use the other regimes' values
/// from the previous time level; the own-regime intensity is implicit.
pub fn psor_price(model: &MarketModel, cfg: &PsorConfig, spots: &[f64]) -> Result<PsorResult, OracleError> {
    cfg.validate()?;
    let n = model.num_regimes();
    let k = model.strike;
    let nn = cfg.nodes;
    let ds = cfg.s_max / nn as f64;
    let dt = model.maturity / cfg.time_steps as f64;
    let payoff: Vec<f64> = (0..=nn).map(|i| (k - i as f64 * ds).max(0.0)).collect();
    let mut v = vec![payoff.clone(); n];

    // tridiagonal rows per regime: lower, diagonal, upper
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..n)
        .map(|m| {
            let p = model.regimes[m];
            let qmm = model.generator.get(m, m);
            let mut lo = vec![0.0; nn + 1];
            let mut di = vec![1.0; nn + 1];
            let mut up = vec![0.0; nn + 1];
            for i in 1..nn {
                let s = i as f64;
                let diff = 0.5 * p.sigma * p.sigma * s * s;
                let conv = 0.5 * p.rate * s;
                lo[i] = -dt * (diff - conv);
                up[i] = -dt * (diff + conv);
                di[i] = 1.0 + dt * (2.0 * diff + p.rate - qmm);
            }
            (lo, di, up)
        })
        .collect();

    let mut max_used = 0;
    let mut rhs = vec![0.0; nn + 1];
    for step in 0..cfg.time_steps {
        let old = v.clone();
        for m in 0..n {
            for i in 0..=nn {
                let c: f64 = (0..n)
                    .filter(|&l| l != m)
                    .map(|l| model.generator.get(m, l) * old[l][i])
                    .sum();
                rhs[i] = old[m][i] + dt * c;
            }
            let (lo, di, up) = &rows[m];
            let x = &mut v[m];
            x[0] = k;
            x[nn] = 0.0;
            let mut converged = false;
            for sweep in 1..=cfg.max_sweeps {
                let mut change = 0.0_f64;
                for i in 1..nn {
                    let gs = (rhs[i] - lo[i] * x[i - 1] - up[i] * x[i + 1]) / di[i];
                    let next = (x[i] + cfg.omega * (gs - x[i])).max(payoff[i]);
                    change = change.max((next - x[i]).abs());
                    x[i] = next;
                }
                if change <= cfg.tol {
                    max_used = max_used.max(sweep);
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(OracleError::NoConvergence {
                    step,
                    sweeps: cfg.max_sweeps,
                });
            }
        }
    }

    let boundary = v
        .iter()
        .map(|x| {
            let last = (1..nn)
                .take_while(|&i| x[i] <= payoff[i] + 1e-12 && payoff[i] > 0.0)
                .last();
            last.map_or(0.0, |i| i as f64 * ds)
        })
        .collect();
    let mut out = PsorResult {
        ds,
        values: v,
        prices: Vec::new(),
        boundary,
        max_sweeps_used: max_used,
    };
    out.prices = (0..n)
        .map(|m| spots.iter().map(|&s| out.price(m, s)).collect())
        .collect();
    Ok(out)
}

/// American put on a Cox–Ross–Rubinstein tree with `steps` periods.
pub fn crr_american_put(spot: f64, strike: f64, rate: f64, sigma: f64, maturity: f64, steps: usize) -> f64 {
    let dt = maturity / steps as f64;
    let u = libm::exp(sigma * libm::sqrt(dt));
    let d = 1.0 / u;
    let disc = libm::exp(-rate * dt);
    let p = (libm::exp(rate * dt) - d) / (u - d);
    // S at level n, node j is spot * u^(2j - n)
    let pw: Vec<f64> = (0..=2 * steps).map(|e| libm::pow(u, e as f64 - steps as f64)).collect();
    let at = |n: usize, j: usize| spot * pw[steps + 2 * j - n];
    let mut v: Vec<f64> = (0..=steps).map(|j| (strike - at(steps, j)).max(0.0)).collect();
    for n in (0..steps).rev() {
        for j in 0..=n {
            let cont = disc * (p * v[j + 1] + (1.0 - p) * v[j]);
            v[j] = cont.max(strike - at(n, j));
        }
    }
    v[0]
}
