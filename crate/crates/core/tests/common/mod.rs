#![allow(dead_code)]

use regime_rkf::model::{GridSpec, MarketModel, RegimeParams, StepControlConfig};
use regime_rkf::pricing::PriceSurface;
use regime_rkf::rkf::{Integrator, Solution};

pub type Check = Result<(), String>;

pub fn solve(model: &MarketModel, grid: GridSpec, gamma: bool) -> Solution {
    Integrator::new(model.clone(), grid, StepControlConfig::default())
        .unwrap()
        .solve(gamma)
        .unwrap()
}

/// Every regime takes regime 0's parameters.
pub fn collapsed(model: &MarketModel) -> MarketModel {
    let mut m = model.clone();
    let p = m.regimes[0];
    m.regimes.iter_mut().for_each(|r| *r = p);
    m
}

/// Max discrepancy between a collapsed multi-regime solve and the one-regime solve.
pub fn collapse_discrepancy(model: &MarketModel, grid: GridSpec) -> f64 {
    let multi = solve(&collapsed(model), grid, false).state;
    let single = solve(
        &MarketModel::single_regime(model.strike, model.maturity, model.regimes[0]),
        grid,
        false,
    )
    .state;
    let mut d = 0.0_f64;
    for m in 0..multi.num_regimes() {
        d = d.max((multi.sf[m] - single.sf[0]).abs());
        for (a, b) in multi.u[m].iter().zip(&single.u[0]) {
            d = d.max((a - b).abs());
        }
        for (a, b) in multi.w[m].iter().zip(&single.w[0]) {
            d = d.max((a - b).abs());
        }
    }
    d
}

pub fn check_collapse(model: &MarketModel, grid: GridSpec) -> Check {
    let d = collapse_discrepancy(model, grid);
    if d <= 1e-8 {
        Ok(())
    } else {
        Err(format!("collapse discrepancy {d:e}"))
    }
}

pub fn check_steps(sol: &Solution, model: &MarketModel, tol: f64) -> Check {
    for s in sol.accepted_steps() {
        if s.e_u.is_nan() || s.e_u >= tol {
            return Err(format!("accepted step at t = {} has e_u = {:e}", s.t_start, s.e_u));
        }
    }
    let total: f64 = sol.accepted_steps().map(|s| s.k_used).sum();
    if (total - model.maturity).abs() > 1e-10 {
        return Err(format!("accepted steps sum to {total}"));
    }
    let (t0, sf0) = &sol.trajectory[0];
    if *t0 != 0.0 || sf0.iter().any(|&s| s != model.strike) {
        return Err(format!("boundary starts at {sf0:?}"));
    }
    for pair in sol.trajectory.windows(2) {
        for m in 0..model.num_regimes() {
            if pair[1].1[m] > pair[0].1[m] + 1e-12 {
                return Err(format!("boundary of regime {} rises at tau = {}", m + 1, pair[1].0));
            }
        }
    }
    Ok(())
}

pub fn check_prices(surface: &PriceSurface) -> Check {
    let k = surface.strike;
    for m in 0..surface.num_regimes() {
        let sf = surface.sf[m];
        let spots: Vec<f64> = (1..=400).map(|i| 0.05 * i as f64).collect();
        let mut last = f64::INFINITY;
        for &s in &spots {
            let v = surface.price_at(m, s);
            if v < (k - s).max(0.0) - 1e-9 {
                return Err(format!("regime {} price {v} below payoff at S = {s}", m + 1));
            }
            if v > last + 1e-9 {
                return Err(format!("regime {} price rises at S = {s}", m + 1));
            }
            last = v;
        }
        let eps = 1e-7 * sf;
        let jump = (surface.price_at(m, sf + eps) - surface.price_at(m, sf - eps)).abs();
        if jump > 1e-5 {
            return Err(format!("regime {} price jumps by {jump:e} at the boundary", m + 1));
        }
        let d = surface.delta_at(m, sf * (1.0 + 1e-9));
        if (d + 1.0).abs() > 1e-3 {
            return Err(format!("regime {} delta {d} at the boundary", m + 1));
        }
    }
    Ok(())
}

/// Asset-space gamma at the first `nodes` grid nodes right of the boundary:
/// at most one sign change of successive differences.
pub fn check_gamma_profile(surface: &PriceSurface, nodes: usize) -> Check {
    let y = surface.y.as_ref().ok_or("gamma not computed")?;
    for (m, ym) in y.iter().enumerate() {
        let gamma: Vec<f64> = (0..=nodes)
            .map(|i| {
                let s = surface.sf[m] * surface.grid.node(i).exp();
                (ym[i] - surface.w[m][i]) / (s * s)
            })
            .collect();
        let diffs: Vec<f64> = gamma.windows(2).map(|p| p[1] - p[0]).filter(|d| *d != 0.0).collect();
        let changes = diffs.windows(2).filter(|p| p[0].signum() != p[1].signum()).count();
        if changes > 1 {
            return Err(format!(
                "regime {} gamma differences change sign {changes} times",
                m + 1
            ));
        }
    }
    Ok(())
}

pub fn single_benchmark_params() -> RegimeParams {
    MarketModel::two_regime_benchmark().regimes[0]
}
