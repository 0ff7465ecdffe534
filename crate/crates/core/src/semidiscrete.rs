//! Method-of-lines right-hand side for the coupled option, delta and gamma
//! fields of all regimes.
//!
//! In the front-fixed variable `x = ln(S / s_f(m))` each regime satisfies
//!
//! ```text
//! u_t = sigma^2/2 u'' + xi u'  - (r - q_mm) u + sum_l q_ml u_l(x + d_ml)
//! w_t = sigma^2/2 w'' + xi u'' - (r - q_mm) w + sum_l q_ml w_l(x + d_ml)
//! y_t = sigma^2/2 y'' + xi w'' - (r - q_mm) y + sum_l q_ml y_l(x + d_ml)
//! ```
//!
//! with `w = u'`, `y = w'`, `xi = r - sigma^2/2 + s_f'/s_f` and the uniform
//! shift `d_ml = ln(s_f(m)/s_f(l))`. Second derivatives come from the
//! compact operator; foreign fields are resampled with cubic Hermite cells.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::compact_fd::CompactOperator;
use crate::hermite::cubic_shift_resample;
use crate::model::{MarketModel, SolverState};

/// Position of each regime's blocks inside a flat field vector:
/// all `u` blocks, then all `w` blocks, then (optionally) all `y` blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldLayout {
    pub regimes: usize,
    pub n: usize,
    pub gamma: bool,
}

impl FieldLayout {
    pub fn new(regimes: usize, n: usize, gamma: bool) -> Self {
        Self { regimes, n, gamma }
    }

    pub fn len(&self) -> usize {
        self.n * self.regimes * if self.gamma { 3 } else { 2 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn u(&self, m: usize) -> Range<usize> {
        let s = m * self.n;
        s..s + self.n
    }

    #[inline]
    pub fn w(&self, m: usize) -> Range<usize> {
        let s = (self.regimes + m) * self.n;
        s..s + self.n
    }

    #[inline]
    pub fn y(&self, m: usize) -> Range<usize> {
        let s = (2 * self.regimes + m) * self.n;
        s..s + self.n
    }

    pub fn of_state(state: &SolverState) -> Self {
        Self::new(state.num_regimes(), state.u[0].len(), state.has_gamma())
    }

    pub fn flatten(&self, state: &SolverState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for v in &state.u {
            out.extend_from_slice(v);
        }
        for v in &state.w {
            out.extend_from_slice(v);
        }
        if let Some(y) = &state.y {
            for v in y {
                out.extend_from_slice(v);
            }
        }
        out
    }

    /// Writes a flat vector back into the per-regime vectors of `state`.
    pub fn scatter(&self, flat: &[f64], state: &mut SolverState) {
        for m in 0..self.regimes {
            state.u[m].copy_from_slice(&flat[self.u(m)]);
            state.w[m].copy_from_slice(&flat[self.w(m)]);
            if let Some(y) = state.y.as_mut() {
                y[m].copy_from_slice(&flat[self.y(m)]);
            }
        }
    }
}

/// Dirichlet data at `x = 0` for one regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryValues {
    pub u0: f64,
    pub w0: f64,
    pub y0: f64,
}

impl BoundaryValues {
    pub fn from_boundary(strike: f64, sf: f64) -> Self {
        Self {
            u0: strike - sf,
            w0: -sf,
            y0: -sf,
        }
    }
}

/// Everything `rhs` needs beyond the fields themselves.
#[derive(Debug, Clone)]
pub struct RhsContext {
    pub xi: Vec<f64>,
    pub sf: Vec<f64>,
    pub slopes: Vec<f64>,
    pub boundary: Vec<BoundaryValues>,
    /// Compact second derivatives of `u`, `w`, `y` per regime (interior).
    pub d2u: Vec<Vec<f64>>,
    pub d2w: Vec<Vec<f64>>,
    pub d2y: Option<Vec<Vec<f64>>>,
    /// `sum_l q_ml f_l(x + d_ml)` on the interior of regime `m`, per field.
    pub coupled_u: Vec<Vec<f64>>,
    pub coupled_w: Vec<Vec<f64>>,
    pub coupled_y: Option<Vec<Vec<f64>>>,
}

/// Fourth-order extrapolation of interior second derivatives to both ends,
/// giving full nodal slope data for the Hermite cells next to the boundaries.
fn nodal_with_ends(interior: &[f64], left: f64, right: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(interior.len() + 2);
    v.push(left);
    v.extend_from_slice(interior);
    v.push(right);
    v
}

fn extrapolated_ends(d: &[f64]) -> (f64, f64) {
    let n = d.len();
    let left = 4.0 * d[0] - 6.0 * d[1] + 4.0 * d[2] - d[3];
    let right = 4.0 * d[n - 1] - 6.0 * d[n - 2] + 4.0 * d[n - 3] - d[n - 4];
    (left, right)
}

/// Computes `xi`, Dirichlet data, compact second derivatives and the
/// resampled cross-regime sums for one stage.
pub fn build_context(
    flat: &[f64],
    layout: &FieldLayout,
    sf: &[f64],
    slopes: &[f64],
    model: &MarketModel,
    op: &CompactOperator,
) -> RhsContext {
    let ni = layout.regimes;
    let n = layout.n;
    let h = op.h();
    let strike = model.strike;

    let xi: Vec<f64> = (0..ni)
        .map(|m| model.regimes[m].log_drift() + slopes[m] / sf[m])
        .collect();
    let boundary: Vec<BoundaryValues> = sf.iter().map(|&s| BoundaryValues::from_boundary(strike, s)).collect();

    let mut d2u = vec![vec![0.0; n]; ni];
    let mut d2w = vec![vec![0.0; n]; ni];
    let mut d2y = layout.gamma.then(|| vec![vec![0.0; n]; ni]);
    for m in 0..ni {
        op.second_derivative_into(&flat[layout.u(m)], boundary[m].u0, 0.0, &mut d2u[m]);
        op.second_derivative_into(&flat[layout.w(m)], boundary[m].w0, 0.0, &mut d2w[m]);
        if let Some(d2y) = d2y.as_mut() {
            op.second_derivative_into(&flat[layout.y(m)], boundary[m].y0, 0.0, &mut d2y[m]);
        }
    }

    let mut coupled_u = vec![vec![0.0; n]; ni];
    let mut coupled_w = vec![vec![0.0; n]; ni];
    let mut coupled_y = layout.gamma.then(|| vec![vec![0.0; n]; ni]);
    if ni > 1 {
        // full nodal arrays (0..=M) of every regime, built once per stage
        let nodal: Vec<_> = (0..ni)
            .map(|l| {
                let b = boundary[l];
                let (u_lo, u_hi) = (b.w0, 0.0);
                let (w_lo, w_hi) = extrapolated_ends(&d2u[l]);
                let u = nodal_with_ends(&flat[layout.u(l)], b.u0, 0.0);
                let du = nodal_with_ends(&flat[layout.w(l)], u_lo, u_hi);
                let dw = nodal_with_ends(&d2u[l], w_lo, w_hi);
                let y = layout.gamma.then(|| {
                    let (y_lo, y_hi) = extrapolated_ends(&d2w[l]);
                    (
                        nodal_with_ends(&flat[layout.y(l)], b.y0, 0.0),
                        nodal_with_ends(&d2w[l], y_lo, y_hi),
                    )
                });
                (u, du, dw, y)
            })
            .collect();
        let mut buf = vec![0.0; n + 2];
        for m in 0..ni {
            for l in 0..ni {
                let q = model.generator.get(m, l);
                if l == m || q == 0.0 {
                    continue;
                }
                let shift = libm::log(sf[m] / sf[l]);
                let sl = sf[l];
                let (u, du, dw, y) = &nodal[l];
                cubic_shift_resample(u, du, h, shift, |x| strike - libm::exp(x) * sl, &mut buf);
                axpy(q, &buf[1..=n], &mut coupled_u[m]);
                cubic_shift_resample(du, dw, h, shift, |x| -libm::exp(x) * sl, &mut buf);
                axpy(q, &buf[1..=n], &mut coupled_w[m]);
                if let (Some((yv, ys)), Some(cy)) = (y, coupled_y.as_mut()) {
                    cubic_shift_resample(yv, ys, h, shift, |x| -libm::exp(x) * sl, &mut buf);
                    axpy(q, &buf[1..=n], &mut cy[m]);
                }
            }
        }
    }

    RhsContext {
        xi,
        sf: sf.to_vec(),
        slopes: slopes.to_vec(),
        boundary,
        d2u,
        d2w,
        d2y,
        coupled_u,
        coupled_w,
        coupled_y,
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Time derivative of every field, written into `out` (same layout as `flat`).
pub fn rhs(flat: &[f64], layout: &FieldLayout, ctx: &RhsContext, model: &MarketModel, out: &mut [f64]) {
    for m in 0..layout.regimes {
        let p = model.regimes[m];
        let half_var = 0.5 * p.sigma * p.sigma;
        let decay = p.rate - model.generator.get(m, m);
        let xi = ctx.xi[m];

        let (u, w) = (&flat[layout.u(m)], &flat[layout.w(m)]);
        let (d2u, d2w) = (&ctx.d2u[m], &ctx.d2w[m]);
        let (cu, cw) = (&ctx.coupled_u[m], &ctx.coupled_w[m]);
        for (i, o) in out[layout.u(m)].iter_mut().enumerate() {
            *o = half_var * d2u[i] + xi * w[i] - decay * u[i] + cu[i];
        }
        for (i, o) in out[layout.w(m)].iter_mut().enumerate() {
            *o = half_var * d2w[i] + xi * d2u[i] - decay * w[i] + cw[i];
        }
        if layout.gamma {
            let y = &flat[layout.y(m)];
            let d2y = &ctx.d2y.as_ref().expect("gamma context")[m];
            let cy = &ctx.coupled_y.as_ref().expect("gamma context")[m];
            for (i, o) in out[layout.y(m)].iter_mut().enumerate() {
                *o = half_var * d2y[i] + xi * d2w[i] - decay * y[i] + cy[i];
            }
        }
    }
}
