//! Embedded Cash–Karp Runge–Kutta integration of the boundary ODE and the
//! semi-discrete field system, with error-based step adaptation.
//!
//! Each step first advances the boundary positions (the slope function needs
//! only the entry-level fields), shrinking the step while the slope quadratic
//! has no real root. The fields are then advanced with the same step; the
//! difference between the fifth- and fourth-order option values decides
//! acceptance and the next step size. The fifth-order solution is committed.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::compact_fd::CompactOperator;
use crate::error::SolverError;
use crate::freeboundary::{regime_slope, ExtrapolationWeights};
use crate::model::{initial_state, FieldCoupling, GridSpec, MarketModel, SolverState, StepControlConfig};
use crate::semidiscrete::{build_context, rhs, FieldLayout};

/// Largest step growth allowed per proposal.
pub const MAX_GROWTH: f64 = 5.0;
/// Smallest step shrink allowed per proposal.
pub const MIN_SHRINK: f64 = 0.1;
/// Steps below this fraction of the maturity count as stalled.
pub const STALL_FRACTION: f64 = 1e-14;

/// Cash–Karp coefficients.
pub struct ButcherTableau;

impl ButcherTableau {
    pub const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0];
    #[rustfmt::skip]
    pub const A: [[f64; 5]; 6] = [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
        [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
        [1631.0 / 55296.0, 175.0 / 512.0, 575.0 / 13824.0, 44275.0 / 110592.0, 253.0 / 4096.0],
    ];
    pub const B5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
    pub const B4: [f64; 6] = [
        2825.0 / 27648.0,
        0.0,
        18575.0 / 48384.0,
        13525.0 / 55296.0,
        277.0 / 14336.0,
        1.0 / 4.0,
    ];

    /// Weight sums and row-sum conditions, to `1e-15`.
    pub fn is_consistent() -> bool {
        let one = |b: &[f64; 6]| (b.iter().sum::<f64>() - 1.0).abs() <= 1e-15;
        let rows = (0..6).all(|i| (Self::A[i].iter().sum::<f64>() - Self::C[i]).abs() <= 1e-15);
        one(&Self::B5) && one(&Self::B4) && rows
    }
}

/// Stage inputs, stage derivatives and both embedded solutions of one step.
#[derive(Debug, Clone)]
pub struct EmbeddedStep {
    pub high: Vec<f64>,
    pub low: Vec<f64>,
    pub stage_inputs: Vec<Vec<f64>>,
    pub stage_rates: Vec<Vec<f64>>,
}

/// One Cash–Karp step of `y' = f(stage, y)` with step `k`.
///
/// `f` receives the stage index so callers can attach stage-dependent data.
pub fn try_embedded_step<E>(
    y: &[f64],
    k: f64,
    mut f: impl FnMut(usize, &[f64], &mut [f64]) -> Result<(), E>,
) -> Result<EmbeddedStep, E> {
    let n = y.len();
    let mut stage_inputs = Vec::with_capacity(6);
    let mut stage_rates: Vec<Vec<f64>> = Vec::with_capacity(6);
    for s in 0..6 {
        let mut ys = y.to_vec();
        for (j, rate) in stage_rates.iter().enumerate() {
            let a = ButcherTableau::A[s][j] * k;
            if a != 0.0 {
                for (yi, ri) in ys.iter_mut().zip(rate) {
                    *yi += a * ri;
                }
            }
        }
        let mut rate = vec![0.0; n];
        f(s, &ys, &mut rate)?;
        stage_inputs.push(ys);
        stage_rates.push(rate);
    }
    let combine = |b: &[f64; 6]| {
        let mut out = y.to_vec();
        for (s, rate) in stage_rates.iter().enumerate() {
            let c = b[s] * k;
            if c != 0.0 {
                for (o, r) in out.iter_mut().zip(rate) {
                    *o += c * r;
                }
            }
        }
        out
    };
    let high = combine(&ButcherTableau::B5);
    let low = combine(&ButcherTableau::B4);
    Ok(EmbeddedStep {
        high,
        low,
        stage_inputs,
        stage_rates,
    })
}

/// Infallible variant of [`try_embedded_step`].
pub fn embedded_step(y: &[f64], k: f64, mut f: impl FnMut(usize, &[f64], &mut [f64])) -> EmbeddedStep {
    match try_embedded_step::<core::convert::Infallible>(y, k, |s, a, b| {
        f(s, a, b);
        Ok(())
    }) {
        Ok(step) => step,
        Err(e) => match e {},
    }
}

/// One attempted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t_start: f64,
    pub k_used: f64,
    pub e_u: f64,
    pub accepted: bool,
    /// Boundary-root shrinks performed before this attempt.
    pub shrink_retries: u32,
    pub k_next: f64,
}

/// Error estimate and next step from the two embedded option values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepProposal {
    pub e_u: f64,
    pub accepted: bool,
    pub k_next: f64,
}

/// Max-norm difference of the option blocks; accept iff strictly below `tol`.
pub fn error_and_propose(
    high: &[f64],
    low: &[f64],
    layout: &FieldLayout,
    k: f64,
    cfg: &StepControlConfig,
) -> StepProposal {
    let mut e_u = 0.0_f64;
    for m in 0..layout.regimes {
        let r = layout.u(m);
        for (a, b) in high[r.clone()].iter().zip(&low[r]) {
            e_u = e_u.max((a - b).abs());
        }
    }
    propose(e_u, k, cfg)
}

/// Step proposal for a given error estimate.
pub fn propose(e_u: f64, k: f64, cfg: &StepControlConfig) -> StepProposal {
    let accepted = e_u < cfg.tol;
    let (acc_exp, rej_exp) = cfg.exponents();
    let factor = if e_u == 0.0 {
        MAX_GROWTH
    } else if e_u.is_nan() {
        MIN_SHRINK
    } else {
        let exp = if accepted { acc_exp } else { rej_exp };
        (cfg.safety * libm::pow(cfg.tol / e_u, exp)).clamp(MIN_SHRINK, MAX_GROWTH)
    };
    StepProposal {
        e_u,
        accepted,
        k_next: factor * k,
    }
}

/// Boundary stages of one step.
#[derive(Debug, Clone)]
pub struct BoundaryStages {
    pub sf5: Vec<f64>,
    pub sf4: Vec<f64>,
    /// Boundary position entering each stage.
    pub stage_sf: Vec<Vec<f64>>,
    /// Boundary slope evaluated at each stage.
    pub stage_slopes: Vec<Vec<f64>>,
}

/// Accepted trajectory of a solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub state: SolverState,
    /// `(tau, s_f)` at the start and after every accepted step.
    pub trajectory: Vec<(f64, Vec<f64>)>,
    /// Every attempted step, accepted or not.
    pub steps: Vec<StepRecord>,
}

impl Solution {
    pub fn accepted_steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(|s| s.accepted)
    }
}

/// Solver bound to one model, grid and controller configuration.
#[derive(Debug, Clone)]
pub struct Integrator {
    model: MarketModel,
    grid: GridSpec,
    op: CompactOperator,
    weights: ExtrapolationWeights,
    cfg: StepControlConfig,
}

impl Integrator {
    pub fn new(model: MarketModel, grid: GridSpec, cfg: StepControlConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let op = CompactOperator::new(grid.m, grid.h)?;
        let needed = 3 * cfg.xbar_cells;
        if needed > grid.interior() {
            return Err(SolverError::StencilOutOfRange {
                needed,
                available: grid.interior(),
            });
        }
        Ok(Self {
            weights: ExtrapolationWeights::new(cfg.xbar_cells, grid.h),
            model,
            grid,
            op,
            cfg,
        })
    }

    pub fn model(&self) -> &MarketModel {
        &self.model
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn operator(&self) -> &CompactOperator {
        &self.op
    }

    pub fn config(&self) -> &StepControlConfig {
        &self.cfg
    }

    /// Boundary slopes of every regime for boundary positions `sf` and
    /// fields `u`, `w`.
    pub fn slopes(&self, sf: &[f64], u: &[Vec<f64>], w: &[Vec<f64>], out: &mut [f64]) -> Result<(), SolverError> {
        if sf.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(SolverError::NonFiniteSlope);
        }
        for (m, o) in out.iter_mut().enumerate() {
            *o = regime_slope(m, sf, u, w, &self.model, &self.grid, &self.weights)?.slope;
        }
        Ok(())
    }

    /// Six boundary stages with the fields frozen at the entry level; the
    /// cross-regime samples follow each stage's boundary positions.
    pub fn boundary_stages(&self, state: &SolverState, k: f64) -> Result<BoundaryStages, SolverError> {
        let step = try_embedded_step(&state.sf, k, |_, sf, out| self.slopes(sf, &state.u, &state.w, out))?;
        if step.high.iter().chain(&step.low).any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(SolverError::NonFiniteSlope);
        }
        Ok(BoundaryStages {
            sf5: step.high,
            sf4: step.low,
            stage_sf: step.stage_inputs,
            stage_slopes: step.stage_rates,
        })
    }

    /// Six field stages; returns the fifth- and fourth-order candidates.
    pub fn field_stages(&self, state: &SolverState, b: &BoundaryStages, k: f64) -> (Vec<f64>, Vec<f64>, FieldLayout) {
        let layout = FieldLayout::of_state(state);
        let y0 = layout.flatten(state);
        let step = embedded_step(&y0, k, |s, y, out| {
            let (sf, slopes) = match self.cfg.field_coupling {
                FieldCoupling::Frozen => (&state.sf, &b.stage_slopes[0]),
                FieldCoupling::StageCoupled => (&b.stage_sf[s], &b.stage_slopes[s]),
            };
            let ctx = build_context(y, &layout, sf, slopes, &self.model, &self.op);
            rhs(y, &layout, &ctx, &self.model, out);
        });
        (step.high, step.low, layout)
    }

    fn stalled(&self, k: f64) -> bool {
        k.is_nan() || k < STALL_FRACTION * self.model.maturity
    }

    /// Advances `state` by one accepted step, starting from trial step `k`.
    /// Returns the proposal for the following step. Every attempt is pushed
    /// onto `records`.
    pub fn advance(
        &self,
        state: &mut SolverState,
        k: f64,
        t_end: f64,
        records: &mut Vec<StepRecord>,
    ) -> Result<f64, SolverError> {
        let mut k = k;
        loop {
            let t = state.tau;
            let mut clamped = false;
            if t + k >= t_end {
                k = t_end - t;
                clamped = true;
            }
            let mut shrinks = 0u32;
            let stages = loop {
                match self.boundary_stages(state, k) {
                    Ok(b) => break b,
                    Err(e) if e.is_step_recoverable() => {
                        k *= self.cfg.phi;
                        clamped = false;
                        shrinks += 1;
                        if self.stalled(k) {
                            return Err(SolverError::AtTime {
                                tau: t,
                                source: Box::new(e),
                            });
                        }
                    }
                    Err(e) => return Err(e),
                }
            };
            let (high, low, layout) = self.field_stages(state, &stages, k);
            let p = error_and_propose(&high, &low, &layout, k, &self.cfg);
            records.push(StepRecord {
                t_start: t,
                k_used: k,
                e_u: p.e_u,
                accepted: p.accepted,
                shrink_retries: shrinks,
                k_next: p.k_next,
            });
            if p.accepted {
                layout.scatter(&high, state);
                state.sf = stages.sf5;
                state.tau = if clamped { t_end } else { t + k };
                return Ok(p.k_next);
            }
            k = p.k_next;
            if self.stalled(k) {
                return Err(SolverError::StepStalled { tau: t, k });
            }
        }
    }

    /// Adaptive integration from expiry to maturity.
    pub fn solve(&self, with_gamma: bool) -> Result<Solution, SolverError> {
        self.solve_until(self.model.maturity, with_gamma)
    }

    /// Adaptive integration from expiry to `t_end`.
    pub fn solve_until(&self, t_end: f64, with_gamma: bool) -> Result<Solution, SolverError> {
        let mut state = initial_state(&self.model, &self.grid, with_gamma);
        let mut trajectory = vec![(0.0, state.sf.clone())];
        let mut steps = Vec::new();
        let mut k = self.cfg.initial_step(&self.grid);
        while state.tau < t_end {
            k = self.advance(&mut state, k, t_end, &mut steps)?;
            trajectory.push((state.tau, state.sf.clone()));
        }
        Ok(Solution {
            state,
            trajectory,
            steps,
        })
    }

    /// Fixed-step fifth-order integration to `t_end` (no error control).
    pub fn solve_fixed(&self, k: f64, t_end: f64, with_gamma: bool) -> Result<Solution, SolverError> {
        let mut state = initial_state(&self.model, &self.grid, with_gamma);
        let mut trajectory = vec![(0.0, state.sf.clone())];
        let mut steps = Vec::new();
        let n_steps = libm::ceil(t_end / k - 1e-9).max(0.0) as usize;
        for n in 0..n_steps {
            let t = state.tau;
            let kk = if n + 1 == n_steps { t_end - t } else { k };
            let stages = self.boundary_stages(&state, kk).map_err(|e| SolverError::AtTime {
                tau: t,
                source: Box::new(e),
            })?;
            let (high, low, layout) = self.field_stages(&state, &stages, kk);
            let p = error_and_propose(&high, &low, &layout, kk, &self.cfg);
            layout.scatter(&high, &mut state);
            state.sf = stages.sf5;
            state.tau = if n + 1 == n_steps { t_end } else { t + kk };
            steps.push(StepRecord {
                t_start: t,
                k_used: kk,
                e_u: p.e_u,
                accepted: true,
                shrink_retries: 0,
                k_next: k,
            });
            trajectory.push((state.tau, state.sf.clone()));
        }
        Ok(Solution {
            state,
            trajectory,
            steps,
        })
    }
}

/// Convenience wrapper: build an [`Integrator`] and run it to maturity.
pub fn solve(
    model: &MarketModel,
    grid: &GridSpec,
    cfg: &StepControlConfig,
    with_gamma: bool,
) -> Result<Solution, SolverError> {
    Integrator::new(model.clone(), *grid, *cfg)?.solve(with_gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tableau_is_consistent() {
        assert!(ButcherTableau::is_consistent());
        assert_eq!(ButcherTableau::A[5][0], 1631.0 / 55296.0);
    }

    #[test]
    fn zero_rhs_keeps_state() {
        let y = [1.0, -2.0, 3.5];
        let s = embedded_step(&y, 0.1, |_, _, out| out.fill(0.0));
        assert_eq!(s.high, y);
        assert_eq!(s.low, y);
    }

    #[test]
    fn scalar_linear_local_order() {
        let lambda = -1.3;
        let local = |k: f64| {
            let s = embedded_step(&[1.0], k, |_, y, out| out[0] = lambda * y[0]);
            ((s.high[0] - libm::exp(lambda * k)).abs(), (s.high[0] - s.low[0]).abs())
        };
        let (e1, d1) = local(0.2);
        let (e2, d2) = local(0.1);
        // local error O(k^6) of the fifth-order solution, O(k^5) for the estimate
        assert!(libm::log2(e1 / e2) > 5.5, "{}", libm::log2(e1 / e2));
        assert!(libm::log2(d1 / d2) > 4.5, "{}", libm::log2(d1 / d2));
    }

    #[test]
    fn controller_arithmetic() {
        let cfg = StepControlConfig::default();
        let p = propose(1e-6, 1.0, &cfg);
        assert!(!p.accepted);
        assert!((p.k_next - 0.9).abs() < 1e-15);
        let p = propose(1e-8, 1.0, &cfg);
        assert!(p.accepted);
        assert!((p.k_next - 0.9 * libm::pow(100.0, 0.25)).abs() < 1e-12);
        assert!((p.k_next - 2.84605).abs() < 1e-5);
        let p = propose(1e-4, 1.0, &cfg);
        assert!(!p.accepted);
        assert!((p.k_next - 0.3582965).abs() < 1e-6);
        let p = propose(0.0, 2.0, &cfg);
        assert!(p.accepted && p.k_next == 10.0);
        // growth and shrink caps
        assert_eq!(propose(1e-30, 1.0, &cfg).k_next, MAX_GROWTH);
        assert_eq!(propose(1e10, 1.0, &cfg).k_next, MIN_SHRINK);
    }

    #[test]
    fn standard_controller_swaps_exponents() {
        let cfg = StepControlConfig {
            standard_controller: true,
            ..Default::default()
        };
        let p = propose(1e-8, 1.0, &cfg);
        assert!((p.k_next - 0.9 * libm::pow(100.0, 0.2)).abs() < 1e-12);
    }
}
