mod common;

use common::*;
use regime_rkf::model::{GridSpec, MarketModel, StepControlConfig};
use regime_rkf::pricing::{convergence_study, PriceSurface};
use regime_rkf::rkf::Integrator;
use regime_rkf::SolverError;

fn coarse() -> GridSpec {
    GridSpec::new(3.0, 120).unwrap()
}

#[test]
fn two_identical_regimes_reduce_to_one() {
    check_collapse(&MarketModel::two_regime_benchmark(), coarse()).unwrap();
}

#[test]
fn four_identical_regimes_reduce_to_one() {
    check_collapse(&MarketModel::four_regime_benchmark(), coarse()).unwrap();
}

#[test]
fn step_and_boundary_invariants() {
    let model = MarketModel::two_regime_benchmark();
    let sol = solve(&model, coarse(), false);
    check_steps(&sol, &model, StepControlConfig::default().tol).unwrap();
    assert!(sol.steps.iter().any(|s| !s.accepted));
    assert_eq!(sol.steps[0].k_used, coarse().h * coarse().h);
}

#[test]
fn price_shape() {
    let model = MarketModel::four_regime_benchmark();
    let grid = coarse();
    let sol = solve(&model, grid, false);
    check_prices(&PriceSurface::from_state(&model, &grid, &sol.state)).unwrap();
}

#[test]
fn gamma_has_no_spurious_oscillation() {
    let model = MarketModel::four_regime_benchmark();
    let grid = GridSpec::with_spacing(3.0, 0.02).unwrap();
    let sol = solve(&model, grid, true);
    check_gamma_profile(&PriceSurface::from_state(&model, &grid, &sol.state), 10).unwrap();
}

#[test]
fn gamma_vanishes_at_the_boundary() {
    let model = MarketModel::two_regime_benchmark();
    let grid = coarse();
    let sol = solve(&model, grid, true);
    let s = PriceSurface::from_state(&model, &grid, &sol.state);
    for m in 0..2 {
        let sf = s.sf[m];
        assert_eq!(s.y.as_ref().unwrap()[m][0], -sf);
        assert_eq!(s.gamma_at(m, sf * (1.0 - 1e-12)).unwrap(), 0.0);
        assert!(s.gamma_at(m, sf * (1.0 + 1e-12)).unwrap().abs() < 1e-9);
        assert!(s.gamma_at(m, 1.5 * sf).unwrap() > 0.0);
    }
}

#[test]
fn one_regime_single_run_is_deterministic() {
    let model = MarketModel::single_regime(9.0, 1.0, single_benchmark_params());
    let a = solve(&model, coarse(), false);
    let b = solve(&model, coarse(), false);
    assert_eq!(a.state, b.state);
    assert_eq!(a.steps, b.steps);
}

#[test]
fn coarse_grid_records_failure_instead_of_aborting() {
    let rows = convergence_study(
        &MarketModel::two_regime_benchmark(),
        3.0,
        &[0.2, 0.1],
        1e-4,
        0.01,
        Some(0),
        &StepControlConfig::default(),
    )
    .unwrap();
    assert!(rows[0].failure.is_some());
    assert!(rows[0].max_error_u.is_nan() && rows[1].order_u.is_nan());
}

#[test]
fn too_few_nodes_for_stencil() {
    let err = Integrator::new(
        MarketModel::two_regime_benchmark(),
        GridSpec::new(3.0, 12).unwrap(),
        StepControlConfig::default(),
    );
    assert!(matches!(err, Err(SolverError::StencilOutOfRange { .. })));
}
