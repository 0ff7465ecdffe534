use proptest::prelude::*;
use regime_rkf::compact_fd::CompactOperator;
use regime_rkf::freeboundary::ExtrapolationWeights;
use regime_rkf::hermite::{cubic_shift_resample, quintic_fit};
use regime_rkf::rkf::{embedded_step, ButcherTableau};

fn poly(c: &[f64], x: f64) -> (f64, f64, f64, f64) {
    let mut v = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    let mut d3 = 0.0;
    for (n, &a) in c.iter().enumerate() {
        let n = n as i32;
        v += a * x.powi(n);
        if n >= 1 {
            d1 += a * n as f64 * x.powi(n - 1);
        }
        if n >= 2 {
            d2 += a * (n * (n - 1)) as f64 * x.powi(n - 2);
        }
        if n >= 3 {
            d3 += a * (n * (n - 1) * (n - 2)) as f64 * x.powi(n - 3);
        }
    }
    (v, d1, d2, d3)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn sin_error(m: usize) -> f64 {
    let h = 1.0 / m as f64;
    let op = CompactOperator::new(m, h).unwrap();
    let f = |x: f64| (3.0 * x).sin();
    let vals: Vec<f64> = (1..m).map(|i| f(i as f64 * h)).collect();
    let d2 = op.second_derivative(&vals, f(0.0), f(1.0));
    d2.iter()
        .enumerate()
        .map(|(i, d)| (d + 9.0 * f((i + 1) as f64 * h)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn compact_operator_order_on_sine() {
    let e1 = sin_error(40);
    let e2 = sin_error(80);
    let order = (e1 / e2).log2();
    assert!(order >= 3.5, "observed order {order}");
}

#[test]
fn compact_operator_exact_on_quadratics() {
    let m = 50;
    let h = 2.0 / m as f64;
    let op = CompactOperator::new(m, h).unwrap();
    let f = |x: f64| 1.5 - 0.7 * x + 2.25 * x * x;
    let vals: Vec<f64> = (1..m).map(|i| f(i as f64 * h)).collect();
    let d2 = op.second_derivative(&vals, f(0.0), f(2.0));
    assert!(d2.iter().all(|d| (d - 4.5).abs() <= 1e-10));
}

#[test]
fn extrapolation_residual_scales_with_sixth_power() {
    // x^6 is the first monomial the weights do not annihilate
    let residual = |xbar: f64| {
        let w = ExtrapolationWeights::new(4, xbar / 4.0);
        w.combine([xbar.powi(6), (2.0 * xbar).powi(6), (3.0 * xbar).powi(6)])
    };
    for xbar in [0.4, 0.2, 0.1, 0.05] {
        let r = residual(xbar);
        assert!((r / xbar.powi(6) - 162.0).abs() < 1e-8, "xbar {xbar}: {r}");
    }
}

#[test]
fn cash_karp_weights() {
    assert!(ButcherTableau::is_consistent());
    assert!((ButcherTableau::B5.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!((ButcherTableau::B4.iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

#[test]
fn cash_karp_local_order_five() {
    // y' = y^2, y(0) = 1 has y = 1 / (1 - t)
    let f = |_: usize, y: &[f64], out: &mut [f64]| out[0] = y[0] * y[0];
    let err = |k: f64| (embedded_step(&[1.0], k, f).high[0] - 1.0 / (1.0 - k)).abs();
    let order = (err(0.02) / err(0.01)).log2();
    assert!(order > 5.5 && order < 6.5, "local order {order}");
}

#[test]
fn zero_shift_resample_is_identity() {
    let vals = [3.0, 2.0, 1.5, 0.25, 0.0];
    let slopes = [-1.0, -0.8, -0.4, -0.1, 0.0];
    let mut out = [0.0; 5];
    cubic_shift_resample(&vals, &slopes, 0.1, 0.0, |_| f64::NAN, &mut out);
    assert_eq!(out, vals);
}

proptest! {
    #[test]
    fn quintic_hermite_reproduces_quintics(
        c in prop::collection::vec(-3.0..3.0_f64, 6),
        x0 in -1.0..1.0_f64,
        h in 0.01..0.5_f64,
        t in 0.0..1.0_f64,
    ) {
        let nodes = [x0, x0 + h, x0 + 2.0 * h];
        let u = nodes.map(|x| poly(&c, x).0);
        let w = nodes.map(|x| poly(&c, x).1);
        let patch = quintic_fit(x0, h, u, w);
        let x = x0 + 2.0 * h * t;
        let (v, d1, d2) = patch.eval012(x).unwrap();
        let (ev, ed1, ed2, _) = poly(&c, x);
        let scale = 1.0 + c.iter().map(|a| a.abs()).sum::<f64>() * 10.0;
        prop_assert!((v - ev).abs() <= 1e-9 * scale);
        prop_assert!((d1 - ed1).abs() <= 1e-8 * scale / h);
        prop_assert!((d2 - ed2).abs() <= 1e-7 * scale / (h * h));
    }

    #[test]
    fn extrapolation_identity_on_quintics(
        c in prop::collection::vec(-2.0..2.0_f64, 5),
        cells in 1usize..6,
        h in 0.005..0.1_f64,
    ) {
        // p(0) = 0
        let coeffs: Vec<f64> = std::iter::once(0.0).chain(c.iter().copied()).collect();
        let w = ExtrapolationWeights::new(cells, h);
        let xb = w.xbar;
        let q = [1.0, 2.0, 3.0].map(|j| poly(&coeffs, j * xb).0);
        let lhs = w.combine(q);
        let (_, d1, d2, d3) = poly(&coeffs, 0.0);
        let rhs = w.b[0] * xb * d1 + w.b[1] * xb * xb * d2 + w.b[2] * xb.powi(3) * d3;
        let scale = w.a.iter().zip(q).map(|(a, v)| (a * v).abs()).sum::<f64>().max(1e-300);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * scale, "lhs {} rhs {}", lhs, rhs);
    }

    #[test]
    fn cubic_resample_reproduces_cubics(
        c in prop::collection::vec(-2.0..2.0_f64, 4),
        shift in 0.0..0.9_f64,
    ) {
        let n = 21;
        let h = 0.1;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| poly(&c, x).0).collect();
        let slopes: Vec<f64> = xs.iter().map(|&x| poly(&c, x).1).collect();
        let mut out = vec![0.0; n];
        cubic_shift_resample(&vals, &slopes, h, shift, |_| f64::NAN, &mut out);
        for (i, &x) in xs.iter().enumerate() {
            if x + shift < (n - 1) as f64 * h {
                let e = poly(&c, x + shift).0;
                prop_assert!((out[i] - e).abs() <= 1e-10 * (1.0 + e.abs()), "node {} got {} want {}", i, out[i], e);
            }
        }
    }

    #[test]
    fn compact_operator_is_linear(
        a in prop::collection::vec(-5.0..5.0_f64, 29),
        b in prop::collection::vec(-5.0..5.0_f64, 29),
        la in -3.0..3.0_f64,
        lb in -3.0..3.0_f64,
        alpha in -2.0..2.0_f64,
    ) {
        let op = CompactOperator::new(30, 0.1).unwrap();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
        let da = op.second_derivative(&a, la, 0.0);
        let db = op.second_derivative(&b, lb, 0.0);
        let dc = op.second_derivative(&combo, alpha * la + lb, 0.0);
        let expect: Vec<f64> = da.iter().zip(&db).map(|(x, y)| alpha * x + y).collect();
        let diff: Vec<f64> = dc.iter().zip(&expect).map(|(x, y)| x - y).collect();
        prop_assert!(max_abs(&diff) <= 1e-9 * (1.0 + max_abs(&expect)));
    }
}
