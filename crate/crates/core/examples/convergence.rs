use regime_rkf::model::{MarketModel, StepControlConfig};
use regime_rkf::pricing::convergence_study;

fn main() {
    let hs: Vec<f64> = std::env::args().skip(1).map(|s| s.parse().unwrap()).collect();
    let start = std::time::Instant::now();
    let rows = convergence_study(
        &MarketModel::two_regime_benchmark(),
        3.0,
        &hs,
        2.5e-6,
        0.2,
        Some(0),
        &StepControlConfig::default(),
    )
    .unwrap();
    eprintln!("elapsed {:?}", start.elapsed());
    println!("h, max_error_u, order_u, max_error_w, order_w");
    for r in rows {
        println!(
            "{}, {:.3e}, {:.3}, {:.3e}, {:.3}",
            r.h, r.max_error_u, r.order_u, r.max_error_w, r.order_w
        );
    }
}
