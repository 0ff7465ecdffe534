use regime_rkf::model::{FieldCoupling, GridSpec, MarketModel, StepControlConfig};
use regime_rkf::pricing::price_surface;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let h: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.0125);
    let frozen = args.iter().any(|a| a == "frozen");
    let four = args.iter().any(|a| a == "four");
    let model = if four {
        MarketModel::four_regime_benchmark()
    } else {
        MarketModel::two_regime_benchmark()
    };
    let spots: &[f64] = if four {
        &[7.5, 9.0, 10.5, 12.0]
    } else {
        &[3.5, 4.0, 4.5, 6.0, 7.5, 8.5, 9.0, 9.5, 10.5, 12.0]
    };
    let cfg = StepControlConfig {
        field_coupling: if frozen {
            FieldCoupling::Frozen
        } else {
            FieldCoupling::StageCoupled
        },
        ..Default::default()
    };
    let grid = GridSpec::with_spacing(3.0, h).unwrap();
    let start = std::time::Instant::now();
    let surface = price_surface(&model, &grid, &cfg, false).unwrap();
    eprintln!("elapsed {:?}, sf {:?}", start.elapsed(), surface.sf);
    for row in surface.table(spots) {
        let cols: Vec<String> = row.prices.iter().map(|p| format!("{:.6}", p)).collect();
        println!("{:>5} {}", row.spot, cols.join(" "));
    }
}
