//! CSV emission. Values are written at full round-trip precision unless a
//! digit count is given; undefined values become empty cells.

use std::fs::File;
use std::io;
use std::path::Path;

use regime_rkf::pricing::{ConvergenceRow, PriceSurface};
use regime_rkf::rkf::{Solution, StepRecord};

/// Shortest round-trip form, or fixed `digits` after the point.
pub fn number(x: f64, digits: Option<usize>) -> String {
    if x.is_nan() {
        return String::new();
    }
    match digits {
        Some(d) => format!("{:.*}", d, x),
        None => format!("{}", x),
    }
}

/// Spot column: always shows a decimal point.
pub fn spot(x: f64) -> String {
    format!("{:?}", x)
}

fn writer(path: &Path) -> io::Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(File::create(path)?))
}

fn finish(mut w: csv::Writer<File>) -> Result<(), csv::Error> {
    w.flush()?;
    Ok(())
}

/// `S, regime_1.., [delta_1.., gamma_1..]`.
pub fn write_prices(
    path: &Path,
    surface: &PriceSurface,
    spots: &[f64],
    greeks: bool,
    digits: Option<usize>,
) -> Result<(), csv::Error> {
    let n = surface.num_regimes();
    let mut w = writer(path)?;
    let mut header = vec!["S".to_string()];
    header.extend((1..=n).map(|m| format!("regime_{}", m)));
    if greeks {
        header.extend((1..=n).map(|m| format!("delta_{}", m)));
        header.extend((1..=n).map(|m| format!("gamma_{}", m)));
    }
    w.write_record(&header)?;
    for &s in spots {
        let mut row = vec![spot(s)];
        row.extend((0..n).map(|m| number(surface.price_at(m, s), digits)));
        if greeks {
            row.extend((0..n).map(|m| number(surface.delta_at(m, s), digits)));
            row.extend((0..n).map(|m| number(surface.gamma_at(m, s).unwrap_or(f64::NAN), digits)));
        }
        w.write_record(&row)?;
    }
    finish(w)
}

/// `tau, sf_1..` at the start and after every accepted step.
pub fn write_boundary(path: &Path, solution: &Solution) -> Result<(), csv::Error> {
    let n = solution.state.num_regimes();
    let mut w = writer(path)?;
    let mut header = vec!["tau".to_string()];
    header.extend((1..=n).map(|m| format!("sf_{}", m)));
    w.write_record(&header)?;
    for (tau, sf) in &solution.trajectory {
        let mut row = vec![number(*tau, None)];
        row.extend(sf.iter().map(|s| number(*s, None)));
        w.write_record(&row)?;
    }
    finish(w)
}

/// `t, k, e_u, accepted` for every attempted step.
pub fn write_steps(path: &Path, steps: &[StepRecord]) -> Result<(), csv::Error> {
    let mut w = writer(path)?;
    w.write_record(["t", "k", "e_u", "accepted"])?;
    for s in steps {
        w.write_record([
            number(s.t_start, None),
            number(s.k_used, None),
            number(s.e_u, None),
            s.accepted.to_string(),
        ])?;
    }
    finish(w)
}

/// Nodal profile in the front-fixed coordinate: `x`, then per regime the
/// spot `S = s_f e^x`, `U`, `W` and (when computed) `Y`.
pub fn write_profile(path: &Path, surface: &PriceSurface) -> Result<(), csv::Error> {
    let n = surface.num_regimes();
    let gamma = surface.y.is_some();
    let mut w = writer(path)?;
    let mut header = vec!["x".to_string()];
    for m in 1..=n {
        header.push(format!("S_{}", m));
        header.push(format!("U_{}", m));
        header.push(format!("W_{}", m));
        if gamma {
            header.push(format!("Y_{}", m));
        }
    }
    w.write_record(&header)?;
    for i in 0..=surface.grid.m {
        let x = surface.grid.node(i);
        let mut row = vec![number(x, None)];
        for m in 0..n {
            row.push(number(surface.sf[m] * x.exp(), None));
            row.push(number(surface.u[m][i], None));
            row.push(number(surface.w[m][i], None));
            if let Some(y) = &surface.y {
                row.push(number(y[m][i], None));
            }
        }
        w.write_record(&row)?;
    }
    finish(w)
}

/// `h, max_error_u, order_u, max_error_w, order_w`.
pub fn write_convergence(path: &Path, rows: &[ConvergenceRow]) -> Result<(), csv::Error> {
    let mut w = writer(path)?;
    w.write_record(["h", "max_error_u", "order_u", "max_error_w", "order_w"])?;
    for r in rows {
        w.write_record([
            number(r.h, None),
            number(r.max_error_u, None),
            number(r.order_u, None),
            number(r.max_error_w, None),
            number(r.order_w, None),
        ])?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formats() {
        assert_eq!(number(1.97204, Some(4)), "1.9720");
        assert_eq!(number(9.0, None), "9");
        assert_eq!(number(0.1, None), "0.1");
        assert_eq!(number(f64::NAN, Some(4)), "");
        assert_eq!(spot(9.0), "9.0");
        assert_eq!(spot(10.5), "10.5");
    }
}
