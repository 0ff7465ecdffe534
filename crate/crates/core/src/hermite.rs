//! Hermite interpolation in Newton form on uniform nodes.
//!
//! Cross-regime evaluations need a field of one regime at positions of
//! another regime's grid. The boundary pipeline uses a quintic through
//! three nodes (values and slopes); the semi-discrete right-hand side uses a
//! cubic on the bracketing cell.

use crate::error::SolverError;

/// Quintic Hermite interpolant through `(x0, x0 + h, x0 + 2h)` in the Newton
/// basis `1, t, t^2, t^2 (t-h), t^2 (t-h)^2, t^2 (t-h)^2 (t-2h)` with `t = x - x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuinticPatch {
    pub x0: f64,
    pub h: f64,
    pub alpha: [f64; 6],
}

/// Fits the quintic matching values `u` and slopes `w` at the three nodes.
///
/// Coefficients are the confluent divided differences on the doubled node
/// sequence `x0, x0, x1, x1, x2, x2`.
pub fn quintic_fit(x0: f64, h: f64, u: [f64; 3], w: [f64; 3]) -> QuinticPatch {
    let d01 = (u[1] - u[0]) / h;
    let d12 = (u[2] - u[1]) / h;
    // second-order differences f[x0,x0,x1], f[x0,x1,x1], f[x1,x1,x2], f[x1,x2,x2]
    let f001 = (d01 - w[0]) / h;
    let f011 = (w[1] - d01) / h;
    let f112 = (d12 - w[1]) / h;
    let f122 = (w[2] - d12) / h;
    let f0011 = (f011 - f001) / h;
    let f0112 = (f112 - f011) / (2.0 * h);
    let f1122 = (f122 - f112) / h;
    let f00112 = (f0112 - f0011) / (2.0 * h);
    let f01122 = (f1122 - f0112) / (2.0 * h);
    let f001122 = (f01122 - f00112) / (2.0 * h);
    QuinticPatch {
        x0,
        h,
        alpha: [u[0], w[0], f001, f0011, f00112, f001122],
    }
}

impl QuinticPatch {
    pub fn span(&self) -> (f64, f64) {
        (self.x0, self.x0 + 2.0 * self.h)
    }

    /// Value, first and second derivative at `x`.
    ///
    /// Evaluated by nested multiplication of the Newton form with
    /// simultaneous differentiation.
    pub fn eval012(&self, x: f64) -> Result<(f64, f64, f64), SolverError> {
        let (lo, hi) = self.span();
        let slack = 1e-12 * self.h;
        if !(x >= lo - slack && x <= hi + slack) {
            return Err(SolverError::OutOfSpan { x, lo, hi });
        }
        Ok(self.eval012_unchecked(x))
    }

    pub fn eval012_unchecked(&self, x: f64) -> (f64, f64, f64) {
        let t = x - self.x0;
        let h = self.h;
        // Newton nodes of the doubled sequence, relative to x0
        let nodes = [0.0, 0.0, h, h, 2.0 * h];
        let a = &self.alpha;
        let (mut p, mut dp, mut ddp) = (a[5], 0.0, 0.0);
        for k in (0..5).rev() {
            let z = t - nodes[k];
            ddp = ddp * z + 2.0 * dp;
            dp = dp * z + p;
            p = p * z + a[k];
        }
        (p, dp, ddp)
    }
}

/// Cubic Hermite on one cell `[0, h]` in Newton form, evaluated at offset `t`.
#[inline]
pub fn cubic_cell(u0: f64, w0: f64, u1: f64, w1: f64, h: f64, t: f64) -> f64 {
    let d = (u1 - u0) / h;
    let a2 = (d - w0) / h;
    let a3 = (w1 - 2.0 * d + w0) / (h * h);
    u0 + t * (w0 + t * (a2 + a3 * (t - h)))
}

/// Value and first derivative of [`cubic_cell`].
#[inline]
pub fn cubic_cell_d1(u0: f64, w0: f64, u1: f64, w1: f64, h: f64, t: f64) -> (f64, f64) {
    let d = (u1 - u0) / h;
    let a2 = (d - w0) / h;
    let a3 = (w1 - 2.0 * d + w0) / (h * h);
    let v = u0 + t * (w0 + t * (a2 + a3 * (t - h)));
    let dv = w0 + 2.0 * a2 * t + a3 * (3.0 * t * t - 2.0 * h * t);
    (v, dv)
}

/// Resamples a nodal field at `x_i + shift` for every node `x_i = i h`.
///
/// `values` and `slopes` cover all nodes `0..=M` (boundary nodes included),
/// `out` receives one value per node. Positions at or left of zero take
/// `left_closure(x)`, positions at or beyond `x_max = M h` are zero, and the
/// rest use the cubic Hermite of the bracketing cell. Since the shift is the
/// same for every node, the cell offset is computed once.
pub fn cubic_shift_resample(
    values: &[f64],
    slopes: &[f64],
    h: f64,
    shift: f64,
    left_closure: impl Fn(f64) -> f64,
    out: &mut [f64],
) {
    let n = values.len();
    debug_assert_eq!(slopes.len(), n);
    debug_assert_eq!(out.len(), n);
    if shift == 0.0 {
        out.copy_from_slice(values);
        return;
    }
    let cells = n - 1;
    let x_max = cells as f64 * h;
    let q = libm::floor(shift / h);
    let mut t = shift - q * h;
    let mut base = q as i64;
    // guard rounding that lands t on the far edge of a cell
    if t >= h {
        t -= h;
        base += 1;
    }
    if t < 0.0 {
        t += h;
        base -= 1;
    }
    for (i, o) in out.iter_mut().enumerate() {
        let j = i as i64 + base;
        let x = i as f64 * h + shift;
        *o = if x <= 0.0 || j < 0 {
            left_closure(x)
        } else if x >= x_max || j >= cells as i64 {
            0.0
        } else {
            let j = j as usize;
            cubic_cell(values[j], slopes[j], values[j + 1], slopes[j + 1], h, t)
        };
    }
}
