//! Fourth-order compact approximation of `f''` on the interior of a uniform grid.
//!
//! The scheme relates second-derivative values at neighbouring nodes,
//!
//! ```text
//!   f''(x_{i-1}) + 10 f''(x_i) + f''(x_{i+1}) = 12/h^2 (f_{i-1} - 2 f_i + f_{i+1})
//! ```
//!
//! and closes the first and last interior rows with the one-sided relation
//! `14 f''_1 - 5 f''_2 + 4 f''_3 - f''_4 = 12/h^2 (f_0 - 2 f_1 + f_2)`
//! (mirrored at the far end). In matrix form `B u'' = A u + f`, where `f`
//! carries the two Dirichlet values.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::SolverError;
use crate::model::MIN_NODES;

const KL: usize = 3;
const KU: usize = 3;
const WIDTH: usize = KL + KU + 1;

/// `A`/`B` pair of the compact scheme with a cached factorization of `B`.
#[derive(Debug, Clone)]
pub struct CompactOperator {
    dim: usize,
    h: f64,
    scale: f64,
    factor: Factorization,
}

#[derive(Debug, Clone)]
enum Factorization {
    /// Unit-lower `L` and upper `U` packed in band storage, no pivoting.
    Banded(Vec<[f64; WIDTH]>),
    /// Row-major dense LU with partial pivoting.
    Dense { lu: Vec<f64>, perm: Vec<usize> },
}

impl CompactOperator {
    /// Builds the operator for `m` cells of width `h` (`m - 1` unknowns).
    pub fn new(m: usize, h: f64) -> Result<Self, SolverError> {
        if m < MIN_NODES {
            return Err(SolverError::GridTooSmall { m, min: MIN_NODES });
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(SolverError::InvalidGrid { x_max: h * m as f64, m });
        }
        let dim = m - 1;
        let factor = match banded_lu(dim) {
            Some(band) => Factorization::Banded(band),
            None => dense_lu(dim),
        };
        Ok(Self {
            dim,
            h,
            scale: 12.0 / (h * h),
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Dense row `i` of `B`.
    pub fn b_row(&self, i: usize) -> Vec<f64> {
        (0..self.dim).map(|j| b_entry(self.dim, i, j)).collect()
    }

    /// Dense row `i` of `A`, including the `12/h^2` factor.
    pub fn a_row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.dim];
        row[i] = -2.0 * self.scale;
        if i > 0 {
            row[i - 1] = self.scale;
        }
        if i + 1 < self.dim {
            row[i + 1] = self.scale;
        }
        row
    }

    /// `A v + f` for Dirichlet values `left` and `right`.
    pub fn apply_a(&self, values: &[f64], left: f64, right: f64, out: &mut [f64]) {
        let n = self.dim;
        debug_assert_eq!(values.len(), n);
        debug_assert_eq!(out.len(), n);
        let c = self.scale;
        for i in 0..n {
            let lo = if i == 0 { left } else { values[i - 1] };
            let hi = if i + 1 == n { right } else { values[i + 1] };
            out[i] = c * (lo - 2.0 * values[i] + hi);
        }
    }

    /// Solves `B x = rhs` in place.
    pub fn solve_b(&self, rhs: &mut [f64]) {
        match &self.factor {
            Factorization::Banded(band) => banded_solve(band, rhs),
            Factorization::Dense { lu, perm } => dense_solve(lu, perm, self.dim, rhs),
        }
    }

    /// `B^{-1}(A v + f)` written into `out`.
    pub fn second_derivative_into(&self, values: &[f64], left: f64, right: f64, out: &mut [f64]) {
        self.apply_a(values, left, right, out);
        self.solve_b(out);
    }

    /// `B^{-1}(A v + f)`.
    pub fn second_derivative(&self, values: &[f64], left: f64, right: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.second_derivative_into(values, left, right, &mut out);
        out
    }

    pub fn uses_banded_factorization(&self) -> bool {
        matches!(self.factor, Factorization::Banded(_))
    }
}

fn b_entry(n: usize, i: usize, j: usize) -> f64 {
    const EDGE: [f64; 4] = [14.0, -5.0, 4.0, -1.0];
    if i == 0 {
        return if j < 4 { EDGE[j] } else { 0.0 };
    }
    if i == n - 1 {
        let d = n - 1 - j.min(n - 1);
        return if j < n && d < 4 { EDGE[d] } else { 0.0 };
    }
    if j == i {
        10.0
    } else if j + 1 == i || j == i + 1 {
        1.0
    } else {
        0.0
    }
}

// band[i][j + KL - i] holds entry (i, j)
fn banded_lu(n: usize) -> Option<Vec<[f64; WIDTH]>> {
    let mut band = vec![[0.0; WIDTH]; n];
    for (i, row) in band.iter_mut().enumerate() {
        let lo = i.saturating_sub(KL);
        let hi = (i + KU).min(n - 1);
        for j in lo..=hi {
            row[j + KL - i] = b_entry(n, i, j);
        }
    }
    for k in 0..n {
        let pivot = band[k][KL];
        if pivot.abs() < 1e-10 {
            return None;
        }
        let last = (k + KL).min(n - 1);
        for i in k + 1..=last {
            let lik = band[i][k + KL - i] / pivot;
            if lik == 0.0 {
                continue;
            }
            band[i][k + KL - i] = lik;
            let jmax = (k + KU).min(n - 1);
            for j in k + 1..=jmax {
                let ukj = band[k][j + KL - k];
                // |i - j| <= 3 here
                band[i][j + KL - i] -= lik * ukj;
            }
        }
    }
    Some(band)
}

fn banded_solve(band: &[[f64; WIDTH]], x: &mut [f64]) {
    let n = band.len();
    for i in 0..n {
        let lo = i.saturating_sub(KL);
        let mut s = x[i];
        for j in lo..i {
            s -= band[i][j + KL - i] * x[j];
        }
        x[i] = s;
    }
    for i in (0..n).rev() {
        let hi = (i + KU).min(n - 1);
        let mut s = x[i];
        for j in i + 1..=hi {
            s -= band[i][j + KL - i] * x[j];
        }
        x[i] = s / band[i][KL];
    }
}

fn dense_lu(n: usize) -> Factorization {
    let mut lu = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            lu[i * n + j] = b_entry(n, i, j);
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&a, &b| lu[a * n + k].abs().total_cmp(&lu[b * n + k].abs()))
            .unwrap_or(k);
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
        }
        let pivot = lu[k * n + k];
        for i in k + 1..n {
            let l = lu[i * n + k] / pivot;
            lu[i * n + k] = l;
            for j in k + 1..n {
                lu[i * n + j] -= l * lu[k * n + j];
            }
        }
    }
    Factorization::Dense { lu, perm }
}

fn dense_solve(lu: &[f64], perm: &[usize], n: usize, x: &mut [f64]) {
    let b: Vec<f64> = perm.iter().map(|&p| x[p]).collect();
    x.copy_from_slice(&b);
    for i in 0..n {
        let mut s = x[i];
        for j in 0..i {
            s -= lu[i * n + j] * x[j];
        }
        x[i] = s;
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in i + 1..n {
            s -= lu[i * n + j] * x[j];
        }
        x[i] = s / lu[i * n + i];
    }
}
