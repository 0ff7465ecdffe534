//! Slope of the optimal exercise boundary in each regime.
//!
//! With `Q = sqrt(U - K + e^x s_f)` the boundary `x = 0` is a simple zero of
//! `Q`, and the PDE pins `Q'(0)`, `Q''(0)` and `Q'''(0)` as functions of the
//! unknown slope through `xi = r - sigma^2/2 + s_f'/s_f`:
//!
//! ```text
//! Q'   = sqrt((r - q_mm) K + q_mm s_f - sum_l q_ml U_l) / sigma
//! Q''  = -2 xi Q' / (3 sigma^2) + P / (3 sigma^2 Q')
//! Q''' = 2 xi^2 Q' / (3 sigma^4) - xi P / (6 sigma^4 Q') - P^2 / (12 sigma^4 Q'^3)
//!        + (r - q_mm) Q' / (2 sigma^2) + R / (4 sigma^2 Q')
//! ```
//!
//! with `P = q_mm s_f - sum_l q_ml U_l'` and `R = q_mm s_f - sum_l q_ml U_l''`,
//! all foreign quantities taken at the point `x_l = ln(s_f(m)/s_f(l))`.
//! Matching these against grid values of `Q` through the three-point
//! extrapolation
//!
//! ```text
//! a1 Q(xb) + a2 Q(2 xb) + a3 Q(3 xb) = b1 xb Q' + b2 xb^2 Q'' + b3 xb^3 Q''' + O(xb^6)
//! ```
//!
//! gives a quadratic in `s_f'`, solved on the branch that makes the put
//! boundary fall as time to expiry grows.

use alloc::vec::Vec;

use crate::error::SolverError;
use crate::hermite::quintic_fit;
use crate::model::{GridSpec, MarketModel};

/// Relative floor on the `Q'(0)` radicand, in units of the strike.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

/// Foreign boundaries this close in log terms count as coincident.
pub const COINCIDENCE_TOL: f64 = 1e-10;

/// Weights of the one-sided extrapolation that eliminates the fourth and
/// fifth Taylor terms of `Q` at the boundary. The weight of `Q(0)` is
/// irrelevant since `Q(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtrapolationWeights {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub xbar: f64,
    pub cells: usize,
}

impl ExtrapolationWeights {
    pub const A: [f64; 3] = [81.0, -81.0 / 8.0, 1.0];
    pub const B: [f64; 3] = [255.0 / 4.0, 99.0 / 4.0, 9.0 / 2.0];

    pub fn new(cells: usize, h: f64) -> Self {
        Self {
            a: Self::A,
            b: Self::B,
            xbar: cells as f64 * h,
            cells,
        }
    }

    /// `sum_j a_j Q(j xbar)` for the three sampled values.
    pub fn combine(&self, q: [f64; 3]) -> f64 {
        self.a[0] * q[0] + self.a[1] * q[1] + self.a[2] * q[2]
    }
}

/// Where a foreign-regime sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    ExerciseRegion,
    /// Same boundary position: continuation-side limits at the boundary.
    Coincident,
    FarField,
    Quintic,
}

/// Value and first two derivatives of a foreign regime's option at `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForeignSample {
    pub x: f64,
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
    pub source: SampleSource,
}

/// Foreign-regime data seen from the boundary of regime `regime`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCoupling {
    pub regime: usize,
    /// Indexed by foreign regime; `None` at the own index.
    pub samples: Vec<Option<ForeignSample>>,
}

/// Generator-weighted sums over foreign samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CouplingSums {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

impl BoundaryCoupling {
    pub fn sums(&self, model: &MarketModel) -> CouplingSums {
        let mut s = CouplingSums::default();
        for (l, sample) in self.samples.iter().enumerate() {
            if let Some(x) = sample {
                let q = model.generator.get(self.regime, l);
                s.value += q * x.value;
                s.slope += q * x.slope;
                s.curvature += q * x.curvature;
            }
        }
        s
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

/// `sigma_l^2 Q_l'(0)^2` from the value-level coupling of regime `l`;
/// `U_l''(0+) = 2 Q_l'(0)^2 - s_f(l)`.
fn radicand(l: usize, sf: &[f64], u: &[Vec<f64>], w: &[Vec<f64>], model: &MarketModel, grid: &GridSpec) -> f64 {
    let k = model.strike;
    let qll = model.generator.get(l, l);
    let mut coupled = 0.0;
    for j in 0..sf.len() {
        if j == l {
            continue;
        }
        let x = libm::log(sf[l] / sf[j]);
        let value = if x <= COINCIDENCE_TOL {
            k - libm::exp(x) * sf[j]
        } else if x >= grid.x_max {
            0.0
        } else {
            quintic_sample(j, x, sf, u, w, model, grid).0
        };
        coupled += model.generator.get(l, j) * value;
    }
    (model.regimes[l].rate - qll) * k + qll * sf[l] - coupled
}

/// Quintic Hermite patch of regime `l` on the cell pair containing `x`.
fn quintic_sample(
    l: usize,
    x: f64,
    sf: &[f64],
    u: &[Vec<f64>],
    w: &[Vec<f64>],
    model: &MarketModel,
    grid: &GridSpec,
) -> (f64, f64, f64) {
    let k = model.strike;
    let nodal_u = |i: usize| {
        if i == 0 {
            k - sf[l]
        } else if i >= grid.m {
            0.0
        } else {
            u[l][i - 1]
        }
    };
    let nodal_w = |i: usize| {
        if i == 0 {
            -sf[l]
        } else if i >= grid.m {
            0.0
        } else {
            w[l][i - 1]
        }
    };
    let j = (libm::floor(x / grid.h) as usize).min(grid.m - 2);
    let patch = quintic_fit(
        grid.node(j),
        grid.h,
        [nodal_u(j), nodal_u(j + 1), nodal_u(j + 2)],
        [nodal_w(j), nodal_w(j + 1), nodal_w(j + 2)],
    );
    patch.eval012_unchecked(x)
}

/// Evaluates every foreign regime at `x_l = ln(s_f(m) / s_f(l))`.
///
/// `u` and `w` hold interior values; the node-0 values `K - s_f(l)` and
/// `-s_f(l)` and the zero far-field values are filled in here.
pub fn boundary_coupling(
    m: usize,
    sf: &[f64],
    u: &[Vec<f64>],
    w: &[Vec<f64>],
    model: &MarketModel,
    grid: &GridSpec,
) -> BoundaryCoupling {
    let n = sf.len();
    let k = model.strike;
    let mut samples = Vec::with_capacity(n);
    for l in 0..n {
        if l == m {
            samples.push(None);
            continue;
        }
        let x = libm::log(sf[m] / sf[l]);
        let sample = if libm::fabs(x) <= COINCIDENCE_TOL {
            let e = libm::exp(x) * sf[l];
            ForeignSample {
                x,
                value: k - e,
                slope: -e,
                curvature: 2.0 * radicand(l, sf, u, w, model, grid) / sq(model.regimes[l].sigma) - e,
                source: SampleSource::Coincident,
            }
        } else if x < 0.0 {
            let e = libm::exp(x) * sf[l];
            ForeignSample {
                x,
                value: k - e,
                slope: -e,
                curvature: -e,
                source: SampleSource::ExerciseRegion,
            }
        } else if x >= grid.x_max {
            ForeignSample {
                x,
                value: 0.0,
                slope: 0.0,
                curvature: 0.0,
                source: SampleSource::FarField,
            }
        } else {
            let (value, slope, curvature) = quintic_sample(l, x, sf, u, w, model, grid);
            ForeignSample {
                x,
                value,
                slope,
                curvature,
                source: SampleSource::Quintic,
            }
        };
        samples.push(Some(sample));
    }
    BoundaryCoupling { regime: m, samples }
}

/// Everything the boundary relations need about one regime at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryInputs {
    pub regime: usize,
    pub rate: f64,
    pub sigma: f64,
    pub q_diag: f64,
    pub strike: f64,
    pub sf: f64,
    pub sums: CouplingSums,
}

impl BoundaryInputs {
    pub fn new(m: usize, model: &MarketModel, sf: f64, sums: CouplingSums) -> Self {
        let p = model.regimes[m];
        Self {
            regime: m,
            rate: p.rate,
            sigma: p.sigma,
            q_diag: model.generator.get(m, m),
            strike: model.strike,
            sf,
            sums,
        }
    }

    fn log_drift(&self) -> f64 {
        self.rate - 0.5 * self.sigma * self.sigma
    }

    /// `q_mm s_f - sum q_ml U_l'`.
    fn p_term(&self) -> f64 {
        self.q_diag * self.sf - self.sums.slope
    }

    /// `q_mm s_f - sum q_ml U_l''`.
    fn r_term(&self) -> f64 {
        self.q_diag * self.sf - self.sums.curvature
    }

    /// `Q''(0)` for a given `xi`.
    pub fn q_second(&self, q1: f64, xi: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        -2.0 * xi * q1 / (3.0 * s2) + self.p_term() / (3.0 * s2 * q1)
    }

    /// `Q'''(0)` for a given `xi`.
    pub fn q_third(&self, q1: f64, xi: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let s4 = s2 * s2;
        let p = self.p_term();
        2.0 * xi * xi * q1 / (3.0 * s4) - xi * p / (6.0 * s4 * q1) - p * p / (12.0 * s4 * q1 * q1 * q1)
            + (self.rate - self.q_diag) * q1 / (2.0 * s2)
            + self.r_term() / (4.0 * s2 * q1)
    }

    /// Left minus right side of the extrapolation identity for slope `ds`.
    pub fn extrapolation_residual(&self, q1: f64, weights: &ExtrapolationWeights, data: f64, ds: f64) -> f64 {
        let xi = self.log_drift() + ds / self.sf;
        let xb = weights.xbar;
        let b = weights.b;
        b[0] * xb * q1 + b[1] * xb * xb * self.q_second(q1, xi) + b[2] * xb * xb * xb * self.q_third(q1, xi) - data
    }
}

/// `Q'(0)` from the boundary value of the PDE.
pub fn q_prime0(inputs: &BoundaryInputs) -> Result<f64, SolverError> {
    let arg = (inputs.rate - inputs.q_diag) * inputs.strike + inputs.q_diag * inputs.sf - inputs.sums.value;
    if arg.is_nan() || arg < DEGENERACY_FLOOR * inputs.strike {
        return Err(SolverError::DegenerateSqrtArgument {
            regime: inputs.regime,
            value: arg,
        });
    }
    Ok(libm::sqrt(arg) / inputs.sigma)
}

/// `Q(j xbar)` for `j = 1, 2, 3` from interior values of the own regime.
pub fn extrapolation_samples(
    regime: usize,
    u: &[f64],
    sf: f64,
    strike: f64,
    weights: &ExtrapolationWeights,
) -> Result<[f64; 3], SolverError> {
    let mut q = [0.0; 3];
    for (j, slot) in q.iter_mut().enumerate() {
        let node = (j + 1) * weights.cells;
        if node > u.len() {
            return Err(SolverError::StencilOutOfRange {
                needed: node,
                available: u.len(),
            });
        }
        let x = (j + 1) as f64 * weights.xbar;
        let radicand = u[node - 1] - strike + libm::exp(x) * sf;
        if radicand < 0.0 {
            return Err(SolverError::NegativeRadicand {
                regime,
                node,
                value: radicand,
            });
        }
        *slot = libm::sqrt(radicand);
    }
    Ok(q)
}

/// `qa s'^2 + qb s' + qc = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoeffs {
    pub qa: f64,
    pub qb: f64,
    pub qc: f64,
}

impl QuadraticCoeffs {
    pub fn eval(&self, z: f64) -> f64 {
        (self.qa * z + self.qb) * z + self.qc
    }
}

/// Collects the extrapolation identity into powers of the unknown slope.
///
/// `data` is `a1 Q(xb) + a2 Q(2 xb) + a3 Q(3 xb)`.
pub fn quadratic_coeffs(
    inputs: &BoundaryInputs,
    q1: f64,
    weights: &ExtrapolationWeights,
    data: f64,
) -> QuadraticCoeffs {
    let s = inputs.sf;
    let v = inputs.log_drift();
    let s2 = inputs.sigma * inputs.sigma;
    let s4 = s2 * s2;
    let p = inputs.p_term();
    let r = inputs.r_term();
    let xb = weights.xbar;
    let (xb2, xb3) = (xb * xb, xb * xb * xb);
    let [b1, b2, b3] = weights.b;

    let qa = b3 * xb3 * 2.0 * q1 / (3.0 * s4 * s * s);
    let qb =
        -b2 * xb2 * 2.0 * q1 / (3.0 * s2 * s) + b3 * xb3 * (4.0 * v * q1 / (3.0 * s4 * s) - p / (6.0 * s4 * q1 * s));
    let qc = b1 * xb * q1
        + b2 * xb2 * (-2.0 * v * q1 / (3.0 * s2) + p / (3.0 * s2 * q1))
        + b3 * xb3
            * (2.0 * v * v * q1 / (3.0 * s4) - v * p / (6.0 * s4 * q1) - p * p / (12.0 * s4 * q1 * q1 * q1)
                + (inputs.rate - inputs.q_diag) * q1 / (2.0 * s2)
                + r / (4.0 * s2 * q1))
        - data;
    QuadraticCoeffs { qa, qb, qc }
}

/// Root `(-qb - sqrt(qb^2 - 4 qa qc)) / (2 qa)`.
///
/// Evaluated in the cancellation-free form `2 qc / (-qb + sqrt(disc))` when
/// `qb < 0`.
pub fn boundary_slope(c: &QuadraticCoeffs) -> Result<f64, SolverError> {
    let disc = c.qb * c.qb - 4.0 * c.qa * c.qc;
    if disc < 0.0 {
        return Err(SolverError::ComplexRoot { discriminant: disc });
    }
    let sq = libm::sqrt(disc);
    let root = if c.qb < 0.0 {
        2.0 * c.qc / (-c.qb + sq)
    } else {
        (-c.qb - sq) / (2.0 * c.qa)
    };
    if root.is_finite() {
        Ok(root)
    } else {
        Err(SolverError::NonFiniteSlope)
    }
}

/// Intermediate results of one boundary-slope evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeEval {
    pub slope: f64,
    pub q_prime: f64,
    pub coeffs: QuadraticCoeffs,
}

/// Full pipeline for regime `m`: coupling, `Q'(0)`, extrapolation data,
/// quadratic and root. `u` and `w` are the interior fields of all regimes.
pub fn regime_slope(
    m: usize,
    sf: &[f64],
    u: &[Vec<f64>],
    w: &[Vec<f64>],
    model: &MarketModel,
    grid: &GridSpec,
    weights: &ExtrapolationWeights,
) -> Result<SlopeEval, SolverError> {
    let coupling = boundary_coupling(m, sf, u, w, model, grid);
    let inputs = BoundaryInputs::new(m, model, sf[m], coupling.sums(model));
    let q1 = q_prime0(&inputs)?;
    let q = extrapolation_samples(m, &u[m], sf[m], model.strike, weights)?;
    let coeffs = quadratic_coeffs(&inputs, q1, weights, weights.combine(q));
    let slope = boundary_slope(&coeffs)?;
    Ok(SlopeEval {
        slope,
        q_prime: q1,
        coeffs,
    })
}
