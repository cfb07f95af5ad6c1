//! Two-parameter Mittag-Leffler functions for scalar and square-matrix arguments.
//!
//! Both are evaluated from the defining power series
//!
//! ```text
//! E_{α,β}(Z) = Σ_{k≥0} Z^k / Γ(αk + β)
//! ```
//!
//! truncated once the terms have started to decrease and the current term is
//! below `SERIES_REL_TOL` times the running partial sum (max-norm for
//! matrices). Arguments whose norm (|z|, or the induced ∞-norm) exceeds [`ARGUMENT_BUDGET`] are
//! rejected: the alternating series loses digits to cancellation beyond that
//! point and no asymptotic expansion is provided.

use nalgebra::DMatrix;
use thiserror::Error;

/// Hard cap on the number of series terms.
pub const MAX_TERMS: usize = 500;

/// Relative stopping tolerance of the series.
pub const SERIES_REL_TOL: f64 = 1e-16;

/// Largest accepted argument norm. At |z| = 20 the largest series term
/// is about 4e7, so cancellation costs at most ~1e-8 absolute.
pub const ARGUMENT_BUDGET: f64 = 20.0;

/// Largest argument for which Γ is evaluated directly; beyond it the
/// logarithmic form is used.
const GAMMA_DIRECT_LIMIT: f64 = 170.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlError {
    #[error("invalid Mittag-Leffler order: alpha = {alpha}, beta = {beta}")]
    InvalidOrder { alpha: f64, beta: f64 },
    #[error("gamma function has a pole at {0}")]
    GammaPole(f64),
    #[error("argument norm {norm} exceeds the series budget {budget}")]
    ArgumentOutOfBudget { norm: f64, budget: f64 },
    #[error("matrix is not square or has non-finite entries")]
    InvalidMatrix,
    #[error("series did not converge after {terms} terms (partial sum norm {partial_sum_norm})")]
    NotConverged {
        partial_sum_norm: f64,
        terms: usize,
    },
}

/// The pair (α, β) of `E_{α,β}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOrder {
    alpha: f64,
    beta: f64,
}

impl MlOrder {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, MlError> {
        if !(alpha > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(MlError::InvalidOrder { alpha, beta });
        }
        Ok(Self { alpha, beta })
    }

    /// `E_α = E_{α,1}`.
    pub fn classical(alpha: f64) -> Result<Self, MlError> {
        Self::new(alpha, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `1 / Γ(αk + β)`, zero at the poles of Γ.
    fn reciprocal_gamma(&self, k: usize) -> f64 {
        let x = self.alpha * k as f64 + self.beta;
        if x <= 0.0 && x == x.floor() {
            return 0.0;
        }
        if x > GAMMA_DIRECT_LIMIT {
            return (-ln_gamma_positive(x)).exp();
        }
        1.0 / gamma_unchecked(x)
    }
}

/// Square real matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix(DMatrix<f64>);

impl SquareMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self, MlError> {
        if m.nrows() == 0 || m.nrows() != m.ncols() || m.iter().any(|v| !v.is_finite()) {
            return Err(MlError::InvalidMatrix);
        }
        Ok(Self(m))
    }

    /// Builds an `n × n` matrix from row-major entries.
    pub fn from_row_slice(n: usize, entries: &[f64]) -> Result<Self, MlError> {
        if n == 0 || entries.len() != n * n {
            return Err(MlError::InvalidMatrix);
        }
        Self::new(DMatrix::from_row_slice(n, n, entries))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn max_norm(&self) -> f64 {
        max_abs(&self.0)
    }

    /// Induced infinity norm (largest absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        self.0
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

// Lanczos approximation with g = 6.024680040776729583740234375 and a
// 13-term rational sum (the "lanczos13m53" set), relative error ~1e-15.
const LANCZOS_G: f64 = 6.024680040776729583740234375;
const LANCZOS_G_MINUS_HALF: f64 = 5.524680040776729583740234375;
const LANCZOS_NUM: [f64; 13] = [
    23531376880.410759688572007674451636754734846804940,
    42919803642.649098768957899047001988850926355848959,
    35711959237.355668049440185451547166705960488635843,
    17921034426.037209699919755754458931112671403265390,
    6039542586.3520280050642916443072979210699388420708,
    1439720407.3117216736632230727949123939715485786772,
    248874557.86205415651146038641322942321632125127801,
    31426415.585400194380614231628318205362874684987640,
    2876370.6289353724412254090516208496135991145378768,
    186056.26539522349504029498971604569928220784236328,
    8071.6720023658162106380029022722506138218516325024,
    210.82427775157934587250973392071336271166969580291,
    2.5066282746310002701649081771338373386264310793408,
];
const LANCZOS_DEN: [f64; 13] = [
    0.0, 39916800.0, 120543840.0, 150917976.0, 105258076.0, 45995730.0, 13339535.0, 2637558.0,
    357423.0, 32670.0, 1925.0, 66.0, 1.0,
];

fn lanczos_sum(x: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    if x < 5.0 {
        for i in (0..13).rev() {
            num = num * x + LANCZOS_NUM[i];
            den = den * x + LANCZOS_DEN[i];
        }
    } else {
        for i in 0..13 {
            num = num / x + LANCZOS_NUM[i];
            den = den / x + LANCZOS_DEN[i];
        }
    }
    num / den
}

/// sin(πx) with exact zeros at the integers.
fn sin_pi(x: f64) -> f64 {
    let y = x.abs() % 2.0;
    let n = (2.0 * y).round();
    let r = match n as i64 {
        0 => (std::f64::consts::PI * y).sin(),
        1 => (std::f64::consts::PI * (y - 0.5)).cos(),
        2 => (std::f64::consts::PI * (1.0 - y)).sin(),
        3 => -(std::f64::consts::PI * (y - 1.5)).cos(),
        _ => (std::f64::consts::PI * (y - 2.0)).sin(),
    };
    if x < 0.0 {
        -r
    } else {
        r
    }
}

/// Γ without the pole check; overflows to ±∞ past ~171.6.
fn gamma_unchecked(x: f64) -> f64 {
    if x > 0.0 && x == x.floor() && x <= 23.0 {
        let mut f = 1.0;
        for k in 2..(x as u32) {
            f *= k as f64;
        }
        return f;
    }
    let ax = x.abs();
    if ax < 1e-20 {
        return 1.0 / x;
    }
    if ax > 200.0 {
        return if x > 0.0 { f64::INFINITY } else { 0.0 };
    }
    let y = ax + LANCZOS_G_MINUS_HALF;
    let z = if ax > LANCZOS_G_MINUS_HALF {
        (y - ax) - LANCZOS_G_MINUS_HALF
    } else {
        (y - LANCZOS_G_MINUS_HALF) - ax
    };
    let z = z * LANCZOS_G / y;
    if x < 0.0 {
        let mut r = -std::f64::consts::PI / sin_pi(ax) / ax * y.exp() / lanczos_sum(ax);
        r -= z * r;
        if ax < 140.0 {
            r / y.powf(ax - 0.5)
        } else {
            let sq = y.powf(ax / 2.0 - 0.25);
            r / sq / sq
        }
    } else {
        let mut r = lanczos_sum(ax) / y.exp();
        r += z * r;
        if ax < 140.0 {
            r * y.powf(ax - 0.5)
        } else {
            let sq = y.powf(ax / 2.0 - 0.25);
            r * sq * sq
        }
    }
}

/// ln Γ(x) for x > 0.
fn ln_gamma_positive(x: f64) -> f64 {
    lanczos_sum(x).ln() - LANCZOS_G + (x - 0.5) * ((x + LANCZOS_G_MINUS_HALF).ln() - 1.0)
}

/// Γ(x). Fails at the poles 0, −1, −2, …; negative non-integers go through
/// the reflection formula.
pub fn gamma_fn(x: f64) -> Result<f64, MlError> {
    if x.is_nan() || (x <= 0.0 && x == x.floor()) {
        return Err(MlError::GammaPole(x));
    }
    Ok(gamma_unchecked(x))
}

/// Scalar `E_{α,β}(z)`.
pub fn ml_scalar(order: MlOrder, z: f64) -> Result<f64, MlError> {
    if !z.is_finite() || z.abs() > ARGUMENT_BUDGET {
        return Err(MlError::ArgumentOutOfBudget {
            norm: z.abs(),
            budget: ARGUMENT_BUDGET,
        });
    }
    let mut sum = 0.0;
    let mut power = 1.0;
    let mut prev_term = f64::INFINITY;
    for k in 0..MAX_TERMS {
        let term = power * order.reciprocal_gamma(k);
        sum += term;
        let mag = term.abs();
        if k > 0 && mag <= prev_term && (mag == 0.0 || mag < SERIES_REL_TOL * sum.abs()) {
            return Ok(sum);
        }
        prev_term = mag;
        power *= z;
    }
    Err(MlError::NotConverged {
        partial_sum_norm: sum.abs(),
        terms: MAX_TERMS,
    })
}

/// Matrix `E_{α,β}(scale · M)`.
pub fn ml_matrix(order: MlOrder, m: &SquareMatrix, scale: f64) -> Result<SquareMatrix, MlError> {
    let n = m.dim();
    let arg = SquareMatrix(m.as_matrix() * scale);
    let arg_norm = arg.inf_norm();
    let arg = arg.0;
    if !scale.is_finite() || arg_norm > ARGUMENT_BUDGET {
        return Err(MlError::ArgumentOutOfBudget {
            norm: arg_norm,
            budget: ARGUMENT_BUDGET,
        });
    }
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut prev_term = f64::INFINITY;
    for k in 0..MAX_TERMS {
        let term = &power * order.reciprocal_gamma(k);
        sum += &term;
        let mag = max_abs(&term);
        if k > 0 && mag <= prev_term && (mag == 0.0 || mag < SERIES_REL_TOL * max_abs(&sum)) {
            return Ok(SquareMatrix(sum));
        }
        prev_term = mag;
        power = &power * &arg;
    }
    Err(MlError::NotConverged {
        partial_sum_norm: max_abs(&sum),
        terms: MAX_TERMS,
    })
}
