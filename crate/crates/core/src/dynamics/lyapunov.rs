//! Finite-time Lyapunov exponents by the Benettin/QR method.
//!
//! The state and the `n` tangent vectors are integrated together as one
//! `n + n²` dimensional Caputo system with the same ABM scheme as plain
//! trajectories. At every renormalization the tangent block `Φ` is factored
//! `Φ = QR` and the whole stored tangent history is right-multiplied by
//! `R⁻¹`, so the memory term keeps describing the continued, renormalized
//! tangent flow rather than being restarted.
//!
//! For `q = 1` there is no memory to keep, and carrying the history through
//! repeated `R⁻¹` factors would turn contracting directions into a
//! cancellation of exponentially large terms, so the integration is
//! restarted from `(x, Q)` instead.

use super::DynamicsError;
use crate::caputo_abm::{grid_steps, validate_grid, AbmStepper};
use crate::regularize::{AbsApprox, SgnApprox};
use crate::sprott_pwc::{jacobian, rhs_into, RhsVariant, State, SystemParams};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::cell::Cell;

/// A vector field with an analytic Jacobian.
pub trait TangentSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, x: &[f64], out: &mut [f64]);
    /// Writes the row-major Jacobian at `x`; `false` where it is undefined.
    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool;
}

/// The smoothed system, ready for tangent integration.
#[derive(Debug, Clone, Copy)]
pub struct SprottTangent {
    pub params: SystemParams,
    pub variant: RhsVariant,
}

impl TangentSystem for SprottTangent {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        rhs_into(x, out, &self.params, &self.variant);
    }

    fn jacobian(&self, x: &[f64], out: &mut [f64]) -> bool {
        let s: State = [x[0], x[1], x[2], x[3]];
        match jacobian(&s, &self.params, &self.variant) {
            Ok(j) => {
                for (r, row) in j.iter().enumerate() {
                    out[r * 4..r * 4 + 4].copy_from_slice(row);
                }
                true
            }
            Err(_) => false,
        }
    }
}

/// `x' = A x + c` with constant `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSystem {
    pub matrix: DMatrix<f64>,
    pub offset: Vec<f64>,
}

impl AffineSystem {
    pub fn new(matrix: DMatrix<f64>, offset: Vec<f64>) -> Result<Self, DynamicsError> {
        if !matrix.is_square() || matrix.nrows() != offset.len() || matrix.nrows() == 0 {
            return Err(DynamicsError::InvalidConfig("affine system shape mismatch".into()));
        }
        Ok(Self { matrix, offset })
    }
}

impl TangentSystem for AffineSystem {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn rhs(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for r in 0..n {
            out[r] = self.offset[r] + (0..n).map(|c| self.matrix[(r, c)] * x[c]).sum::<f64>();
        }
    }

    fn jacobian(&self, _x: &[f64], out: &mut [f64]) -> bool {
        let n = self.dim();
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = self.matrix[(r, c)];
            }
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovConfig {
    /// Horizon `T`.
    pub t_end: f64,
    pub h: f64,
    /// Steps between renormalizations.
    pub renorm_interval: usize,
    pub corrector_iters: usize,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            t_end: 300.0,
            h: 0.005,
            renorm_interval: 10,
            corrector_iters: 1,
        }
    }
}

impl LyapunovConfig {
    /// Checks the settings for order `q`; returns the number of steps.
    pub fn validate(&self, q: f64) -> Result<usize, DynamicsError> {
        validate_grid(q, self.t_end, self.h)?;
        if self.renorm_interval == 0 || self.corrector_iters == 0 {
            return Err(DynamicsError::InvalidConfig(
                "renorm_interval and corrector_iters must be positive".into(),
            ));
        }
        let steps = grid_steps(self.t_end, self.h);
        if steps < self.renorm_interval {
            return Err(DynamicsError::InvalidConfig(format!(
                "horizon covers {steps} steps, fewer than one renormalization interval"
            )));
        }
        Ok(steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenettinResult {
    /// Sorted descending.
    pub exponents: Vec<f64>,
    /// Time actually averaged over (last renormalization).
    pub horizon: f64,
    pub renormalizations: usize,
    /// Time average of `tr J` along the trajectory.
    pub mean_jacobian_trace: f64,
    /// Largest `max |QᵀQ - I|` seen right after a renormalization.
    pub max_orthonormality_error: f64,
    pub final_state: Vec<f64>,
}

/// Finite-time exponents of `sys` from `x0` with Caputo order `q ∈ (0, 1]`.
pub fn benettin<S: TangentSystem + ?Sized>(
    sys: &S,
    q: f64,
    x0: &[f64],
    cfg: &LyapunovConfig,
) -> Result<BenettinResult, DynamicsError> {
    let steps = cfg.validate(q)?;
    let n = sys.dim();
    if x0.len() != n {
        return Err(DynamicsError::InvalidConfig(format!(
            "initial state has {} components, system has {n}",
            x0.len()
        )));
    }
    let ext_dim = n + n * n;
    let mut y0 = vec![0.0; ext_dim];
    y0[..n].copy_from_slice(x0);
    for k in 0..n {
        y0[n + k * n + k] = 1.0;
    }

    let jac_failed = Cell::new(false);
    let jac = std::cell::RefCell::new(vec![0.0; n * n]);
    let field = |y: &[f64], out: &mut [f64]| {
        sys.rhs(&y[..n], &mut out[..n]);
        let mut j = jac.borrow_mut();
        if !sys.jacobian(&y[..n], &mut j) {
            jac_failed.set(true);
        }
        for k in 0..n {
            let col = &y[n + k * n..n + (k + 1) * n];
            for r in 0..n {
                out[n + k * n + r] = (0..n).map(|c| j[r * n + c] * col[c]).sum();
            }
        }
    };

    let mut stepper = AbmStepper::new(q, cfg.h, &y0, &field, steps)?;
    if jac_failed.get() {
        return Err(DynamicsError::Jacobian { step: 0 });
    }

    let mut log_sums = vec![0.0; n];
    let mut trace_sum = 0.0;
    let mut renorms = 0;
    let mut max_ortho: f64 = 0.0;
    let mut last_renorm_step = 0;
    let mut j = vec![0.0; n * n];
    for step in 1..=steps {
        stepper.step(&field, cfg.corrector_iters)?;
        if jac_failed.get() {
            return Err(DynamicsError::Jacobian { step });
        }
        let y = stepper.current();
        sys.jacobian(&y[..n], &mut j);
        trace_sum += (0..n).map(|i| j[i * n + i]).sum::<f64>();

        if step % cfg.renorm_interval == 0 {
            let phi = DMatrix::from_column_slice(n, n, &y[n..]);
            let (r, q_factor) = gram_schmidt(&phi).ok_or(DynamicsError::DegenerateTangent { step })?;
            for (i, s) in log_sums.iter_mut().enumerate() {
                *s += r[(i, i)].ln();
            }
            if q == 1.0 {
                // No memory: restart from (x, Q) so nothing is carried through R⁻¹.
                let mut y = stepper.current().to_vec();
                y[n..].copy_from_slice(q_factor.as_slice());
                stepper = AbmStepper::new(q, cfg.h, &y, &field, steps - step)?;
            } else {
                let r_inv = invert_upper(&r);
                let row_major: Vec<f64> = r_inv.transpose().iter().copied().collect();
                stepper.right_multiply_block(n, n, n, &row_major);
            }
            let q_now = DMatrix::from_column_slice(n, n, &stepper.current()[n..]);
            max_ortho = max_ortho.max(orthonormality_error(&q_now));
            renorms += 1;
            last_renorm_step = step;
        }
    }

    let horizon = last_renorm_step as f64 * cfg.h;
    let mut exponents: Vec<f64> = log_sums.iter().map(|s| s / horizon).collect();
    if exponents.iter().any(|e| !e.is_finite()) {
        return Err(DynamicsError::DegenerateTangent { step: steps });
    }
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(BenettinResult {
        exponents,
        horizon,
        renormalizations: renorms,
        mean_jacobian_trace: trace_sum / steps as f64,
        max_orthonormality_error: max_ortho,
        final_state: stepper.current()[..n].to_vec(),
    })
}

/// Modified Gram-Schmidt, `Φ = QR` with `R_ii > 0`.
fn gram_schmidt(phi: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let n = phi.ncols();
    let mut q = phi.clone();
    let mut r = DMatrix::zeros(n, n);
    for k in 0..n {
        for i in 0..k {
            let dot = q.column(i).dot(&q.column(k));
            r[(i, k)] = dot;
            let qi = q.column(i).clone_owned();
            q.column_mut(k).axpy(-dot, &qi, 1.0);
        }
        let norm = q.column(k).norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return None;
        }
        r[(k, k)] = norm;
        q.column_mut(k).scale_mut(1.0 / norm);
    }
    Some((r, q))
}

fn invert_upper(r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = r.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for c in 0..n {
        inv[(c, c)] = 1.0 / r[(c, c)];
        for i in (0..c).rev() {
            let s: f64 = (i + 1..=c).map(|k| r[(i, k)] * inv[(k, c)]).sum();
            inv[(i, c)] = -s / r[(i, i)];
        }
    }
    inv
}

fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
    let g = q.transpose() * q;
    let n = g.nrows();
    (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    /// Sorted descending.
    pub exponents: [f64; 4],
    pub horizon: f64,
    pub h: f64,
    pub renorm_interval: usize,
    pub variant: RhsVariant,
    pub x0: State,
    pub q: f64,
    pub b: f64,
    pub mean_jacobian_trace: f64,
    pub max_orthonormality_error: f64,
}

/// Spectrum of the fully smoothed system (`GA`/`LA` sign with quadratic modulus).
pub fn lyapunov_spectrum(
    p: &SystemParams,
    v: &RhsVariant,
    x0: &State,
    cfg: &LyapunovConfig,
) -> Result<LyapunovSpectrum, DynamicsError> {
    p.validate()?;
    v.validate()?;
    if matches!(v.sgn, SgnApprox::Exact) || !matches!(v.abs, AbsApprox::Quadratic { .. }) {
        return Err(DynamicsError::InvalidConfig(
            "Lyapunov exponents need a smoothed sign and a quadratic modulus".into(),
        ));
    }
    let sys = SprottTangent {
        params: *p,
        variant: *v,
    };
    let res = benettin(&sys, p.q, x0, cfg)?;
    Ok(LyapunovSpectrum {
        exponents: [res.exponents[0], res.exponents[1], res.exponents[2], res.exponents[3]],
        horizon: res.horizon,
        h: cfg.h,
        renorm_interval: cfg.renorm_interval,
        variant: *v,
        x0: *x0,
        q: p.q,
        b: p.b,
        mean_jacobian_trace: res.mean_jacobian_trace,
        max_orthonormality_error: res.max_orthonormality_error,
    })
}
