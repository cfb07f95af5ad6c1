//! Periodicity: the shift-residual period estimate for trajectories and the
//! closed-form periodic solution of `D^q x + βx = γ cos(Ωt + α)` when the
//! Caputo derivative has lower terminal `−∞`.

use super::DynamicsError;
use crate::caputo_abm::Trajectory;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Largest relative shift residual accepted as numerically periodic.
pub const DEFAULT_PERIOD_THRESHOLD: f64 = 0.05;

/// Smallest candidate lag, in grid steps.
const MIN_LAG_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub period: f64,
    /// Mean of `‖x(t+T) − x(t)‖` over the post-transient window.
    pub residual: f64,
    /// `residual` divided by the mean distance of the window to its centroid.
    pub relative_residual: f64,
}

/// [`asymptotic_period_estimate_with`] at [`DEFAULT_PERIOD_THRESHOLD`].
pub fn asymptotic_period_estimate(traj: &Trajectory, transient_fraction: f64) -> Option<PeriodEstimate> {
    asymptotic_period_estimate_with(traj, transient_fraction, DEFAULT_PERIOD_THRESHOLD)
}

/// Scans lags `T ∈ [10h, W/4]` (`W` the post-transient window) and returns
/// the first local minimum of the relative shift residual that falls below
/// `threshold`. Multiples of a period score about as well as the period
/// itself, so the shortest acceptable lag wins.
pub fn asymptotic_period_estimate_with(
    traj: &Trajectory,
    transient_fraction: f64,
    threshold: f64,
) -> Option<PeriodEstimate> {
    if !(0.0..1.0).contains(&transient_fraction) || traj.is_empty() {
        return None;
    }
    let len = traj.len();
    let start = ((len as f64) * transient_fraction).floor() as usize;
    let window = len - start;
    let max_lag = window / 4;
    if max_lag < MIN_LAG_STEPS + 1 {
        return None;
    }
    let dim = traj.dim();
    let states: Vec<&[f64]> = (start..len).map(|k| traj.state(k)).collect();

    let mut centroid = vec![0.0; dim];
    for s in &states {
        for (c, v) in centroid.iter_mut().zip(s.iter()) {
            *c += v / window as f64;
        }
    }
    let scale = states.iter().map(|s| distance(s, &centroid)).sum::<f64>() / window as f64;
    if !(scale > 0.0) {
        return None;
    }

    let residual = |lag: usize| {
        let pairs = window - lag;
        (0..pairs).map(|i| distance(states[i + lag], states[i])).sum::<f64>() / pairs as f64
    };
    let mut prev = residual(MIN_LAG_STEPS);
    let mut cur = residual(MIN_LAG_STEPS + 1);
    for lag in MIN_LAG_STEPS + 1..max_lag {
        let next = residual(lag + 1);
        if cur <= prev && cur <= next && cur / scale <= threshold {
            return Some(PeriodEstimate {
                period: lag as f64 * traj.h(),
                residual: cur,
                relative_residual: cur / scale,
            });
        }
        prev = cur;
        cur = next;
    }
    None
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Number of times at which [`verify_ml_periodic`] checks the equation.
pub const PERIODIC_SAMPLE_TIMES: usize = 1000;

/// `D^q_{−∞} x + βx = γ cos(Ωt + α)` with its harmonic solution
/// `x(t) = A cos Ωt + B sin Ωt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTestProblem {
    pub q: f64,
    pub beta: f64,
    pub gamma: f64,
    pub omega: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCoefficients {
    pub a: f64,
    pub b: f64,
    /// Frequency and phase after folding `Ω < 0` onto `Ω > 0`.
    pub omega: f64,
    pub alpha: f64,
    pub denominator: f64,
}

impl PeriodicTestProblem {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let finite = [self.q, self.beta, self.gamma, self.omega, self.alpha]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.q > 0.0 && self.q < 1.0) || self.omega == 0.0 {
            return Err(DynamicsError::InvalidConfig(format!(
                "periodic test problem needs finite values, q in (0, 1) and nonzero frequency: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `A`, `B` from matching the `cos Ωt` and `sin Ωt` coefficients.
pub fn periodic_coefficients(prob: &PeriodicTestProblem) -> Result<PeriodicCoefficients, DynamicsError> {
    prob.validate()?;
    // cos(Ωt + α) = cos(|Ω|t − α) for Ω < 0.
    let (omega, alpha) = if prob.omega < 0.0 {
        (-prob.omega, -prob.alpha)
    } else {
        (prob.omega, prob.alpha)
    };
    let (q, beta, gamma) = (prob.q, prob.beta, prob.gamma);
    let wq = omega.powf(q);
    let half = FRAC_PI_2 * q;
    let denominator = beta * beta + 2.0 * beta * wq * half.cos() + wq * wq;
    if !(denominator.abs() > f64::EPSILON * (beta * beta + wq * wq)) {
        return Err(DynamicsError::InvalidConfig(format!(
            "vanishing denominator {denominator:e}"
        )));
    }
    Ok(PeriodicCoefficients {
        a: gamma * (beta * alpha.cos() + wq * (alpha - half).cos()) / denominator,
        b: -gamma * (beta * alpha.sin() + wq * (alpha - half).sin()) / denominator,
        omega,
        alpha,
        denominator,
    })
}

/// Largest `|D^q x + βx − γ cos(Ωt + α)|` over [`PERIODIC_SAMPLE_TIMES`]
/// points covering two periods, with `D^q` applied through the phase-shift
/// rule `D^q_{−∞} cos Ωt = Ω^q cos(Ωt + πq/2)`.
pub fn verify_ml_periodic(prob: &PeriodicTestProblem) -> Result<f64, DynamicsError> {
    let c = periodic_coefficients(prob)?;
    let wq = c.omega.powf(prob.q);
    let (s, co) = (FRAC_PI_2 * prob.q).sin_cos();
    let span = 4.0 * PI / c.omega;
    let mut worst: f64 = 0.0;
    for k in 0..PERIODIC_SAMPLE_TIMES {
        let t = span * k as f64 / (PERIODIC_SAMPLE_TIMES - 1) as f64;
        let (sin_t, cos_t) = (c.omega * t).sin_cos();
        let x = c.a * cos_t + c.b * sin_t;
        let dx = (c.a * wq * co + c.b * wq * s) * cos_t + (c.b * wq * co - c.a * wq * s) * sin_t;
        let forcing = prob.gamma * (c.omega * t + c.alpha).cos();
        worst = worst.max((dx + prob.beta * x - forcing).abs());
    }
    Ok(worst)
}
