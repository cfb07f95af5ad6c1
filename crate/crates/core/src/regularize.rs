//! Continuous replacements for `sgn` and `|·|`.
//!
//! * [`SgnApprox::Global`]: the sigmoid `2/(1 + e^{-x/δ}) - 1` on the whole line.
//! * [`SgnApprox::Local`]: the cubic `-x³/(2ε³) + 3x/(2ε)` on `[-ε, ε]`, glued
//!   to `±1` with matching value and slope at `±ε`.
//! * [`AbsApprox::Quadratic`]: `x²/(2ε) + ε/2` on `[-ε, ε]`, `|x|` outside.
//!
//! The exact `sgn` takes the value 0 at 0, the midpoint of the set-valued
//! `Sgn(0) = [-1, 1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegularizeError {
    #[error("approximation parameter must be positive and finite, got {0}")]
    InvalidParameter(f64),
    #[error("the exact function has no derivative at its kink")]
    NotDifferentiable,
}

/// Which single-valued function stands in for `sgn`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SgnApprox {
    Exact,
    Global { delta: f64 },
    Local { epsilon: f64 },
}

/// Which function stands in for `|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AbsApprox {
    Exact,
    Quadratic { epsilon: f64 },
}

fn check_param(v: f64) -> Result<f64, RegularizeError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(RegularizeError::InvalidParameter(v))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl SgnApprox {
    pub fn global(delta: f64) -> Result<Self, RegularizeError> {
        Ok(Self::Global {
            delta: check_param(delta)?,
        })
    }

    pub fn local(epsilon: f64) -> Result<Self, RegularizeError> {
        Ok(Self::Local {
            epsilon: check_param(epsilon)?,
        })
    }

    pub fn validate(&self) -> Result<(), RegularizeError> {
        match *self {
            Self::Exact => Ok(()),
            Self::Global { delta } => check_param(delta).map(|_| ()),
            Self::Local { epsilon } => check_param(epsilon).map(|_| ()),
        }
    }

    /// Width of the region where the approximation departs from `sgn`
    /// (zero for the exact function).
    pub fn scale(&self) -> f64 {
        match *self {
            Self::Exact => 0.0,
            Self::Global { delta } => delta,
            Self::Local { epsilon } => epsilon,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Exact => sign(x),
            Self::Global { delta } => {
                // 2/(1+e^{-u}) - 1 = (1-e^{-u})/(1+e^{-u}), evaluated on |x| so the
                // result is exactly odd and saturates to ±1 without cancellation.
                let e = (-x.abs() / delta).exp();
                sign(x) * ((1.0 - e) / (1.0 + e))
            }
            Self::Local { epsilon } => {
                if x.abs() <= epsilon {
                    let r = x / epsilon;
                    0.5 * r * (3.0 - r * r)
                } else {
                    sign(x)
                }
            }
        }
    }

    pub fn deriv(&self, x: f64) -> Result<f64, RegularizeError> {
        match *self {
            Self::Exact => {
                if x == 0.0 {
                    Err(RegularizeError::NotDifferentiable)
                } else {
                    Ok(0.0)
                }
            }
            Self::Global { delta } => {
                let e = (-x.abs() / delta).exp();
                let d = 1.0 + e;
                Ok(2.0 * e / (delta * d * d))
            }
            Self::Local { epsilon } => {
                if x.abs() <= epsilon {
                    let r = x / epsilon;
                    Ok(1.5 * (1.0 - r * r) / epsilon)
                } else {
                    Ok(0.0)
                }
            }
        }
    }
}

impl AbsApprox {
    pub fn quadratic(epsilon: f64) -> Result<Self, RegularizeError> {
        Ok(Self::Quadratic {
            epsilon: check_param(epsilon)?,
        })
    }

    pub fn validate(&self) -> Result<(), RegularizeError> {
        match *self {
            Self::Exact => Ok(()),
            Self::Quadratic { epsilon } => check_param(epsilon).map(|_| ()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Exact => x.abs(),
            Self::Quadratic { epsilon } => {
                if x.abs() <= epsilon {
                    x * x / (2.0 * epsilon) + 0.5 * epsilon
                } else {
                    x.abs()
                }
            }
        }
    }

    pub fn deriv(&self, x: f64) -> Result<f64, RegularizeError> {
        match *self {
            Self::Exact => {
                if x == 0.0 {
                    Err(RegularizeError::NotDifferentiable)
                } else {
                    Ok(sign(x))
                }
            }
            Self::Quadratic { epsilon } => {
                if x.abs() <= epsilon {
                    Ok(x / epsilon)
                } else {
                    Ok(sign(x))
                }
            }
        }
    }
}

pub fn sgn_eval(approx: SgnApprox, x: f64) -> f64 {
    approx.eval(x)
}

pub fn sgn_deriv(approx: SgnApprox, x: f64) -> Result<f64, RegularizeError> {
    approx.deriv(x)
}

pub fn abs_eval(approx: AbsApprox, x: f64) -> f64 {
    approx.eval(x)
}

pub fn abs_deriv(approx: AbsApprox, x: f64) -> Result<f64, RegularizeError> {
    approx.deriv(x)
}

/// Number of uniform samples used by [`graph_containment_check`].
pub const CONTAINMENT_SAMPLES: usize = 100_000;

/// Euclidean distance from `(x, v)` to the closed graph of the set-valued
/// `Sgn`: the two half-lines `v = ±1` and the segment `{0} × [-1, 1]`.
pub fn distance_to_sgn_graph(x: f64, v: f64) -> f64 {
    let to_segment = if v.abs() <= 1.0 {
        x.abs()
    } else {
        x.hypot(v.abs() - 1.0)
    };
    let to_right = if x >= 0.0 {
        (v - 1.0).abs()
    } else {
        x.hypot(v - 1.0)
    };
    let to_left = if x <= 0.0 {
        (v + 1.0).abs()
    } else {
        x.hypot(v + 1.0)
    };
    to_segment.min(to_right).min(to_left)
}

/// Whether every sampled graph point `(x, sgn_eval(x))` lies within
/// `neighborhood` of the graph of `Sgn`.
///
/// Samples 1e5 uniform points over `[-L, L]` with `L = 10 max(ε or δ, 1)`,
/// plus `±ε`/`±δ` themselves.
pub fn graph_containment_check(approx: SgnApprox, neighborhood: f64) -> Result<bool, RegularizeError> {
    check_param(neighborhood)?;
    approx.validate()?;
    let scale = approx.scale();
    let half_width = 10.0 * scale.max(1.0);
    let step = 2.0 * half_width / (CONTAINMENT_SAMPLES - 1) as f64;
    let within = |x: f64| distance_to_sgn_graph(x, approx.eval(x)) <= neighborhood;
    let grid_ok = (0..CONTAINMENT_SAMPLES).all(|i| within(-half_width + i as f64 * step));
    Ok(grid_ok && within(scale) && within(-scale))
}
