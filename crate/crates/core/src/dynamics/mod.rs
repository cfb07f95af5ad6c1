//! Numerical experiments on the system: finite-time Lyapunov spectra,
//! bifurcation scans, comparison of the GA/LA/WA variants, detection of
//! numerically periodic oscillations and the closed-form periodic solution
//! of the linear test equation with lower terminal −∞.

mod bifurcation;
mod compare;
mod lyapunov;
mod periodic;

pub use bifurcation::{
    bifurcation_scan, local_maxima, BifurcationConfig, BifurcationDiagram, BifurcationSample,
    ScanParameter, StreamResult,
};
pub use compare::{
    cloud_distance, compare_variants, CompareConfig, DivergenceReport, VariantComparison,
    DEFAULT_CLOUD_CELL, DEFAULT_DIVERGENCE_THRESHOLD, DISTINCT_CLOUD_THRESHOLD,
};
pub use lyapunov::{
    benettin, lyapunov_spectrum, AffineSystem, BenettinResult, LyapunovConfig, LyapunovSpectrum,
    SprottTangent, TangentSystem,
};
pub use periodic::{
    asymptotic_period_estimate, asymptotic_period_estimate_with, periodic_coefficients,
    verify_ml_periodic, PeriodEstimate, PeriodicCoefficients, PeriodicTestProblem,
    DEFAULT_PERIOD_THRESHOLD, PERIODIC_SAMPLE_TIMES,
};

use crate::caputo_abm::AbmError;
use crate::sprott_pwc::SystemError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Integration(#[from] AbmError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("jacobian undefined at step {step}")]
    Jacobian { step: usize },
    #[error("degenerate tangent space at step {step}")]
    DegenerateTangent { step: usize },
}
