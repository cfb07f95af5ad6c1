//! Simulation and analysis of a fractional-order piecewise-continuous
//! hyperchaotic system through continuous approximation of its switching
//! term.
//!
//! The crate is organized bottom-up:
//!
//! * [`mlfunc`]: Γ and the two-parameter Mittag-Leffler function.
//! * [`caputo_abm`]: fixed-step fractional Adams-Bashforth-Moulton integrator.
//! * [`regularize`]: sigmoid, local cubic and quadratic replacements of `sgn` and `|·|`.
//! * [`sprott_pwc`]: the 4D system, its variants, closed forms and switching times.
//! * [`dynamics`]: Lyapunov spectra, bifurcation scans, variant comparison, periodicity.
//! * [`cli`]: the `fracpwc` command-line front end.

pub mod caputo_abm;
pub mod cli;
pub mod dynamics;
pub mod mlfunc;
pub mod regularize;
pub mod sprott_pwc;
