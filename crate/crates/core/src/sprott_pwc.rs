//! The fractional-order piecewise-continuous 4D system
//!
//! ```text
//! D^q x1 = -x1 + x2
//! D^q x2 = -x3 sgn(x1) + x4
//! D^q x3 = |x1| - a
//! D^q x4 = -b x2
//! ```
//!
//! with its three right-hand-side variants, Jacobian, piecewise-affine form
//! `D^q x = M± x + m` on `Ω± = {±x1 > 0}`, closed-form Mittag-Leffler
//! solutions on each half-space and the switching-time computation.

use crate::caputo_abm::{abm_integrate, AbmError, FdeProblem, Trajectory};
use crate::mlfunc::{ml_matrix, MlError, MlOrder, SquareMatrix};
use crate::regularize::{AbsApprox, RegularizeError, SgnApprox};
use nalgebra::{DMatrix, Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type State = [f64; 4];

/// Initial condition used throughout the reproduction runs.
pub const DEFAULT_X0: State = [1.0, 2.0, 0.0, 0.1];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Regularize(#[from] RegularizeError),
    #[error(transparent)]
    MittagLeffler(#[from] MlError),
    #[error(transparent)]
    Integration(#[from] AbmError),
    #[error("initial state lies on the switching plane x1 = 0; use the sliding analysis instead")]
    OnDiscontinuity,
    #[error("switching horizon must be positive, got {0}")]
    InvalidHorizon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub a: f64,
    pub b: f64,
    pub q: f64,
}

impl SystemParams {
    pub fn new(a: f64, b: f64, q: f64) -> Result<Self, SystemError> {
        let p = Self { a, b, q };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(SystemError::InvalidParams(format!("a = {} must be positive", self.a)));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(SystemError::InvalidParams(format!("b = {} must be positive", self.b)));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(SystemError::InvalidParams(format!("q = {} outside (0, 1)", self.q)));
        }
        Ok(())
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.25,
            q: 0.98,
        }
    }
}

/// The right-hand side in force: the switching term `sgn(x1)` is taken
/// exactly (WA), through the sigmoid (GA) or through the local cubic (LA);
/// the modulus is exact unless a smooth run (Lyapunov) asks otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhsVariant {
    pub sgn: SgnApprox,
    pub abs: AbsApprox,
}

impl RhsVariant {
    pub fn wa() -> Self {
        Self {
            sgn: SgnApprox::Exact,
            abs: AbsApprox::Exact,
        }
    }

    pub fn ga(delta: f64) -> Result<Self, SystemError> {
        Ok(Self {
            sgn: SgnApprox::global(delta)?,
            abs: AbsApprox::Exact,
        })
    }

    pub fn la(epsilon: f64) -> Result<Self, SystemError> {
        Ok(Self {
            sgn: SgnApprox::local(epsilon)?,
            abs: AbsApprox::Exact,
        })
    }

    pub fn with_quadratic_abs(self, epsilon: f64) -> Result<Self, SystemError> {
        Ok(Self {
            abs: AbsApprox::quadratic(epsilon)?,
            ..self
        })
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        self.sgn.validate()?;
        self.abs.validate()?;
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self.sgn {
            SgnApprox::Exact => "WA",
            SgnApprox::Global { .. } => "GA",
            SgnApprox::Local { .. } => "LA",
        }
    }

    pub fn is_smooth(&self) -> bool {
        !matches!(self.sgn, SgnApprox::Exact) && !matches!(self.abs, AbsApprox::Exact)
    }
}

pub fn rhs(x: &State, p: &SystemParams, v: &RhsVariant) -> State {
    [
        -x[0] + x[1],
        -x[2] * v.sgn.eval(x[0]) + x[3],
        v.abs.eval(x[0]) - p.a,
        -p.b * x[1],
    ]
}

/// Slice form of [`rhs`] for the integrator.
pub fn rhs_into(x: &[f64], out: &mut [f64], p: &SystemParams, v: &RhsVariant) {
    out[0] = -x[0] + x[1];
    out[1] = -x[2] * v.sgn.eval(x[0]) + x[3];
    out[2] = v.abs.eval(x[0]) - p.a;
    out[3] = -p.b * x[1];
}

/// Jacobian of the right-hand side, row-major.
///
/// Fails only where an exact `sgn` or `|·|` is evaluated at its kink `x1 = 0`.
pub fn jacobian(x: &State, p: &SystemParams, v: &RhsVariant) -> Result<[[f64; 4]; 4], SystemError> {
    let ds = v.sgn.deriv(x[0])?;
    let da = v.abs.deriv(x[0])?;
    Ok([
        [-1.0, 1.0, 0.0, 0.0],
        [-x[2] * ds, 0.0, -v.sgn.eval(x[0]), 1.0],
        [da, 0.0, 0.0, 0.0],
        [0.0, -p.b, 0.0, 0.0],
    ])
}

/// Which open half-space `Ω± = {±x1 > 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn of(x1: f64) -> Option<Self> {
        if x1 > 0.0 {
            Some(Self::Plus)
        } else if x1 < 0.0 {
            Some(Self::Minus)
        } else {
            None
        }
    }

    fn sign(self) -> f64 {
        match self {
            Self::Plus => 1.0,
            Self::Minus => -1.0,
        }
    }
}

/// `D^q x = M± x + m` on `Ω±`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub m_plus: Matrix4<f64>,
    pub m_minus: Matrix4<f64>,
    pub m: Vector4<f64>,
    pub e1: Vector4<f64>,
    pub e3: Vector4<f64>,
}

impl AffinePiece {
    pub fn matrix(&self, side: Side) -> &Matrix4<f64> {
        match side {
            Side::Plus => &self.m_plus,
            Side::Minus => &self.m_minus,
        }
    }
}

fn piece_matrix(b: f64, s: f64) -> Matrix4<f64> {
    Matrix4::new(
        -1.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, -s, 1.0, //
        s, 0.0, 0.0, 0.0, //
        0.0, -b, 0.0, 0.0,
    )
}

pub fn affine_pieces(p: &SystemParams) -> AffinePiece {
    AffinePiece {
        m_plus: piece_matrix(p.b, 1.0),
        m_minus: piece_matrix(p.b, -1.0),
        m: Vector4::new(0.0, 0.0, -p.a, 0.0),
        e1: Vector4::new(1.0, 0.0, 0.0, 0.0),
        e3: Vector4::new(0.0, 0.0, 1.0, 0.0),
    }
}

fn to_square(m: &Matrix4<f64>) -> SquareMatrix {
    SquareMatrix::new(DMatrix::from_iterator(4, 4, m.iter().copied()))
        .expect("affine pieces are finite 4x4 matrices")
}

/// Closed-form solution inside one half-space,
/// `x(t) = E_q(t^q M±) x0 − a t^q E_{q,q+1}(t^q M±) e3`.
///
/// Valid only while the trajectory stays in the chosen half-space.
pub fn ml_solution(x0: &State, t: f64, side: Side, p: &SystemParams) -> Result<State, SystemError> {
    p.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(SystemError::InvalidHorizon(t));
    }
    let pieces = affine_pieces(p);
    let ml = MlSolver::new(&pieces, side, p)?;
    ml.eval(x0, t)
}

struct MlSolver {
    m: SquareMatrix,
    e_q: MlOrder,
    e_q1: MlOrder,
    q: f64,
    a: f64,
}

impl MlSolver {
    fn new(pieces: &AffinePiece, side: Side, p: &SystemParams) -> Result<Self, SystemError> {
        Ok(Self {
            m: to_square(pieces.matrix(side)),
            e_q: MlOrder::classical(p.q)?,
            e_q1: MlOrder::new(p.q, p.q + 1.0)?,
            q: p.q,
            a: p.a,
        })
    }

    fn eval(&self, x0: &State, t: f64) -> Result<State, SystemError> {
        if t == 0.0 {
            return Ok(*x0);
        }
        let tq = t.powf(self.q);
        let e1 = ml_matrix(self.e_q, &self.m, tq)?;
        let e2 = ml_matrix(self.e_q1, &self.m, tq)?;
        let mut out = [0.0; 4];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, xj) in x0.iter().enumerate() {
                acc += e1.get(i, j) * xj;
            }
            *o = acc - self.a * tq * e2.get(i, 2);
        }
        Ok(out)
    }

    /// First component of [`MlSolver::eval`].
    fn phi(&self, x0: &State, t: f64) -> Result<f64, SystemError> {
        Ok(self.eval(x0, t)?[0])
    }
}

/// Direction of a crossing of `x1 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    PlusToMinus,
    MinusToPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Switch {
    pub time: f64,
    pub direction: Crossing,
    /// Residual `φ±(t_s)` at the returned time.
    pub phi: f64,
}

/// Number of uniform scan intervals on `(0, t_max]`.
pub const SWITCH_SCAN_INTERVALS: usize = 10_000;
/// Bisection stops once the bracket is narrower than this.
pub const SWITCH_TIME_TOL: f64 = 1e-12;

/// Smallest zero of `φ±(t) = e1ᵀ x(t)` on `(0, t_max]` where `x(t)` is the
/// closed-form solution in the half-space containing `x0`.
///
/// Scans a uniform grid of `t_max / 1e4` and bisects the first sign change.
/// Returns `None` when the scan sees no sign change.
pub fn switching_time(x0: &State, p: &SystemParams, t_max: f64) -> Result<Option<Switch>, SystemError> {
    p.validate()?;
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(SystemError::InvalidHorizon(t_max));
    }
    let side = Side::of(x0[0]).ok_or(SystemError::OnDiscontinuity)?;
    let pieces = affine_pieces(p);
    let solver = MlSolver::new(&pieces, side, p)?;
    let s = side.sign();
    let direction = match side {
        Side::Plus => Crossing::PlusToMinus,
        Side::Minus => Crossing::MinusToPlus,
    };

    let dt = t_max / SWITCH_SCAN_INTERVALS as f64;
    let mut lo = 0.0;
    for k in 1..=SWITCH_SCAN_INTERVALS {
        let t = k as f64 * dt;
        let v = solver.phi(x0, t)?;
        if s * v <= 0.0 {
            if v == 0.0 {
                return Ok(Some(Switch {
                    time: t,
                    direction,
                    phi: 0.0,
                }));
            }
            let mut hi = t;
            while hi - lo > SWITCH_TIME_TOL {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if s * solver.phi(x0, mid)? > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let time = 0.5 * (lo + hi);
            return Ok(Some(Switch {
                time,
                direction,
                phi: solver.phi(x0, time)?,
            }));
        }
        lo = t;
    }
    Ok(None)
}

/// Where an equilibrium candidate was sought.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    OmegaPlus,
    OmegaMinus,
    SwitchingPlane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub region: Region,
    pub point: State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriaReport {
    pub params: SystemParams,
    pub equilibria: Vec<Equilibrium>,
    /// Human-readable derivation, one line per region checked.
    pub trace: Vec<String>,
}

/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-12;

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > RANK_TOL * max.max(1.0)).count()
}

/// Equilibria of the piecewise system.
///
/// In each open half-space solves `M± x = a e3` (rank test on the augmented
/// matrix when `M±` is singular, then membership of `x1` in the half-space).
/// On the plane `x1 = 0` the third component of every admissible selection
/// is `-a ≠ 0`.
pub fn equilibria(p: &SystemParams) -> Result<EquilibriaReport, SystemError> {
    p.validate()?;
    let pieces = affine_pieces(p);
    let mut trace = Vec::new();
    let mut found = Vec::new();
    let rhs_vec = -pieces.m;
    for (side, region, name) in [
        (Side::Plus, Region::OmegaPlus, "Ω+"),
        (Side::Minus, Region::OmegaMinus, "Ω-"),
    ] {
        let m = pieces.matrix(side);
        let md = DMatrix::from_iterator(4, 4, m.iter().copied());
        let rank = numerical_rank(&md);
        let mut aug = DMatrix::<f64>::zeros(4, 5);
        aug.view_mut((0, 0), (4, 4)).copy_from(&md);
        aug.view_mut((0, 4), (4, 1)).copy_from(&rhs_vec);
        let aug_rank = numerical_rank(&aug);
        if aug_rank > rank {
            trace.push(format!(
                "{name}: M x = a e3 is inconsistent (rank M = {rank}, rank [M | a e3] = {aug_rank}): \
                 row 4 forces x2 = 0, row 1 then x1 = 0, contradicting row 3 (±x1 = a = {})",
                p.a
            ));
            continue;
        }
        if rank < 4 {
            // Consistent but singular: a whole affine family; check whether it meets Ω±.
            let svd = md.clone().svd(true, true);
            let x = svd
                .solve(&rhs_vec, RANK_TOL)
                .map_err(|e| SystemError::InvalidParams(e.to_string()))?;
            trace.push(format!(
                "{name}: singular consistent system, particular solution x1 = {}",
                x[0]
            ));
            if side.sign() * x[0] > 0.0 {
                found.push(Equilibrium {
                    region,
                    point: [x[0], x[1], x[2], x[3]],
                });
            }
            continue;
        }
        let x = m
            .lu()
            .solve(&rhs_vec)
            .ok_or_else(|| SystemError::InvalidParams("LU solve failed".into()))?;
        if side.sign() * x[0] > 0.0 {
            trace.push(format!("{name}: unique solution with x1 = {} inside the half-space", x[0]));
            found.push(Equilibrium {
                region,
                point: [x[0], x[1], x[2], x[3]],
            });
        } else {
            trace.push(format!("{name}: unique solution with x1 = {} lies outside", x[0]));
        }
    }
    trace.push(format!(
        "x1 = 0: third component |x1| - a = -{} ≠ 0 for every selection of Sgn(0)",
        p.a
    ));
    Ok(EquilibriaReport {
        params: *p,
        equilibria: found,
        trace,
    })
}

/// Integrates the system with the ABM scheme.
pub fn simulate(
    p: &SystemParams,
    v: &RhsVariant,
    x0: &State,
    t_end: f64,
    h: f64,
    corrector_iters: usize,
) -> Result<Trajectory, SystemError> {
    p.validate()?;
    v.validate()?;
    let (p, v) = (*p, *v);
    let problem = FdeProblem::new(
        p.q,
        move |x: &[f64], out: &mut [f64]| rhs_into(x, out, &p, &v),
        x0.to_vec(),
        t_end,
        h,
    )?;
    Ok(abm_integrate(&problem, corrector_iters)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SystemParams {
        SystemParams::new(1.0, 1.25, 0.98).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let p = params();
        for v in [RhsVariant::wa(), RhsVariant::ga(0.1).unwrap(), RhsVariant::la(0.1).unwrap()] {
            assert_eq!(rhs(&[0.0; 4], &p, &v), [0.0, 0.0, -1.0, 0.0]);
        }
        let got = rhs(&[1.0, 2.0, 0.0, 0.1], &p, &RhsVariant::wa());
        assert_eq!(got, [1.0, 0.1, 0.0, -2.5]);
        let eps = 1e-3;
        let got = rhs(&[eps / 2.0, 0.0, 1.0, 0.0], &p, &RhsVariant::la(eps).unwrap());
        assert_eq!(got[1], -0.6875);
    }

    #[test]
    fn jacobian_far_from_switch_is_m_plus() {
        let p = params();
        let v = RhsVariant::la(1e-3).unwrap().with_quadratic_abs(1e-3).unwrap();
        let j = jacobian(&[2.0, 0.3, -0.7, 0.1], &p, &v).unwrap();
        let mp = affine_pieces(&p).m_plus;
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(j[r][c], mp[(r, c)]);
            }
        }
    }

    #[test]
    fn jacobian_at_origin_band() {
        let eps = 1e-2;
        let p = params();
        let v = RhsVariant::la(eps).unwrap().with_quadratic_abs(eps).unwrap();
        let x3 = 0.7;
        let j = jacobian(&[0.0, 0.1, x3, 0.2], &p, &v).unwrap();
        assert!((j[1][0] - (-x3 * 1.5 / eps)).abs() < 1e-12);
    }

    #[test]
    fn jacobian_fails_on_exact_kink() {
        let p = params();
        assert!(jacobian(&[0.0, 1.0, 1.0, 1.0], &p, &RhsVariant::wa()).is_err());
        assert!(jacobian(&[0.5, 1.0, 1.0, 1.0], &p, &RhsVariant::wa()).is_ok());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = params();
        let v = RhsVariant::la(1e-2).unwrap().with_quadratic_abs(1e-2).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        let j = jacobian(&x, &p, &v).unwrap();
        let hstep = 1e-7;
        for c in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += hstep;
            xm[c] -= hstep;
            let fp = rhs(&xp, &p, &v);
            let fm = rhs(&xm, &p, &v);
            for r in 0..4 {
                let fd = (fp[r] - fm[r]) / (2.0 * hstep);
                assert!((fd - j[r][c]).abs() <= 1e-6 * j[r][c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn affine_pieces_layout() {
        let pieces = affine_pieces(&params());
        assert_eq!(pieces.m_plus[(3, 1)], -1.25);
        assert_eq!(pieces.m_minus[(3, 1)], -1.25);
        assert_eq!(pieces.m_plus[(1, 2)], -1.0);
        assert_eq!(pieces.m_minus[(1, 2)], 1.0);
        assert_eq!(pieces.m, Vector4::new(0.0, 0.0, -1.0, 0.0));
    }

    #[test]
    fn affine_form_reproduces_rhs() {
        let p = params();
        let pieces = affine_pieces(&p);
        let x = [1.0, 2.0, 3.0, 4.0];
        let affine = pieces.m_plus * Vector4::from(x) + pieces.m;
        let direct = rhs(&x, &p, &RhsVariant::wa());
        for i in 0..4 {
            assert_eq!(affine[i], direct[i]);
        }
        let x = [-1.5, 2.0, -3.0, 0.5];
        let affine = pieces.m_minus * Vector4::from(x) + pieces.m;
        let direct = rhs(&x, &p, &RhsVariant::wa());
        for i in 0..4 {
            assert_eq!(affine[i], direct[i]);
        }
    }

    #[test]
    fn ml_solution_at_zero() {
        let x0 = [1.0, 2.0, 0.0, 0.1];
        assert_eq!(ml_solution(&x0, 0.0, Side::Plus, &params()).unwrap(), x0);
    }

    /// Classical RK4 on x' = M x + m, the q → 1 oracle.
    fn rk4_affine(m: &Matrix4<f64>, c: &Vector4<f64>, x0: &State, t: f64, steps: usize) -> State {
        let f = |x: &Vector4<f64>| m * x + c;
        let dt = t / steps as f64;
        let mut x = Vector4::from(*x0);
        for _ in 0..steps {
            let k1 = f(&x);
            let k2 = f(&(x + k1 * (dt / 2.0)));
            let k3 = f(&(x + k2 * (dt / 2.0)));
            let k4 = f(&(x + k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        [x[0], x[1], x[2], x[3]]
    }

    #[test]
    fn ml_solution_classical_limit() {
        let p = SystemParams::new(1.0, 1.25, 0.999999).unwrap();
        let pieces = affine_pieces(&p);
        let x0 = [1.0, 2.0, 0.0, 0.1];
        for i in 1..=10 {
            let t = 0.05 * i as f64;
            let got = ml_solution(&x0, t, Side::Plus, &p).unwrap();
            let want = rk4_affine(&pieces.m_plus, &pieces.m, &x0, t, 1000);
            for k in 0..4 {
                assert!((got[k] - want[k]).abs() < 1e-3, "t = {t}, component {k}");
            }
        }
    }

    #[test]
    fn switching_requires_off_plane_start() {
        assert_eq!(
            switching_time(&[0.0, 1.0, 0.0, 0.0], &params(), 1.0),
            Err(SystemError::OnDiscontinuity)
        );
    }

    #[test]
    fn no_switch_in_short_window() {
        let got = switching_time(&[1e3, 0.0, 0.0, 0.0], &params(), 1e-3).unwrap();
        assert!(got.is_none());
    }

    #[test]
    fn equilibria_absent() {
        for &b in &[1.25, 0.5, 2.2] {
            let report = equilibria(&SystemParams::new(1.0, b, 0.98).unwrap()).unwrap();
            assert!(report.equilibria.is_empty());
            assert_eq!(report.trace.len(), 3);
        }
    }

    #[test]
    fn variants_agree_far_from_switch() {
        let p = params();
        let (delta, eps) = (1e-3, 1e-3);
        let ga = RhsVariant::ga(delta).unwrap();
        let la = RhsVariant::la(eps).unwrap();
        let wa = RhsVariant::wa();
        for &x1 in &[0.06, -0.06, 0.5, -3.0, 12.0] {
            let x = [x1, 0.4, -1.3, 0.2];
            let fw = rhs(&x, &p, &wa);
            let fg = rhs(&x, &p, &ga);
            let fl = rhs(&x, &p, &la);
            let bound = 2.0 * (-x1.abs() / delta).exp() * 1.3;
            for i in 0..4 {
                assert_eq!(fw[i], fl[i]);
                assert!((fw[i] - fg[i]).abs() <= bound.max(1e-15));
                assert!((fw[i] - fg[i]).abs() <= 1e-9);
            }
        }
    }
}
