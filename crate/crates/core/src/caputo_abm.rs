//! Fixed-step fractional Adams-Bashforth-Moulton predictor-corrector for
//! Caputo problems `D^q x = f(x)`, `x(0) = x0`, `0 < q ≤ 1`.
//!
//! With `n` the index of the last accepted point, one step computes
//!
//! ```text
//! x^P     = x0 + 1/Γ(q) Σ_{j=0..n} b_{j,n+1} f_j
//! x_{n+1} = x0 + 1/Γ(q) ( Σ_{j=0..n} a_{j,n+1} f_j + a_{n+1,n+1} f(x^P) )
//! ```
//!
//! with `b_{j,n+1} = h^q/q ((n+1-j)^q - (n-j)^q)` and the product-trapezoidal
//! weights `a` scaled by `h^q / (q(q+1))`. The corrector may be repeated
//! (P(EC)^m E). The full history is kept, so a run of `N` steps costs O(N²).

use crate::mlfunc::gamma_fn;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AbmError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
}

/// A Caputo initial value problem on a uniform grid.
#[derive(Clone)]
pub struct FdeProblem<F> {
    q: f64,
    rhs: F,
    x0: Vec<f64>,
    t_end: f64,
    h: f64,
}

impl<F> FdeProblem<F>
where
    F: Fn(&[f64], &mut [f64]),
{
    pub fn new(q: f64, rhs: F, x0: Vec<f64>, t_end: f64, h: f64) -> Result<Self, AbmError> {
        validate_grid(q, t_end, h)?;
        if x0.is_empty() || x0.iter().any(|v| !v.is_finite()) {
            return Err(AbmError::InvalidProblem(
                "initial state must be non-empty and finite".into(),
            ));
        }
        Ok(Self {
            q,
            rhs,
            x0,
            t_end,
            h,
        })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn rhs(&self) -> &F {
        &self.rhs
    }

    /// Number of steps on the grid, `floor(t_end / h)`.
    pub fn steps(&self) -> usize {
        grid_steps(self.t_end, self.h)
    }
}

pub(crate) fn validate_grid(q: f64, t_end: f64, h: f64) -> Result<(), AbmError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(AbmError::InvalidProblem(format!("order q = {q} outside (0, 1]")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(AbmError::InvalidProblem(format!("step h = {h} must be positive")));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(AbmError::InvalidProblem(format!("horizon t_end = {t_end} must be positive")));
    }
    if h > t_end {
        return Err(AbmError::InvalidProblem(format!("step h = {h} exceeds horizon {t_end}")));
    }
    Ok(())
}

/// `floor(t_end / h)`, tolerant of the representation error in the quotient
/// (so that `5.0 / 1e-3` counts 5000 steps).
pub fn grid_steps(t_end: f64, h: f64) -> usize {
    let ratio = t_end / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        ratio.floor() as usize
    }
}

/// States on the uniform grid `t_k = k h`, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    h: f64,
    dim: usize,
    times: Vec<f64>,
    data: Vec<f64>,
}

impl Trajectory {
    pub fn new(h: f64, dim: usize) -> Self {
        Self {
            h,
            dim,
            times: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn with_capacity(h: f64, dim: usize, points: usize) -> Self {
        Self {
            h,
            dim,
            times: Vec::with_capacity(points),
            data: Vec::with_capacity(points * dim),
        }
    }

    pub fn push(&mut self, state: &[f64]) {
        debug_assert_eq!(state.len(), self.dim);
        self.times.push(self.times.len() as f64 * self.h);
        self.data.extend_from_slice(state);
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.data.chunks_exact(self.dim).last()
    }

    /// Values of one component along the grid.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states().map(|s| s[i]).collect()
    }
}

/// Quadrature weights of one ABM step.
#[derive(Debug, Clone, PartialEq)]
pub struct AbmWeights {
    /// `b_{j,n+1}` for `j = 0..=n`.
    pub predictor: Vec<f64>,
    /// `a_{j,n+1}` for `j = 0..=n+1`; the last entry multiplies `f(x^P)`.
    pub corrector: Vec<f64>,
}

/// Weights used to advance from grid point `step_index = n` to `n + 1`.
/// Both arrays still need the common factor `1/Γ(q)`.
pub fn abm_weights(step_index: usize, q: f64, h: f64) -> AbmWeights {
    let n = step_index;
    let hq = h.powf(q);
    let pred_scale = hq / q;
    let corr_scale = hq / (q * (q + 1.0));
    let predictor = (0..=n)
        .map(|j| {
            let k = (n - j) as f64;
            pred_scale * ((k + 1.0).powf(q) - k.powf(q))
        })
        .collect();
    let q1 = q + 1.0;
    let mut corrector = Vec::with_capacity(n + 2);
    let nf = n as f64;
    corrector.push(corr_scale * (nf.powf(q1) - (nf - q) * (nf + 1.0).powf(q)));
    for j in 1..=n {
        let k = (n - j) as f64;
        corrector.push(corr_scale * ((k + 2.0).powf(q1) + k.powf(q1) - 2.0 * (k + 1.0).powf(q1)));
    }
    corrector.push(corr_scale);
    AbmWeights {
        predictor,
        corrector,
    }
}

/// Incremental ABM integrator holding the full derivative history.
///
/// The history is laid out per component and the lag-indexed weights are
/// stored back to front, so both convolution sums of a step stream through
/// contiguous memory in the same direction. Callers that exploit linearity
/// (tangent dynamics) may rewrite the stored history through
/// [`AbmStepper::right_multiply_block`].
pub struct AbmStepper {
    q: f64,
    h: f64,
    dim: usize,
    inv_gamma_q: f64,
    x0: Vec<f64>,
    current: Vec<f64>,
    n: usize,
    /// `f_j` per component: `history[d][j]`.
    history: Vec<Vec<f64>>,
    /// Largest lag covered by the weight tables.
    capacity: usize,
    /// `pred_rev[capacity - k]` is the predictor weight at lag `k = n - j`.
    pred_rev: Vec<f64>,
    /// `corr_rev[capacity - k]` is the interior corrector weight at lag `k = n - j`.
    corr_rev: Vec<f64>,
    corr_scale: f64,
    /// For q = 1 the weights are constant and the sums are kept running:
    /// `running[d] = Σ_j f_j[d]`; only `f_0` is stored in `history`.
    classical: bool,
    running: Vec<f64>,
    scratch_x: Vec<f64>,
    scratch_f: Vec<f64>,
    pred_sum: Vec<f64>,
    corr_sum: Vec<f64>,
}

impl AbmStepper {
    /// Starts at `x0`, evaluating `f(x0)` once.
    pub fn new<F>(q: f64, h: f64, x0: &[f64], rhs: &F, expected_steps: usize) -> Result<Self, AbmError>
    where
        F: Fn(&[f64], &mut [f64]) + ?Sized,
    {
        if !(q > 0.0 && q <= 1.0) || !(h > 0.0) {
            return Err(AbmError::InvalidProblem(format!("bad order {q} or step {h}")));
        }
        let dim = x0.len();
        let gamma_q = gamma_fn(q).map_err(|e| AbmError::InvalidProblem(e.to_string()))?;
        let corr_scale = h.powf(q) / (q * (q + 1.0));
        let mut f0 = vec![0.0; dim];
        rhs(x0, &mut f0);
        if f0.iter().any(|v| !v.is_finite()) {
            return Err(AbmError::NonFinite { step: 0 });
        }
        let history_len = if q == 1.0 { 1 } else { expected_steps + 1 };
        let history = f0
            .iter()
            .map(|&v| {
                let mut col = Vec::with_capacity(history_len);
                col.push(v);
                col
            })
            .collect();
        let mut stepper = Self {
            q,
            h,
            dim,
            inv_gamma_q: 1.0 / gamma_q,
            x0: x0.to_vec(),
            current: x0.to_vec(),
            n: 0,
            history,
            capacity: 0,
            pred_rev: Vec::new(),
            corr_rev: Vec::new(),
            corr_scale,
            classical: q == 1.0,
            running: f0.clone(),
            scratch_x: vec![0.0; dim],
            scratch_f: vec![0.0; dim],
            pred_sum: vec![0.0; dim],
            corr_sum: vec![0.0; dim],
        };
        if !stepper.classical {
            stepper.rebuild_weights(expected_steps.max(1));
        }
        Ok(stepper)
    }

    fn rebuild_weights(&mut self, capacity: usize) {
        let q = self.q;
        let q1 = q + 1.0;
        let pred_scale = self.h.powf(q) / q;
        self.capacity = capacity;
        self.pred_rev = vec![0.0; capacity + 1];
        self.corr_rev = vec![0.0; capacity + 1];
        for k in 0..=capacity {
            let kf = k as f64;
            self.pred_rev[capacity - k] = pred_scale * ((kf + 1.0).powf(q) - kf.powf(q));
            self.corr_rev[capacity - k] =
                self.corr_scale * ((kf + 2.0).powf(q1) + kf.powf(q1) - 2.0 * (kf + 1.0).powf(q1));
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of the current grid point.
    pub fn step_index(&self) -> usize {
        self.n
    }

    pub fn time(&self) -> f64 {
        self.n as f64 * self.h
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    /// Advances one step with `corrector_iters ≥ 1` corrector passes.
    pub fn step<F>(&mut self, rhs: &F, corrector_iters: usize) -> Result<&[f64], AbmError>
    where
        F: Fn(&[f64], &mut [f64]) + ?Sized,
    {
        let n = self.n;
        if self.classical {
            // Rectangle predictor and trapezoidal corrector over the running sum.
            for d in 0..self.dim {
                self.pred_sum[d] = self.h * self.running[d];
                self.corr_sum[d] = self.h * (self.running[d] - 0.5 * self.history[d][0]);
            }
        } else {
            self.convolve(n);
        }

        for d in 0..self.dim {
            self.scratch_x[d] = self.x0[d] + self.inv_gamma_q * self.pred_sum[d];
        }
        for _ in 0..corrector_iters.max(1) {
            rhs(&self.scratch_x, &mut self.scratch_f);
            for d in 0..self.dim {
                self.scratch_x[d] = self.x0[d]
                    + self.inv_gamma_q * (self.corr_sum[d] + self.corr_scale * self.scratch_f[d]);
            }
        }
        if self.scratch_x.iter().any(|v| !v.is_finite()) {
            return Err(AbmError::NonFinite { step: n + 1 });
        }
        rhs(&self.scratch_x, &mut self.scratch_f);
        if self.scratch_f.iter().any(|v| !v.is_finite()) {
            return Err(AbmError::NonFinite { step: n + 1 });
        }
        for d in 0..self.dim {
            if self.classical {
                self.running[d] += self.scratch_f[d];
            } else {
                self.history[d].push(self.scratch_f[d]);
            }
        }
        self.current.copy_from_slice(&self.scratch_x);
        self.n = n + 1;
        Ok(&self.current)
    }

    /// History sums of the general-order scheme for the step `n → n + 1`.
    fn convolve(&mut self, n: usize) {
        if n > self.capacity {
            self.rebuild_weights(2 * n);
        }
        let nf = n as f64;
        let a0 = self.corr_scale * (nf.powf(self.q + 1.0) - (nf - self.q) * (nf + 1.0).powf(self.q));

        // Entry j of the history pairs with table index capacity - n + j.
        let base = self.capacity - n;
        let pred_w = &self.pred_rev[base + 1..=self.capacity];
        let corr_w = &self.corr_rev[base + 1..=self.capacity];
        let b0 = self.pred_rev[base];
        for d in 0..self.dim {
            let f = &self.history[d];
            let (p, c) = fused_dot(pred_w, corr_w, &f[1..=n]);
            self.pred_sum[d] = p + b0 * f[0];
            self.corr_sum[d] = c + a0 * f[0];
        }
    }

    /// Right-multiplies a matrix block of every stored vector (initial
    /// state, current state and the derivative history) by `m`.
    ///
    /// The block is the `rows × cols` matrix stored column-major starting at
    /// component `offset`; `m` is `cols × cols`, row-major. This is exact for
    /// the tangent block `Φ` of a variational system `D^q Φ = J(x) Φ`, whose
    /// numerical solution is linear in `Φ(0)`.
    pub fn right_multiply_block(&mut self, offset: usize, rows: usize, cols: usize, m: &[f64]) {
        assert!(offset + rows * cols <= self.dim && m.len() == cols * cols);
        let apply = |v: &mut [f64]| {
            let mut out = vec![0.0; rows * cols];
            for k in 0..cols {
                for i in 0..cols {
                    let w = m[i * cols + k];
                    if w == 0.0 {
                        continue;
                    }
                    for r in 0..rows {
                        out[k * rows + r] += w * v[offset + i * rows + r];
                    }
                }
            }
            v[offset..offset + rows * cols].copy_from_slice(&out);
        };
        apply(&mut self.x0);
        apply(&mut self.current);
        if self.classical {
            apply(&mut self.running);
        }
        let len = self.history[0].len();
        let mut fresh = vec![vec![0.0; len]; cols];
        for r in 0..rows {
            for (k, dst) in fresh.iter_mut().enumerate() {
                dst.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..cols {
                    let w = m[i * cols + k];
                    if w == 0.0 {
                        continue;
                    }
                    let src = &self.history[offset + i * rows + r];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
            for (k, src) in fresh.iter().enumerate() {
                self.history[offset + k * rows + r].copy_from_slice(src);
            }
        }
    }
}

/// `(Σ p_i f_i, Σ c_i f_i)` with independent partial sums so the loop vectorizes.
#[inline]
fn fused_dot(p: &[f64], c: &[f64], f: &[f64]) -> (f64, f64) {
    const LANES: usize = 8;
    let mut sp = [0.0; LANES];
    let mut sc = [0.0; LANES];
    let chunks = f.len() / LANES;
    let (fh, ft) = f.split_at(chunks * LANES);
    let (ph, pt) = p.split_at(chunks * LANES);
    let (ch, ct) = c.split_at(chunks * LANES);
    for ((fc, pc), cc) in fh
        .chunks_exact(LANES)
        .zip(ph.chunks_exact(LANES))
        .zip(ch.chunks_exact(LANES))
    {
        for i in 0..LANES {
            sp[i] += pc[i] * fc[i];
            sc[i] += cc[i] * fc[i];
        }
    }
    let mut tp: f64 = sp.iter().sum();
    let mut tc: f64 = sc.iter().sum();
    for ((fv, pv), cv) in ft.iter().zip(pt).zip(ct) {
        tp += pv * fv;
        tc += cv * fv;
    }
    (tp, tc)
}

/// Integrates `problem` over its whole grid.
pub fn abm_integrate<F>(problem: &FdeProblem<F>, corrector_iters: usize) -> Result<Trajectory, AbmError>
where
    F: Fn(&[f64], &mut [f64]),
{
    if corrector_iters == 0 {
        return Err(AbmError::InvalidProblem("at least one corrector pass is required".into()));
    }
    let steps = problem.steps();
    let dim = problem.x0.len();
    let mut stepper = AbmStepper::new(problem.q, problem.h, &problem.x0, &problem.rhs, steps)?;
    let mut traj = Trajectory::with_capacity(problem.h, dim, steps + 1);
    traj.push(&problem.x0);
    for _ in 0..steps {
        let x = stepper.step(&problem.rhs, corrector_iters)?;
        traj.push(x);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlfunc::{ml_scalar, MlOrder};

    fn decay(x: &[f64], out: &mut [f64]) {
        out[0] = -x[0];
    }

    #[test]
    fn constant_solution_for_zero_field() {
        let p = FdeProblem::new(0.7, |_: &[f64], out: &mut [f64]| out.fill(0.0), vec![3.0, -1.5], 1.0, 0.01)
            .unwrap();
        let traj = abm_integrate(&p, 1).unwrap();
        assert_eq!(traj.len(), 101);
        for s in traj.states() {
            assert_eq!(s, &[3.0, -1.5]);
        }
    }

    #[test]
    fn euler_weight_for_first_step() {
        let w = abm_weights(0, 1.0, 0.25);
        assert_eq!(w.predictor, vec![0.25]);
        assert_eq!(w.corrector, vec![0.125, 0.125]);
    }

    #[test]
    fn predictor_weights_telescope() {
        for &(n, q, h) in &[(0, 0.5, 0.1), (7, 0.98, 0.002), (100, 0.3, 0.01), (1000, 0.936, 0.005)] {
            let w = abm_weights(n, q, h);
            let sum: f64 = w.predictor.iter().sum();
            let expected = h.powf(q) / q * ((n + 1) as f64).powf(q);
            assert!(((sum - expected) / expected).abs() < 1e-12);
            assert!(w.predictor.iter().all(|&v| v > 0.0 && v.is_finite()));
            assert_eq!(w.predictor.len(), n + 1);
            assert_eq!(w.corrector.len(), n + 2);
        }
    }

    #[test]
    fn corrector_weights_integrate_constants_exactly() {
        // Product trapezoid on [0, t_{n+1}] reproduces ∫ (t-s)^{q-1} ds = t^q / q.
        for &(n, q, h) in &[(0, 0.5, 0.1), (3, 0.98, 0.002), (50, 0.4, 0.02)] {
            let w = abm_weights(n, q, h);
            let sum: f64 = w.corrector.iter().sum();
            let t = (n + 1) as f64 * h;
            let expected = t.powf(q) / q;
            assert!(((sum - expected) / expected).abs() < 1e-12, "{sum} vs {expected}");
        }
    }

    #[test]
    fn weights_at_step_three() {
        // Frozen from adaptive quadrature (30 digits) of ∫ (t_4 - s)^{q-1} φ_j(s) ds
        // with φ_j the box (predictor) and hat (corrector) functions.
        let w = abm_weights(3, 0.98, 0.002);
        let pred = [
            0.0022088099905592135,
            0.0022238750903075811,
            0.0022472815293343592,
            0.0023109115332708476,
        ];
        let corr = [
            0.0011033487923863236,
            0.0022159039301119656,
            0.0022345170412062547,
            0.002269981342761979,
            0.0011671270370054786,
        ];
        for (got, want) in w.predictor.iter().zip(pred) {
            assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
        }
        for (got, want) in w.corrector.iter().zip(corr) {
            assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn classical_limit_exponential_decay() {
        let p = FdeProblem::new(1.0, decay, vec![1.0], 1.0, 1e-3).unwrap();
        let traj = abm_integrate(&p, 1).unwrap();
        let last = traj.last().unwrap()[0];
        assert!((last - (-1.0_f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn classical_limit_second_order() {
        let err = |h: f64| {
            let p = FdeProblem::new(1.0, decay, vec![1.0], 1.0, h).unwrap();
            let traj = abm_integrate(&p, 1).unwrap();
            traj.states()
                .zip(traj.times())
                .map(|(s, t)| (s[0] - (-t).exp()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.01) / err(0.005);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }

    #[test]
    fn fractional_relaxation_matches_mittag_leffler() {
        let q = 0.98;
        let p = FdeProblem::new(q, decay, vec![1.0], 5.0, 1e-3).unwrap();
        let traj = abm_integrate(&p, 1).unwrap();
        assert_eq!(traj.len(), 5001);
        let order = MlOrder::classical(q).unwrap();
        let mut max_err = 0.0_f64;
        for (s, &t) in traj.states().zip(traj.times()).step_by(50) {
            let exact = ml_scalar(order, -t.powf(q)).unwrap();
            max_err = max_err.max((s[0] - exact).abs());
        }
        assert!(max_err < 1e-4, "max error {max_err}");
    }

    #[test]
    fn refinement_reduces_error() {
        let q = 0.98;
        let order = MlOrder::classical(q).unwrap();
        let err = |h: f64| {
            let p = FdeProblem::new(q, decay, vec![1.0], 2.0, h).unwrap();
            let traj = abm_integrate(&p, 1).unwrap();
            traj.states()
                .zip(traj.times())
                .map(|(s, &t)| (s[0] - ml_scalar(order, -t.powf(q)).unwrap()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio >= 2.0, "ratio {ratio}");
    }

    #[test]
    fn deterministic() {
        let rhs = |x: &[f64], out: &mut [f64]| {
            out[0] = x[1];
            out[1] = -x[0].sin();
        };
        let p = FdeProblem::new(0.9, rhs, vec![1.0, 0.0], 3.0, 0.01).unwrap();
        let a = abm_integrate(&p, 2).unwrap();
        let b = abm_integrate(&p, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_problems_rejected() {
        let mk = |q, t_end, h| FdeProblem::new(q, decay, vec![1.0], t_end, h).is_err();
        assert!(mk(0.0, 1.0, 0.1));
        assert!(mk(1.2, 1.0, 0.1));
        assert!(mk(0.5, 0.0, 0.1));
        assert!(mk(0.5, 1.0, -0.1));
        assert!(mk(0.5, 1.0, 2.0));
        assert!(FdeProblem::new(0.5, decay, vec![f64::NAN], 1.0, 0.1).is_err());
    }

    #[test]
    fn blow_up_reports_step() {
        let p = FdeProblem::new(1.0, |x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0], vec![1.0], 2.0, 0.01)
            .unwrap();
        match abm_integrate(&p, 1) {
            Err(AbmError::NonFinite { step }) => assert!(step > 90),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn stepper_matches_generic_weights() {
        // The stepper's lag tables (and the running sums at q = 1) agree with
        // the published weight formula.
        for q in [0.73, 1.0] {
            let h = 0.05;
            let rhs = |x: &[f64], out: &mut [f64]| out[0] = -0.5 * x[0] + 1.0;
            let mut stepper = AbmStepper::new(q, h, &[0.2], &rhs, 4).unwrap();
            let g = gamma_fn(q).unwrap();
            let mut fs = vec![-0.5 * 0.2 + 1.0];
            for n in 0..9 {
                let w = abm_weights(n, q, h);
                let pred = 0.2 + w.predictor.iter().zip(&fs).map(|(a, b)| a * b).sum::<f64>() / g;
                let fp = -0.5 * pred + 1.0;
                let hist: f64 = w.corrector[..=n].iter().zip(&fs).map(|(a, b)| a * b).sum();
                let corr = 0.2 + (hist + w.corrector[n + 1] * fp) / g;
                fs.push(-0.5 * corr + 1.0);
                let got = stepper.step(&rhs, 1).unwrap()[0];
                assert!((got - corr).abs() < 1e-14, "q {q} step {n}: {got} vs {corr}");
            }
        }
    }

    #[test]
    fn block_rescaling_is_exact_for_linear_tangents() {
        // D^q Φ = A Φ with Φ a 2×2 block stored column-major after one scalar.
        let a = [[-0.3, 1.1], [-0.9, 0.2]];
        let rhs = move |x: &[f64], out: &mut [f64]| {
            out[0] = -x[0];
            for c in 0..2 {
                for r in 0..2 {
                    out[1 + 2 * c + r] = a[r][0] * x[1 + 2 * c] + a[r][1] * x[1 + 2 * c + 1];
                }
            }
        };
        let m = [2.0, -0.5, 0.25, 3.0];
        for q in [0.8, 1.0] {
            let mut split = AbmStepper::new(q, 0.01, &[1.0, 1.0, 0.0, 0.0, 1.0], &rhs, 40).unwrap();
            for _ in 0..20 {
                split.step(&rhs, 1).unwrap();
            }
            split.right_multiply_block(1, 2, 2, &m);
            // Φ(0) M in column-major order.
            let start = [1.0, m[0], m[2], m[1], m[3]];
            let mut direct = AbmStepper::new(q, 0.01, &start, &rhs, 40).unwrap();
            for _ in 0..20 {
                direct.step(&rhs, 1).unwrap();
            }
            for _ in 0..20 {
                let s = split.step(&rhs, 1).unwrap().to_vec();
                let d = direct.step(&rhs, 1).unwrap();
                for (u, v) in s.iter().zip(d) {
                    assert!((u - v).abs() < 1e-13, "q {q}: {u} vs {v}");
                }
            }
        }
    }
}
