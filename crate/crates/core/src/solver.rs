//! Oracle solver for the sampled, regularized problem
//!
//! ```text
//! minimize_x  ||D (f(Ax) - b)||_p^p + tau ||R A x||_p^p
//! ```
//!
//! with nonnegative diagonals `D` and `R`. The problem is nonconvex once `f`
//! is, so [`solve`] runs several descent passes from deterministic starts and
//! keeps the best. Each pass takes damped Gauss-Newton steps (IRLS weights for
//! `p != 2`) under an Armijo backtracking line search; for `p < 2` the loss is
//! smoothed to `(t^2 + mu^2)^{p/2} - mu^p` and `mu` is annealed twice by 10x.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{self, abs_pow, RANK_RTOL};
use crate::lipschitz::LipschitzFn;
use crate::sampling::SamplingMatrix;
use crate::seeding::{derive_seed, rng_for};

const ARMIJO: f64 = 1e-4;
const MAX_ITER: usize = 5000;
const GRAD_RTOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 60;
const SMOOTHING_START: f64 = 1e-6;
const SMOOTHING_STAGES: usize = 3;
/// Objectives within this relative gap count as tied across restarts.
const TIE_RTOL: f64 = 1e-12;

/// Restart count used when the caller does not pick one.
pub fn default_restarts(d: usize) -> usize {
    if d <= 16 {
        8
    } else {
        16
    }
}

#[derive(Clone, Debug)]
enum Regularizer {
    /// `R = I` over all rows of `A`.
    Identity,
    /// Sparse diagonal, stored as `(row, R_ii^p)`.
    Rows(Vec<(usize, f64)>),
}

/// `||D (f(Ax) - b)||_p^p + tau ||R A x||_p^p` with `b` known only where
/// `D` is nonzero.
#[derive(Clone, Debug)]
pub struct RegularizedObjective<'a> {
    a: &'a DMatrix<f64>,
    /// `(row, D_ii^p, b_i)` for every nonzero row of `D`.
    data: Vec<(usize, f64, f64)>,
    reg: Regularizer,
    /// `sum_i R_ii^p a_i a_i^T`, cached when `p = 2`.
    reg_gram: Option<DMatrix<f64>>,
    f: LipschitzFn,
    p: f64,
    tau: f64,
}

impl<'a> RegularizedObjective<'a> {
    /// `D` and `R` are given as sampling matrices (`None` for `R` means the
    /// identity). `label(i)` is called exactly once for each nonzero row of `D`.
    pub fn new(
        a: &'a DMatrix<f64>,
        f: LipschitzFn,
        p: f64,
        data_diag: &SamplingMatrix,
        mut label: impl FnMut(usize) -> f64,
        reg_diag: Option<&SamplingMatrix>,
        tau: f64,
    ) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::InvalidInput(format!("p must be a finite real >= 1, got {p}")));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!("tau must be finite and >= 0, got {tau}")));
        }
        if data_diag.dim() != a.nrows() || reg_diag.is_some_and(|r| r.dim() != a.nrows()) {
            return Err(Error::InvalidInput("diagonal sizes do not match the matrix".into()));
        }
        let data = data_diag.entries().map(|(i, s)| (i, abs_pow(s, p), label(i))).collect();
        let reg = match reg_diag {
            None => Regularizer::Identity,
            Some(r) => Regularizer::Rows(r.entries().map(|(i, s)| (i, abs_pow(s, p))).collect()),
        };
        let mut obj = Self { a, data, reg, reg_gram: None, f, p, tau };
        if p == 2.0 {
            obj.reg_gram = Some(obj.build_reg_gram());
        }
        Ok(obj)
    }

    /// The unsampled problem `||f(Ax) - b||_p^p + tau ||Ax||_p^p`.
    pub fn full(a: &'a DMatrix<f64>, b: &[f64], f: LipschitzFn, p: f64, tau: f64) -> Result<Self> {
        if b.len() != a.nrows() {
            return Err(Error::InvalidInput("label vector does not match the matrix".into()));
        }
        Self::new(a, f, p, &SamplingMatrix::identity(a.nrows()), |i| b[i], None, tau)
    }

    fn build_reg_gram(&self) -> DMatrix<f64> {
        let d = self.a.ncols();
        let mut g = DMatrix::zeros(d, d);
        self.for_each_reg_row(|i, rho| {
            let row = self.a.row(i);
            g.ger(rho, &row.transpose(), &row.transpose(), 1.0);
        });
        g
    }

    fn for_each_reg_row(&self, mut visit: impl FnMut(usize, f64)) {
        match &self.reg {
            Regularizer::Identity => (0..self.a.nrows()).for_each(|i| visit(i, 1.0)),
            Regularizer::Rows(rows) => rows.iter().for_each(|&(i, rho)| visit(i, rho)),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn link(&self) -> &LipschitzFn {
        &self.f
    }

    /// Rows where the data term reads a label.
    pub fn data_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().map(|&(i, _, _)| i)
    }

    /// `||D b||_p^p`, the objective at `x = 0`.
    pub fn value_at_zero(&self) -> f64 {
        self.data.iter().map(|&(_, w, b)| w * abs_pow(b, self.p)).sum()
    }

    fn dot_row(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.a.row(i).iter().zip(x.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn data_term(&self, x: &DVector<f64>) -> f64 {
        self.data.iter().map(|&(i, w, b)| w * abs_pow(self.f.eval(self.dot_row(i, x)) - b, self.p)).sum()
    }

    /// `||R A x||_p^p`.
    pub fn regularizer(&self, x: &DVector<f64>) -> f64 {
        if let Some(g) = &self.reg_gram {
            return (x.transpose() * g * x)[(0, 0)].max(0.0);
        }
        let mut total = 0.0;
        self.for_each_reg_row(|i, rho| total += rho * abs_pow(self.dot_row(i, x), self.p));
        total
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let reg = if self.tau > 0.0 { self.tau * self.regularizer(x) } else { 0.0 };
        self.data_term(x) + reg
    }

    /// Smoothed value, gradient and Gauss-Newton curvature at `x`.
    fn model(&self, x: &DVector<f64>, mu: f64) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        let p = self.p;
        let mut value = 0.0;
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        let loss = Loss { p, mu };

        for &(i, w, b) in &self.data {
            let t = self.dot_row(i, x);
            let slope = self.f.subgradient(t);
            let r = self.f.eval(t) - b;
            let (phi, dphi, curv) = loss.eval(r);
            value += w * phi;
            if slope != 0.0 {
                let row = self.a.row(i).transpose();
                grad.axpy(w * dphi * slope, &row, 1.0);
                hess.ger(w * curv * slope * slope, &row, &row, 1.0);
            }
        }
        if self.tau > 0.0 {
            if let Some(g) = &self.reg_gram {
                let gx = g * x;
                value += self.tau * x.dot(&gx);
                grad.axpy(2.0 * self.tau, &gx, 1.0);
                hess += g * (2.0 * self.tau);
            } else {
                let tau = self.tau;
                self.for_each_reg_row(|i, rho| {
                    let t = self.dot_row(i, x);
                    let (phi, dphi, curv) = loss.eval(t);
                    value += tau * rho * phi;
                    let row = self.a.row(i).transpose();
                    grad.axpy(tau * rho * dphi, &row, 1.0);
                    hess.ger(tau * rho * curv, &row, &row, 1.0);
                });
            }
        }
        (value, grad, hess)
    }

    fn smoothed_value(&self, x: &DVector<f64>, mu: f64) -> f64 {
        if mu == 0.0 {
            return self.value(x);
        }
        let loss = Loss { p: self.p, mu };
        let mut value: f64 =
            self.data.iter().map(|&(i, w, b)| w * loss.eval(self.f.eval(self.dot_row(i, x)) - b).0).sum();
        if self.tau > 0.0 {
            let tau = self.tau;
            self.for_each_reg_row(|i, rho| value += tau * rho * loss.eval(self.dot_row(i, x)).0);
        }
        value
    }

    /// Typical label magnitude, used to scale smoothing and random starts.
    fn label_scale(&self) -> f64 {
        let m = self.data.iter().map(|&(_, _, b)| b.abs()).fold(0.0, f64::max);
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    /// Least-squares start: `f` replaced by the identity, `p` by 2.
    fn linearized_start(&self) -> DVector<f64> {
        let d = self.dim();
        let mut gram = DMatrix::zeros(d, d);
        let mut rhs = DVector::zeros(d);
        for &(i, w, b) in &self.data {
            let w2 = w.powf(2.0 / self.p);
            let row = self.a.row(i).transpose();
            gram.ger(w2, &row, &row, 1.0);
            rhs.axpy(w2 * b, &row, 1.0);
        }
        if self.tau > 0.0 {
            let tau = self.tau;
            let p = self.p;
            self.for_each_reg_row(|i, rho| {
                let row = self.a.row(i).transpose();
                gram.ger(tau * rho.powf(2.0 / p), &row, &row, 1.0);
            });
        }
        let svd = gram.svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return DVector::zeros(d);
        }
        svd.solve(&rhs, RANK_RTOL * smax).unwrap_or_else(|_| DVector::zeros(d))
    }

    /// Scale for random starts so that `||D A x||_p` matches `||D b||_p`.
    fn matched_scale(&self, direction: &DVector<f64>) -> f64 {
        let target = self.value_at_zero();
        let mut fit: f64 = self.data.iter().map(|&(i, w, _)| w * abs_pow(self.dot_row(i, direction), self.p)).sum();
        if fit == 0.0 {
            fit = self.regularizer(direction);
        }
        if target > 0.0 && fit > 0.0 {
            (target / fit).powf(1.0 / self.p)
        } else {
            1.0
        }
    }

    fn start(&self, restart: usize, seed: u64) -> DVector<f64> {
        let d = self.dim();
        match restart {
            0 => DVector::zeros(d),
            1 => self.linearized_start(),
            r => {
                // Pairs of opposite random directions: 2,3 share one draw, 4,5 the next.
                let pair = (r / 2) as u64;
                let mut rng = rng_for(derive_seed(seed, &[pair]));
                let g = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                let g: DVector<f64> = if r % 2 == 1 { -g } else { g };
                let s = self.matched_scale(&g);
                g * s
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Loss {
    p: f64,
    mu: f64,
}

impl Loss {
    /// `(phi(r), phi'(r), curvature)` where the curvature is the exact second
    /// derivative for `p >= 2` and the IRLS weight `phi'(r)/r` otherwise.
    #[inline]
    fn eval(self, r: f64) -> (f64, f64, f64) {
        let p = self.p;
        if p == 2.0 {
            return (r * r, 2.0 * r, 2.0);
        }
        if p > 2.0 {
            let a = r.abs();
            let ap2 = a.powf(p - 2.0);
            return (ap2 * a * a, p * ap2 * r, p * (p - 1.0) * ap2);
        }
        if self.mu == 0.0 {
            let a = r.abs();
            let irls = if a > 0.0 { p * a.powf(p - 2.0) } else { 0.0 };
            return (a.powf(p), p * a.powf(p - 1.0) * r.signum(), irls);
        }
        let s = r * r + self.mu * self.mu;
        let base = s.powf(p / 2.0 - 1.0);
        (base * s - self.mu.powf(p), p * base * r, p * base)
    }
}

/// Result of a solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub x_hat: Vec<f64>,
    pub objective_value: f64,
    pub restarts_used: usize,
    pub best_restart: usize,
    pub grad_norm_at_end: f64,
}

struct Pass {
    x: DVector<f64>,
    value: f64,
    grad_norm: f64,
}

fn descend(obj: &RegularizedObjective<'_>, start: DVector<f64>) -> Result<Pass> {
    let start_value = obj.value(&start);
    if !start_value.is_finite() {
        return Err(Error::NumericalFailure("objective is not finite at a start point".into()));
    }
    let schedule: Vec<f64> = if obj.p < 2.0 {
        let mu0 = SMOOTHING_START * obj.label_scale();
        (0..SMOOTHING_STAGES).map(|k| mu0 * 0.1f64.powi(k as i32)).collect()
    } else {
        vec![0.0]
    };

    let d = obj.dim();
    let mut x = start.clone();
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    for &mu in &schedule {
        let mut damping = 1e-8;
        let mut stalled = 0;
        while iterations < MAX_ITER {
            iterations += 1;
            let (value, grad, hess) = obj.model(&x, mu);
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NumericalFailure("objective or gradient became non-finite".into()));
            }
            grad_norm = grad.norm();
            if grad_norm <= GRAD_RTOL * (1.0 + value) {
                break;
            }

            let scale = (0..d).map(|k| hess[(k, k)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let mut system = hess.clone();
            for k in 0..d {
                system[(k, k)] += damping * (hess[(k, k)] + 1e-12 * scale);
            }
            let newton = system
                .cholesky()
                .map(|c| -c.solve(&grad))
                .filter(|dir| dir.iter().all(|v| v.is_finite()) && dir.dot(&grad) < 0.0);

            let mut accepted = None;
            if let Some(dir) = newton {
                accepted = backtrack(obj, &x, value, &grad, &dir, mu, 1.0);
                match accepted {
                    Some((_, 1.0)) => damping = (damping / 3.0).max(1e-12),
                    _ => damping = (damping * 4.0).min(1e6),
                }
            }
            if accepted.is_none() {
                // Steepest descent with a step sized by the local curvature.
                let dir = -&grad;
                let curvature = grad.dot(&(&hess * &grad));
                let t0 = if curvature > 0.0 { grad_norm * grad_norm / curvature } else { 1.0 / grad_norm };
                accepted = backtrack(obj, &x, value, &grad, &dir, mu, t0.max(1e-300));
            }
            let Some((next, _)) = accepted else { break };
            let next_value = obj.smoothed_value(&next, mu);
            let moved = (&next - &x).norm();
            x = next;
            if moved <= 1e-14 * (1.0 + x.norm()) || value - next_value <= 1e-15 * (1.0 + value.abs()) {
                stalled += 1;
                if stalled >= 3 {
                    break;
                }
            } else {
                stalled = 0;
            }
        }
    }

    let end_value = obj.value(&x);
    if !end_value.is_finite() {
        return Err(Error::NumericalFailure("objective is not finite at the final iterate".into()));
    }
    if start_value < end_value {
        Ok(Pass { x: start, value: start_value, grad_norm })
    } else {
        Ok(Pass { x, value: end_value, grad_norm })
    }
}

/// Armijo backtracking from `x` along `dir`; returns the accepted point and step.
fn backtrack(
    obj: &RegularizedObjective<'_>,
    x: &DVector<f64>,
    value: f64,
    grad: &DVector<f64>,
    dir: &DVector<f64>,
    mu: f64,
    t0: f64,
) -> Option<(DVector<f64>, f64)> {
    let slope = grad.dot(dir);
    let mut t = t0;
    for _ in 0..MAX_HALVINGS {
        let cand = x + dir * t;
        let v = obj.smoothed_value(&cand, mu);
        if v.is_finite() && v <= value + ARMIJO * t * slope {
            return Some((cand, t));
        }
        t *= 0.5;
    }
    None
}

/// Multi-start solve. Restart `r` depends only on `(obj, seed, r)`, so adding
/// restarts never makes the result worse.
pub fn solve(obj: &RegularizedObjective<'_>, restarts: usize, seed: u64) -> Result<SolveReport> {
    let restarts = restarts.max(1);
    let mut best: Option<(Pass, f64, usize)> = None;
    for r in 0..restarts {
        let pass = descend(obj, obj.start(r, seed))?;
        let reg = obj.regularizer(&pass.x);
        let better = match &best {
            None => true,
            Some((b, b_reg, _)) => {
                let gap = TIE_RTOL * (1.0 + b.value.abs());
                pass.value < b.value - gap || (pass.value <= b.value + gap && reg < *b_reg)
            }
        };
        if better {
            best = Some((pass, reg, r));
        }
    }
    let (pass, _, best_restart) = best.expect("at least one restart");
    Ok(SolveReport {
        x_hat: pass.x.iter().copied().collect(),
        objective_value: pass.value,
        restarts_used: restarts,
        best_restart,
        grad_norm_at_end: pass.grad_norm,
    })
}

/// Brute-force minimizer for `d = 1`: `grid` equispaced points on `[lo, hi]`,
/// then golden-section refinement on the bracket around the best point.
pub fn solve_1d_exact(obj: &RegularizedObjective<'_>, lo: f64, hi: f64, grid: usize) -> Result<SolveReport> {
    if obj.dim() != 1 {
        return Err(Error::InvalidInput(format!("1-D oracle needs d = 1, got {}", obj.dim())));
    }
    if !(lo < hi) || grid < 2 {
        return Err(Error::InvalidInput("need lo < hi and at least two grid points".into()));
    }
    let eval = |x: f64| obj.value(&DVector::from_element(1, x));
    let h = (hi - lo) / (grid - 1) as f64;
    let point = |j: usize| if j + 1 == grid { hi } else { lo + h * j as f64 };
    let mut best_j = 0;
    let mut best_v = f64::INFINITY;
    for j in 0..grid {
        let v = eval(point(j));
        if !v.is_finite() {
            return Err(Error::NumericalFailure(format!("objective not finite at {}", point(j))));
        }
        if v < best_v {
            best_v = v;
            best_j = j;
        }
    }
    let mut best_x = point(best_j);

    let (mut a, mut b) = (point(best_j.saturating_sub(1)), point((best_j + 1).min(grid - 1)));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut e = a + inv_phi * (b - a);
    let (mut fc, mut fe) = (eval(c), eval(e));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + best_x.abs()) {
            break;
        }
        if fc <= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + inv_phi * (b - a);
            fe = eval(e);
        }
    }
    for (x, v) in [(c, fc), (e, fe)] {
        if v < best_v {
            best_v = v;
            best_x = x;
        }
    }
    Ok(SolveReport {
        x_hat: vec![best_x],
        objective_value: best_v,
        restarts_used: 0,
        best_restart: 0,
        grad_norm_at_end: f64::NAN,
    })
}

/// Closed-form `argmin ||A x - b||_2` used as a reference in tests and reports.
pub fn least_squares_reference(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let x = linalg::least_squares(a, &DVector::from_column_slice(b))?;
    Ok(x.iter().copied().collect())
}
