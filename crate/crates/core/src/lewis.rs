//! `l_p` Lewis weights.
//!
//! The weights are the fixed point of
//! `w_i = (a_i^T (A^T W^{1-2/p} A)^+ a_i)^{p/2}`, found by plain fixed-point
//! iteration from the uniform start `d/n`. The map is a contraction for
//! `p < 4`; for `p >= 4` each update is damped geometrically with
//! `w <- w^{1/2} * update^{1/2}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_RTOL};
use crate::sampling::SamplingMatrix;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_MAX_ITER_LARGE_P: usize = 500;
const LARGE_P_DAMPING: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LewisOptions {
    pub tol: f64,
    /// `None` picks 200 for `p < 4` and 500 otherwise.
    pub max_iter: Option<usize>,
}

impl Default for LewisOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: None }
    }
}

/// Per-row Lewis weights of a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LewisWeights {
    pub p: f64,
    pub weights: Vec<f64>,
    /// Column rank of the matrix; at convergence the weights sum to it.
    pub rank: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm change of the final iteration.
    pub last_change: f64,
}

impl LewisWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Turns a non-converged run into [`Error::NoConvergence`].
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence { iterations: self.iterations, last_change: self.last_change })
        }
    }
}

/// `a_i^T (A^T diag(v) A)^+ a_i` for every row listed in `rows`, where the
/// Gram matrix sums over the same rows. Pseudo-inverse by SVD of
/// `diag(sqrt(v)) A` with the usual relative cutoff.
fn generalized_leverage(a: &DMatrix<f64>, rows: &[usize], v: &[f64]) -> Vec<f64> {
    let d = a.ncols();
    let scaled: Vec<(usize, f64)> = rows.iter().zip(v).map(|(&i, &vi)| (i, vi.sqrt())).collect();
    let b = linalg::scaled_rows(a, &scaled);
    let svd = b.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("v requested");
    let smax = svd.singular_values.max();
    // Columns of V / sigma for the retained singular directions.
    let kept: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&k| svd.singular_values[k] > RANK_RTOL * smax).collect();
    let mut basis = DMatrix::zeros(d, kept.len());
    for (c, &k) in kept.iter().enumerate() {
        let s = svd.singular_values[k];
        for r in 0..d {
            basis[(r, c)] = v_t[(k, r)] / s;
        }
    }
    rows.iter()
        .map(|&i| {
            let row = a.row(i);
            (0..kept.len())
                .map(|c| {
                    let t = row.dot(&basis.column(c).transpose());
                    t * t
                })
                .sum()
        })
        .collect()
}

fn nonzero_rows(a: &DMatrix<f64>) -> Vec<usize> {
    (0..a.nrows()).filter(|&i| a.row(i).iter().any(|&x| x != 0.0)).collect()
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidInput(format!("p must be a finite real >= 1, got {p}")));
    }
    Ok(())
}

/// Lewis weights with default options.
pub fn lewis_weights(a: &DMatrix<f64>, p: f64) -> Result<LewisWeights> {
    compute_lewis_weights(a, p, &LewisOptions::default())
}

pub fn compute_lewis_weights(a: &DMatrix<f64>, p: f64, opts: &LewisOptions) -> Result<LewisWeights> {
    check_p(p)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let d = a.ncols();
    let rank = linalg::column_rank(a);
    if rank < d || d == 0 {
        return Err(Error::RankDeficient { rank, cols: d });
    }
    let max_iter = opts.max_iter.unwrap_or(if p >= 4.0 { DEFAULT_MAX_ITER_LARGE_P } else { DEFAULT_MAX_ITER });

    let rows = nonzero_rows(a);
    let mut w = vec![d as f64 / rows.len() as f64; rows.len()];
    let exponent = 1.0 - 2.0 / p;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;

    while iterations < max_iter {
        iterations += 1;
        let v: Vec<f64> = w.iter().map(|&wi| wi.powf(exponent)).collect();
        let tau = generalized_leverage(a, &rows, &v);
        let mut change: f64 = 0.0;
        for (wi, t) in w.iter_mut().zip(&tau) {
            let update = t.powf(p / 2.0);
            let next = if p >= 4.0 { wi.powf(1.0 - LARGE_P_DAMPING) * update.powf(LARGE_P_DAMPING) } else { update };
            change = change.max((next - *wi).abs());
            *wi = next;
        }
        if !change.is_finite() {
            return Err(Error::NumericalFailure("Lewis weight iterate became non-finite".into()));
        }
        last_change = change;
        if change <= opts.tol {
            converged = true;
            break;
        }
    }

    let mut weights = vec![0.0; a.nrows()];
    for (&i, wi) in rows.iter().zip(w) {
        weights[i] = wi;
    }
    Ok(LewisWeights { p, weights, rank, converged, iterations, last_change })
}

/// `max_i |w_i - (a_i^T (A^T W^{1-2/p} A)^+ a_i)^{p/2}|` over the nonzero rows.
pub fn fixed_point_residual(a: &DMatrix<f64>, lw: &LewisWeights) -> f64 {
    let rows = nonzero_rows(a);
    let exponent = 1.0 - 2.0 / lw.p;
    let v: Vec<f64> = rows.iter().map(|&i| lw.weights[i].powf(exponent)).collect();
    let tau = generalized_leverage(a, &rows, &v);
    rows.iter().zip(tau).map(|(&i, t)| (lw.weights[i] - t.powf(lw.p / 2.0)).abs()).fold(0.0, f64::max)
}

/// Statistical leverage scores `diag(A (A^T A)^+ A^T)`.
pub fn leverage_scores(a: &DMatrix<f64>) -> Vec<f64> {
    let all: Vec<usize> = (0..a.nrows()).collect();
    generalized_leverage(a, &all, &vec![1.0; a.nrows()])
}

/// Whether `|u_i| <= d^{1/2 - 1/max(2,p)} w_i^{1/p} ||u||_p` holds for every
/// row. `u` must lie in the column space of `a`.
pub fn coordinate_bound_check(a: &DMatrix<f64>, lw: &LewisWeights, u: &DVector<f64>) -> Result<bool> {
    if lw.len() != a.nrows() {
        return Err(Error::InvalidInput("weights do not match the matrix".into()));
    }
    let proj = linalg::project_onto_colspace(a, u)?;
    let scale = u.norm().max(f64::MIN_POSITIVE);
    if (u - &proj).norm() > 1e-9 * scale {
        return Err(Error::InvalidInput("vector is not in the column space".into()));
    }
    let p = lw.p;
    let d = lw.rank as f64;
    let factor = d.powf(0.5 - 1.0 / p.max(2.0));
    let norm_p = linalg::lp_pow(u.as_slice(), p).powf(1.0 / p);
    Ok(u.iter().zip(&lw.weights).all(|(&ui, &wi)| {
        let bound = factor * wi.powf(1.0 / p) * norm_p;
        ui.abs() <= bound * (1.0 + 1e-9) + 1e-12 * norm_p
    }))
}

/// Maximum Lewis weight of the nonzero rows of `S A`, and how many rows that is.
pub fn sampled_weight_bound(a: &DMatrix<f64>, s: &SamplingMatrix, p: f64) -> Result<(f64, usize)> {
    if s.dim() != a.nrows() {
        return Err(Error::InvalidInput(format!(
            "sampling matrix of dimension {} applied to {} rows",
            s.dim(),
            a.nrows()
        )));
    }
    let rows: Vec<(usize, f64)> = s.entries().collect();
    let sa = linalg::scaled_rows(a, &rows);
    let lw = lewis_weights(&sa, p)?;
    Ok((lw.max(), rows.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planted::gaussian_matrix;

    /// Direct substitution of a candidate into the fixed-point map, computed
    /// with an explicit inverse of the d x d Gram matrix.
    fn substitute(a: &DMatrix<f64>, w: &[f64], p: f64) -> Vec<f64> {
        let mut gram = DMatrix::<f64>::zeros(a.ncols(), a.ncols());
        for (i, &wi) in w.iter().enumerate() {
            if wi > 0.0 {
                let r = a.row(i).transpose();
                gram += wi.powf(1.0 - 2.0 / p) * &r * r.transpose();
            }
        }
        let inv = gram.try_inverse().unwrap();
        (0..a.nrows())
            .map(|i| {
                let r = a.row(i).transpose();
                (r.transpose() * &inv * &r)[(0, 0)].powf(p / 2.0)
            })
            .collect()
    }

    #[test]
    fn identity_rows_have_unit_weight() {
        for p in [1.0, 1.5, 2.0, 3.0, 4.0, 6.0] {
            let lw = lewis_weights(&DMatrix::identity(5, 5), p).unwrap();
            assert!(lw.converged);
            for w in &lw.weights {
                assert!((w - 1.0).abs() < 1e-12, "p={p}: {w}");
            }
        }
    }

    #[test]
    fn single_column_closed_form() {
        let col = [3.0, -1.0, 0.5, 2.0, -4.0, 1.0];
        let a = DMatrix::from_column_slice(col.len(), 1, &col);
        for p in [1.0, 1.5, 2.0, 3.0, 5.0] {
            let total: f64 = col.iter().map(|x: &f64| x.abs().powf(p)).sum();
            let closed: Vec<f64> = col.iter().map(|x| x.abs().powf(p) / total).collect();
            // The closed form is a fixed point.
            for (c, s) in closed.iter().zip(substitute(&a, &closed, p)) {
                assert!((c - s).abs() < 1e-12);
            }
            let lw = lewis_weights(&a, p).unwrap();
            for (w, c) in lw.weights.iter().zip(&closed) {
                assert!((w - c).abs() < 1e-7, "p={p}: {w} vs {c}");
            }
        }
    }

    #[test]
    fn gaussian_weights_sum_to_rank() {
        let a = gaussian_matrix(50, 4, 3);
        let lw = lewis_weights(&a, 3.0).unwrap();
        assert!(lw.converged);
        assert!((lw.sum() - 4.0).abs() <= 1e-6);
        assert!(fixed_point_residual(&a, &lw) <= 10.0 * DEFAULT_TOL);
        for (w, s) in lw.weights.iter().zip(substitute(&a, &lw.weights, 3.0)) {
            assert!((w - s).abs() < 1e-7);
        }
    }

    #[test]
    fn p2_weights_are_leverage_scores() {
        let a = gaussian_matrix(40, 3, 8);
        let lw = lewis_weights(&a, 2.0).unwrap();
        for (w, l) in lw.weights.iter().zip(leverage_scores(&a)) {
            assert!((w - l).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_rows_get_zero_weight() {
        let mut a = gaussian_matrix(20, 3, 4);
        a.row_mut(7).fill(0.0);
        a.row_mut(12).fill(0.0);
        let lw = lewis_weights(&a, 1.5).unwrap();
        assert_eq!(lw.weights[7], 0.0);
        assert_eq!(lw.weights[12], 0.0);
        assert!(lw.weights.iter().enumerate().all(|(i, &w)| i == 7 || i == 12 || w > 0.0));
        assert!((lw.sum() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn scale_invariance() {
        let a = gaussian_matrix(30, 3, 5);
        let base = lewis_weights(&a, 3.0).unwrap();
        for c in [-2.5, 1e-3, 40.0] {
            let scaled = lewis_weights(&(&a * c), 3.0).unwrap();
            for (x, y) in base.weights.iter().zip(&scaled.weights) {
                assert!((x - y).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn large_p_damped_iteration_converges_on_gaussian() {
        let a = gaussian_matrix(60, 3, 21);
        let lw = lewis_weights(&a, 5.0).unwrap();
        assert!(lw.converged, "iterations {}", lw.iterations);
        assert!((lw.sum() - 3.0).abs() < 1e-6);
    }

    #[test]
    fn rank_deficient_is_rejected() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0, 0.5, 1.0]);
        assert!(matches!(lewis_weights(&a, 2.0), Err(Error::RankDeficient { rank: 1, cols: 2 })));
        assert!(matches!(lewis_weights(&a, 0.5), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let a = gaussian_matrix(40, 3, 2);
        let opts = LewisOptions { tol: 1e-14, max_iter: Some(2) };
        let lw = compute_lewis_weights(&a, 1.0, &opts).unwrap();
        assert!(!lw.converged);
        assert_eq!(lw.iterations, 2);
        assert!(matches!(lw.ensure_converged(), Err(Error::NoConvergence { iterations: 2, .. })));
    }

    #[test]
    fn coordinate_bound_examples() {
        let eye = DMatrix::<f64>::identity(3, 3);
        let lw = lewis_weights(&eye, 3.0).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(coordinate_bound_check(&eye, &lw, &e1).unwrap());

        let a = gaussian_matrix(30, 3, 17);
        let lw = lewis_weights(&a, 2.0).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        assert!(coordinate_bound_check(&a, &lw, &(&a * x)).unwrap());

        // A residual orthogonal to the column space.
        let y = DVector::from_fn(30, |i, _| ((i * 7 % 11) as f64) - 5.0);
        let resid = &y - linalg::project_onto_colspace(&a, &y).unwrap();
        assert!(matches!(coordinate_bound_check(&a, &lw, &resid), Err(Error::InvalidInput(_))));
    }
}
