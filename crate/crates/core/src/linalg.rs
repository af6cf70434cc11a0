//! Small dense helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values at or below this fraction of the largest are treated as zero.
pub const RANK_RTOL: f64 = 1e-12;

/// `sum_i |v_i|^p`.
pub fn lp_pow(v: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        v.iter().map(|x| x * x).sum()
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum()
    }
}

/// `|t|^p` with the `p = 1, 2` fast paths.
#[inline]
pub fn abs_pow(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t * t
    } else if p == 1.0 {
        t.abs()
    } else {
        t.abs().powf(p)
    }
}

pub fn numerical_rank(singular_values: &DVector<f64>) -> usize {
    let smax = singular_values.max();
    if !(smax > 0.0) {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > RANK_RTOL * smax).count()
}

/// Column rank of `a` by SVD.
pub fn column_rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    numerical_rank(&a.clone().svd(false, false).singular_values)
}

/// Orthogonal projection of `u` onto the column space of `a`.
pub fn project_onto_colspace(a: &DMatrix<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != u.len() {
        return Err(Error::InvalidInput(format!("vector of length {} does not match {} rows", u.len(), a.nrows())));
    }
    let svd = a.clone().svd(true, false);
    let uu = svd.u.as_ref().expect("u requested");
    let r = numerical_rank(&svd.singular_values);
    let mut proj = DVector::zeros(u.len());
    for k in 0..r {
        let col = uu.column(k);
        proj += col * col.dot(u);
    }
    Ok(proj)
}

/// Least-squares solution of `min ||a x - b||_2` via SVD pseudo-inverse.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(b, RANK_RTOL * smax.max(f64::MIN_POSITIVE)).map_err(|e| Error::NumericalFailure(e.to_string()))
}

/// Rows of `a` selected by `rows`, each scaled by the matching factor.
pub fn scaled_rows(a: &DMatrix<f64>, rows: &[(usize, f64)]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |r, c| {
        let (i, s) = rows[r];
        s * a[(i, c)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_pow_cases() {
        let v = [3.0, -4.0];
        assert_eq!(lp_pow(&v, 2.0), 25.0);
        assert_eq!(lp_pow(&v, 1.0), 7.0);
        assert!((lp_pow(&v, 3.0) - 91.0).abs() < 1e-12);
    }

    #[test]
    fn rank_of_duplicated_columns() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert_eq!(column_rank(&a), 1);
        assert_eq!(column_rank(&DMatrix::<f64>::identity(3, 3)), 3);
    }

    #[test]
    fn least_squares_matches_interpolation() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = least_squares(&a, &b).unwrap();
        assert!((x - b).norm() < 1e-14);
    }
}
