//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Thin SVD with singular values in non-increasing order.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    let svd = SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    Ok(ThinSvd {
        u: svd.u.expect("requested u"),
        singular_values: svd.singular_values.iter().copied().collect(),
        v_t: svd.v_t.expect("requested v_t"),
    })
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending, eigenvectors as
/// columns in the same order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::invalid("eigendecomposition needs a square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Minimum-norm least-squares solution of `a x = b`.
///
/// Returns the solution and the numerical rank used.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let svd = thin_svd(a)?;
    let smax = svd.singular_values.first().copied().unwrap_or(0.0);
    let tol = smax * f64::EPSILON * a.nrows().max(a.ncols()) as f64;
    let utb = svd.u.transpose() * b;
    let mut y = DVector::zeros(svd.singular_values.len());
    let mut rank = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol && s > 0.0 {
            y[i] = utb[i] / s;
            rank += 1;
        }
    }
    Ok((svd.v_t.transpose() * y, rank))
}

/// Lower Cholesky factor `L` with `a = L Lᵀ`, or `None` if `a` is not
/// numerically positive definite.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(a.clone()).map(|c| c.unpack())
}

/// Solve `L Lᵀ x = b` given the lower factor.
pub fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let y = l
        .solve_lower_triangular(b)
        .expect("cholesky factor has a positive diagonal");
    l.transpose()
        .solve_upper_triangular(&y)
        .expect("cholesky factor has a positive diagonal")
}

/// `(L Lᵀ)⁻¹` from the lower Cholesky factor.
pub fn cholesky_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let linv = lower_triangular_inverse(l);
    linv.transpose() * &linv
}

/// Inverse of a lower-triangular matrix with non-zero diagonal.
pub fn lower_triangular_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::zeros(n, n);
    // column-major storage: solve L x = e_j column by column, touching only
    // the lower part of each column.
    let src = l.as_slice();
    for j in 0..n {
        let col = &mut inv.as_mut_slice()[j * n..(j + 1) * n];
        col[j] = 1.0 / src[j * n + j];
        for k in j..n {
            let xk = col[k];
            if k > j {
                col[k] = xk / src[k * n + k];
            }
            let xk = col[k];
            if xk != 0.0 {
                let lk = &src[k * n..(k + 1) * n];
                for i in k + 1..n {
                    col[i] -= lk[i] * xk;
                }
            }
        }
    }
    inv
}

/// `ln det(L Lᵀ)` from the lower Cholesky factor.
pub fn cholesky_ln_det(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Orthonormal basis for the column span of `a` (thin QR).
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// Largest principal angle (radians) between the column spans of `a` and
/// `b`, which must have the same number of columns.
///
/// Uses the sine form `asin ‖(I - QaQaᵀ) Qb‖₂`, which stays accurate for
/// angles far below `sqrt(eps)`.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(a.ncols(), b.ncols());
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    let resid = &qb - &qa * (qa.transpose() * &qb);
    let s = SVD::try_new(resid, false, false, f64::EPSILON, 0)
        .map(|svd| svd.singular_values.iter().copied().fold(0.0_f64, f64::max))
        .unwrap_or(f64::NAN);
    s.min(1.0).asin()
}

/// Angle between the lines spanned by two non-zero vectors.
pub fn line_angle(u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let u = u.normalize();
    let v = v.normalize();
    let dot = u.dot(&v).abs();
    let perp = (&v - &u * u.dot(&v)).norm();
    perp.atan2(dot)
}
