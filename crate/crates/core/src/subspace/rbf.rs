//! Cubic radial basis interpolation with a linear polynomial tail.

use nalgebra::{DMatrix, DVector};

use crate::dataset::DesignMatrix;
use crate::error::{check_dim, Error, Result};
use crate::linalg::lstsq_min_norm;

/// `s(x) = Σ w_i ‖x - c_i‖³ + t_0 + t_linᵀ x`.
///
/// With no centers this is a plain linear model.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfSurrogate {
    /// One center per row.
    pub centers: DMatrix<f64>,
    pub weights: DVector<f64>,
    /// `[t_0, t_1, …, t_d]`.
    pub trend_coeffs: DVector<f64>,
    /// The interpolation system was singular and solved in the
    /// minimum-norm least-squares sense.
    pub regularized: bool,
}

/// Reject exactly repeated design rows.
pub(crate) fn check_distinct(x: &DMatrix<f64>, what: &str) -> Result<()> {
    let (m, d) = x.shape();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        (0..d)
            .map(|j| x[(a, j)].total_cmp(&x[(b, j)]))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for w in order.windows(2) {
        if (0..d).all(|j| x[(w[0], j)] == x[(w[1], j)]) {
            let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(Error::Data(format!("{what}: rows {a} and {b} are duplicates")));
        }
    }
    Ok(())
}

impl RbfSurrogate {
    pub fn dim(&self) -> usize {
        self.trend_coeffs.len() - 1
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut s = self.trend_coeffs[0];
        for j in 0..d {
            s += self.trend_coeffs[j + 1] * x[j];
        }
        for i in 0..self.centers.nrows() {
            let mut r2 = 0.0;
            for j in 0..d {
                let t = x[j] - self.centers[(i, j)];
                r2 += t * t;
            }
            s += self.weights[i] * r2 * r2.sqrt();
        }
        s
    }

    /// Gradient, accumulated into `out` (length d).
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for j in 0..d {
            out[j] += self.trend_coeffs[j + 1];
        }
        let mut diff = vec![0.0; d];
        for i in 0..self.centers.nrows() {
            let mut r2 = 0.0;
            for j in 0..d {
                diff[j] = x[j] - self.centers[(i, j)];
                r2 += diff[j] * diff[j];
            }
            let f = 3.0 * self.weights[i] * r2.sqrt();
            if f != 0.0 {
                for j in 0..d {
                    out[j] += f * diff[j];
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient_into(x, &mut g);
        DVector::from_vec(g)
    }
}

/// Interpolate `values` at the rows of `x`.
pub fn fit_rbf(x: &DesignMatrix, values: &DVector<f64>) -> Result<RbfSurrogate> {
    let (m, d) = (x.len(), x.dim());
    check_dim("RBF training values", m, values.len())?;
    let xs = x.values();
    check_distinct(xs, "RBF training designs")?;
    let n = m + d + 1;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..m {
        for k in i + 1..m {
            let r = (xs.row(i) - xs.row(k)).norm();
            let phi = r * r * r;
            a[(i, k)] = phi;
            a[(k, i)] = phi;
        }
        a[(i, m)] = 1.0;
        a[(m, i)] = 1.0;
        for j in 0..d {
            a[(i, m + 1 + j)] = xs[(i, j)];
            a[(m + 1 + j, i)] = xs[(i, j)];
        }
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs.rows_mut(0, m).copy_from(values);

    let scale = values.amax().max(1.0);
    // the system is singular exactly when [1 X] lacks full column rank
    let tail_sv = crate::linalg::thin_svd(&augmented(xs))?.singular_values;
    let full_rank = m >= d + 1 && tail_sv[d] > tail_sv[0] * 1e-12;
    let solved = full_rank.then(|| a.clone().lu().solve(&rhs)).flatten().filter(|z| {
        z.iter().all(|v| v.is_finite()) && (&a * z - &rhs).amax() <= 1e-9 * scale
    });
    let (z, regularized) = match solved {
        Some(z) => (z, false),
        None => {
            log::warn!("RBF system with {m} centers in {d} dimensions is singular; using the minimum-norm solution");
            (lstsq_min_norm(&a, &rhs)?.0, true)
        }
    };
    Ok(RbfSurrogate {
        centers: xs.clone(),
        weights: z.rows(0, m).into_owned(),
        trend_coeffs: z.rows(m, d + 1).into_owned(),
        regularized,
    })
}

/// Least-squares linear model `t_0 + t_linᵀ x` as a center-free surrogate.
pub fn fit_linear(x: &DesignMatrix, values: &DVector<f64>) -> Result<RbfSurrogate> {
    let (m, d) = (x.len(), x.dim());
    check_dim("linear model values", m, values.len())?;
    let design = augmented(x.values());
    let (coef, rank) = lstsq_min_norm(&design, values)?;
    Ok(RbfSurrogate {
        centers: DMatrix::zeros(0, d),
        weights: DVector::zeros(0),
        trend_coeffs: coef,
        regularized: rank < d + 1,
    })
}

/// `[1 X]`.
pub(crate) fn augmented(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, d) = x.shape();
    DMatrix::from_fn(m, d + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}
