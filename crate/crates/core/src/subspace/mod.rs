//! Model-based active subspaces from a multi-fidelity latent surrogate.
//!
//! A cubic RBF is fit to the (aligned) LF latent coordinate, a linear
//! discrepancy corrects it towards the HF data, and the average outer
//! product of the surrogate gradient over the input box is diagonalized.

mod rbf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{make_linked_partition, sample_doe, Bounds, DesignMatrix};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{lstsq_min_norm, sym_eigen_desc};
use crate::par::{map_range, Exec};

pub use rbf::{fit_linear, fit_rbf, RbfSurrogate};

/// `δ(x) = intercept + slopeᵀ x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDiscrepancy {
    pub intercept: f64,
    pub slope: DVector<f64>,
    /// `[1 X]` lacked full column rank; the minimum-norm solution was used.
    pub rank_deficient: bool,
}

impl LinearDiscrepancy {
    pub fn zero(d: usize) -> Self {
        LinearDiscrepancy {
            intercept: 0.0,
            slope: DVector::zeros(d),
            rank_deficient: false,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.intercept + self.slope.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// `h(x) ≈ lf(x) + disc(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfLatentSurrogate {
    pub lf: RbfSurrogate,
    pub disc: LinearDiscrepancy,
}

impl MfLatentSurrogate {
    pub fn dim(&self) -> usize {
        self.disc.slope.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.lf.eval(x) + self.disc.eval(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: DMatrix<f64>,
    /// Uniform density over this box.
    pub bounds: Option<Bounds>,
    pub n_mc: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSubspace {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Columns ordered like `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub l: usize,
    pub energy_threshold: f64,
    /// `λ_1 / λ_{l+1} < 10`, or an all-zero covariance.
    pub no_gap: bool,
    pub n_mc: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl ActiveSubspace {
    pub fn dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    /// First `l` eigenvectors, `d × l`.
    pub fn projector(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.l).into_owned()
    }

    /// Reduced coordinates `W_ASᵀ x` for each row of `x` (rows in, rows out).
    pub fn reduce(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * self.projector()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspaceOptions {
    pub energy_threshold: f64,
    /// Defaults to `min(d, 10)`.
    pub l_max: Option<usize>,
    /// Defaults to `max(4096, 200 d)`.
    pub n_mc: Option<usize>,
    pub seed: u64,
    /// PCAS only: fit a linear model instead of the RBF.
    pub linear_only: bool,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        SubspaceOptions {
            energy_threshold: 0.99,
            l_max: None,
            n_mc: None,
            seed: 0,
            linear_only: false,
        }
    }
}

impl SubspaceOptions {
    pub fn l_max_for(&self, d: usize) -> usize {
        self.l_max.unwrap_or(d.min(10)).clamp(1, d)
    }

    pub fn n_mc_for(&self, d: usize) -> usize {
        self.n_mc.unwrap_or((200 * d).max(4096))
    }
}

/// Least-squares linear fit of `h - g` over the linked designs.
pub fn fit_discrepancy(
    x_linked: &DesignMatrix,
    h_vals: &DVector<f64>,
    g_vals: &DVector<f64>,
) -> Result<LinearDiscrepancy> {
    let (m, d) = (x_linked.len(), x_linked.dim());
    check_dim("HF latent values", m, h_vals.len())?;
    check_dim("LF latent values", m, g_vals.len())?;
    let a = rbf::augmented(x_linked.values());
    let (coef, rank) = lstsq_min_norm(&a, &(h_vals - g_vals))?;
    let rank_deficient = rank < d + 1;
    if rank_deficient {
        log::warn!("discrepancy fit has rank {rank} < {}; using the minimum-norm solution", d + 1);
    }
    Ok(LinearDiscrepancy {
        intercept: coef[0],
        slope: coef.rows(1, d).into_owned(),
        rank_deficient,
    })
}

pub fn mf_gradient(model: &MfLatentSurrogate, x: &[f64]) -> DVector<f64> {
    let mut g = model.disc.slope.clone();
    model.lf.gradient_into(x, g.as_mut_slice());
    g
}

/// Monte-Carlo gradient covariance over scrambled Sobol points in `bounds`.
pub fn estimate_covariance(
    model: &MfLatentSurrogate,
    bounds: &Bounds,
    n_mc: usize,
    seed: u64,
    exec: Exec,
) -> Result<CovarianceEstimate> {
    check_dim("covariance box", model.dim(), bounds.dim())?;
    if n_mc < 100 {
        return Err(Error::invalid(format!("n_mc must be >= 100, got {n_mc}")));
    }
    let pts = sample_doe(bounds, n_mc, seed)?;
    let mut est = covariance_at_points(model, pts.values(), exec)?;
    est.bounds = Some(bounds.clone());
    est.seed = seed;
    Ok(est)
}

/// Gradient covariance averaged over the given rows.
pub fn covariance_at_points(
    model: &MfLatentSurrogate,
    points: &DMatrix<f64>,
    exec: Exec,
) -> Result<CovarianceEstimate> {
    let (n, d) = points.shape();
    check_dim("covariance points", model.dim(), d)?;
    if n == 0 {
        return Err(Error::invalid("covariance needs at least one point"));
    }
    const CHUNK: usize = 256;
    let chunks = map_range(exec, n.div_ceil(CHUNK), |c| {
        let rows = (c * CHUNK)..((c + 1) * CHUNK).min(n);
        let mut grads = DMatrix::<f64>::zeros(d, rows.len());
        let mut x = vec![0.0; d];
        for (col, i) in rows.enumerate() {
            for j in 0..d {
                x[j] = points[(i, j)];
            }
            let g = mf_gradient(model, &x);
            grads.set_column(col, &g);
        }
        &grads * grads.transpose()
    });
    let mut c = DMatrix::<f64>::zeros(d, d);
    for part in chunks {
        c += part;
    }
    c /= n as f64;
    let sym = (&c + c.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("gradient covariance is not finite".into()));
    }
    Ok(CovarianceEstimate {
        matrix: sym,
        bounds: None,
        n_mc: n,
        seed: 0,
    })
}

pub fn eigendecompose_select(c: &CovarianceEstimate, energy_threshold: f64, l_max: usize) -> Result<ActiveSubspace> {
    let d = c.matrix.nrows();
    if !(energy_threshold > 0.0 && energy_threshold <= 1.0) {
        return Err(Error::invalid(format!("energy threshold must be in (0, 1], got {energy_threshold}")));
    }
    if l_max < 1 || l_max > d {
        return Err(Error::invalid(format!("l_max must be in 1..={d}, got {l_max}")));
    }
    let (eigenvalues, mut w) = sym_eigen_desc(&c.matrix)?;
    for mut col in w.column_iter_mut() {
        let at = col.iamax();
        if col[at] < 0.0 {
            col.neg_mut();
        }
    }
    let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let zero = total <= 0.0;
    let l = if zero {
        1
    } else {
        let mut acc = 0.0;
        let mut l = d;
        for (i, lam) in eigenvalues.iter().enumerate() {
            acc += lam.max(0.0);
            if acc / total >= energy_threshold - 1e-12 {
                l = i + 1;
                break;
            }
        }
        l.min(l_max).max(1)
    };
    let no_gap = zero || (l < d && eigenvalues[0] < 10.0 * eigenvalues[l]);
    Ok(ActiveSubspace {
        eigenvalues,
        eigenvectors: w,
        l,
        energy_threshold,
        no_gap,
        n_mc: c.n_mc,
        seed: c.seed,
        warnings: Vec::new(),
    })
}

fn flags_to_warnings(s: &MfLatentSurrogate, warnings: &mut Vec<String>) {
    if s.lf.regularized {
        warnings.push("surrogate interpolation system singular; minimum-norm solution used".into());
    }
    if s.disc.rank_deficient {
        warnings.push("discrepancy least squares rank deficient; minimum-norm solution used".into());
    }
}

/// The multi-fidelity surrogate for one latent coordinate.
///
/// `x_hf` rows must all appear in `x_lf`; `g` holds the (aligned) LF latent
/// values at every LF design and `h` the HF values at every HF design.
pub fn fit_mf_surrogate(
    x_hf: &DesignMatrix,
    h: &DVector<f64>,
    x_lf: &DesignMatrix,
    g: &DVector<f64>,
) -> Result<MfLatentSurrogate> {
    check_dim("HF latent values", x_hf.len(), h.len())?;
    check_dim("LF latent values", x_lf.len(), g.len())?;
    let part = make_linked_partition(x_hf, x_lf)?;
    let lf = fit_rbf(x_lf, g)?;
    let g_linked = DVector::from_iterator(h.len(), part.linked_indices.iter().map(|&j| g[j]));
    let disc = fit_discrepancy(x_hf, h, &g_linked)?;
    Ok(MfLatentSurrogate { lf, disc })
}

/// Single-fidelity surrogate on HF data only.
pub fn fit_sf_surrogate(x: &DesignMatrix, h: &DVector<f64>, linear_only: bool) -> Result<MfLatentSurrogate> {
    let lf = if linear_only { fit_linear(x, h)? } else { fit_rbf(x, h)? };
    Ok(MfLatentSurrogate {
        lf,
        disc: LinearDiscrepancy::zero(x.dim()),
    })
}

/// Covariance and eigen-selection for an already fitted surrogate.
pub fn subspace_from_surrogate(
    model: &MfLatentSurrogate,
    bounds: &Bounds,
    opts: &SubspaceOptions,
    exec: Exec,
) -> Result<ActiveSubspace> {
    let d = model.dim();
    let cov = estimate_covariance(model, bounds, opts.n_mc_for(d), opts.seed, exec)?;
    let mut sub = eigendecompose_select(&cov, opts.energy_threshold, opts.l_max_for(d))?;
    flags_to_warnings(model, &mut sub.warnings);
    Ok(sub)
}

/// Full multi-fidelity pipeline for one latent coordinate.
pub fn find_active_subspace(
    x_hf: &DesignMatrix,
    h: &DVector<f64>,
    x_lf: &DesignMatrix,
    g: &DVector<f64>,
    bounds: &Bounds,
    opts: &SubspaceOptions,
    exec: Exec,
) -> Result<ActiveSubspace> {
    let model = fit_mf_surrogate(x_hf, h, x_lf, g)?;
    subspace_from_surrogate(&model, bounds, opts, exec)
}
