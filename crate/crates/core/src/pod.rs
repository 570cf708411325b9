//! Proper orthogonal decomposition with energy-based truncation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::{Fidelity, SnapshotMatrix};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{sym_eigen_desc, thin_svd};

/// How the left singular vectors are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvdPath {
    /// Snapshots path when `field_dim > n_samples`, direct otherwise.
    #[default]
    Auto,
    /// Thin SVD of the centered snapshot matrix.
    Direct,
    /// Eigendecomposition of the `n × n` Gram matrix (method of snapshots).
    Snapshots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodOptions {
    pub ric: f64,
    /// Subtract the snapshot mean before decomposition. Turning this off is
    /// meant for diagnostics only.
    pub center: bool,
    pub path: SvdPath,
    /// Keep exactly this many modes instead of applying the RIC rule.
    pub fixed_k: Option<usize>,
}

impl Default for PodOptions {
    fn default() -> Self {
        PodOptions {
            ric: 0.99,
            center: true,
            path: SvdPath::Auto,
            fixed_k: None,
        }
    }
}

impl PodOptions {
    pub fn with_ric(ric: f64) -> Self {
        PodOptions {
            ric,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    modes: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    mean_field: DVector<f64>,
    ric_achieved: f64,
    pub fidelity: Fidelity,
}

impl PodBasis {
    /// Assemble a basis from stored parts, checking the typed invariants.
    pub fn from_parts(
        modes: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        mean_field: DVector<f64>,
        ric_achieved: f64,
        fidelity: Fidelity,
    ) -> Result<Self> {
        check_dim("mean field length", modes.nrows(), mean_field.len())?;
        if modes.ncols() == 0 {
            return Err(Error::invalid("basis needs at least one mode"));
        }
        let gram = modes.transpose() * &modes;
        let off = (gram - DMatrix::identity(modes.ncols(), modes.ncols())).amax();
        if off > 1e-10 {
            return Err(Error::Data(format!("stored modes are not orthonormal (max |MᵀM - I| = {off:e})")));
        }
        if eigenvalues.iter().any(|l| !(*l >= 0.0)) || eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Data("stored eigenvalues must be non-negative and non-increasing".into()));
        }
        Ok(PodBasis {
            modes,
            eigenvalues,
            mean_field,
            ric_achieved,
            fidelity,
        })
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    /// Descending spectrum up to the numerical rank.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mean_field(&self) -> &DVector<f64> {
        &self.mean_field
    }

    pub fn k(&self) -> usize {
        self.modes.ncols()
    }

    pub fn field_dim(&self) -> usize {
        self.modes.nrows()
    }

    pub fn ric_achieved(&self) -> f64 {
        self.ric_achieved
    }

    /// Short label carried by projected latent sets.
    pub fn id(&self) -> String {
        format!("pod-{}-k{}", self.fidelity, self.k())
    }
}

/// Latent coordinates, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSet {
    pub coords: DMatrix<f64>,
    pub basis_id: String,
}

impl LatentSet {
    pub fn new(coords: DMatrix<f64>, basis_id: impl Into<String>) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("latent coordinates are not finite".into()));
        }
        Ok(LatentSet {
            coords,
            basis_id: basis_id.into(),
        })
    }

    pub fn k(&self) -> usize {
        self.coords.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.coords.ncols()
    }

    pub fn select_samples(&self, indices: &[usize]) -> LatentSet {
        LatentSet {
            coords: self.coords.select_columns(indices),
            basis_id: self.basis_id.clone(),
        }
    }

    /// Row `i` (one latent coordinate across samples).
    pub fn mode(&self, i: usize) -> DVector<f64> {
        self.coords.row(i).transpose()
    }
}

/// Smallest `k` whose cumulative energy ratio reaches `threshold`.
pub fn select_k(eigenvalues: &[f64], threshold: f64) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    let mut acc = 0.0;
    for (i, l) in eigenvalues.iter().enumerate() {
        acc += l;
        if acc / total >= threshold - 1e-12 {
            return i + 1;
        }
    }
    eigenvalues.len()
}

pub fn fit_pod(snapshots: &SnapshotMatrix, ric: f64) -> Result<PodBasis> {
    fit_pod_with(snapshots, &PodOptions::with_ric(ric))
}

pub fn fit_pod_with(snapshots: &SnapshotMatrix, opts: &PodOptions) -> Result<PodBasis> {
    if !(opts.ric > 0.0 && opts.ric <= 1.0) {
        return Err(Error::invalid(format!("RIC threshold must be in (0, 1], got {}", opts.ric)));
    }
    let (p, n) = (snapshots.field_dim(), snapshots.n_samples());
    if n < 2 {
        return Err(Error::invalid(format!("POD needs at least 2 snapshots, got {n}")));
    }
    let y = snapshots.values();
    let mean = if opts.center {
        y.column_mean()
    } else {
        DVector::zeros(p)
    };
    let mut centered = y.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }

    let use_gram = match opts.path {
        SvdPath::Auto => p > n,
        SvdPath::Direct => false,
        SvdPath::Snapshots => true,
    };
    let (sigma, u) = if use_gram {
        snapshot_method(&centered)?
    } else {
        let svd = thin_svd(&centered)?;
        (svd.singular_values, svd.u)
    };

    let smax = sigma.first().copied().unwrap_or(0.0);
    let scale = y.amax();
    let tol = smax.max(scale) * f64::EPSILON * p.max(n) as f64;
    let rank = sigma.iter().take_while(|s| **s > tol && **s > 0.0).count();
    if rank == 0 {
        return Err(Error::Degenerate("degenerate snapshot set: all snapshots are identical".into()));
    }
    let eigenvalues: Vec<f64> = sigma[..rank].iter().map(|s| s * s).collect();
    let k = match opts.fixed_k {
        Some(k) => {
            let avail = u.ncols();
            if k == 0 || k > avail {
                return Err(Error::invalid(format!("fixed k = {k} outside 1..={avail}")));
            }
            k
        }
        None => select_k(&eigenvalues, opts.ric),
    };
    let total: f64 = eigenvalues.iter().sum();
    let ric_achieved = eigenvalues.iter().take(k).sum::<f64>() / total;
    let mut modes = u.columns(0, k).into_owned();
    fix_signs(&mut modes);
    Ok(PodBasis {
        modes,
        eigenvalues,
        mean_field: mean,
        ric_achieved: ric_achieved.min(1.0),
        fidelity: snapshots.fidelity,
    })
}

/// Singular values and left vectors of `a` (p × n, p > n) via `aᵀa`.
/// Directions beyond the numerical rank are completed by Gram–Schmidt.
fn snapshot_method(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (p, n) = a.shape();
    let gram = a.transpose() * a;
    let (lam, v) = sym_eigen_desc(&gram)?;
    let lmax = lam.first().copied().unwrap_or(0.0).max(0.0);
    let tol = lmax * f64::EPSILON * n as f64 * 10.0;
    let m = n.min(p);
    let mut sigma = Vec::with_capacity(m);
    let mut u = DMatrix::<f64>::zeros(p, m);
    let mut filled = 0;
    for i in 0..m {
        if lam[i] > tol {
            let s = lam[i].sqrt();
            let col = a * v.column(i) / s;
            u.set_column(i, &col);
            sigma.push(s);
            filled += 1;
        } else {
            break;
        }
    }
    // re-orthogonalize the computed columns, then complete the basis
    let mut e = 0;
    for i in 0..m {
        let mut c: DVector<f64> = if i < filled {
            u.column(i).into_owned()
        } else {
            sigma.push(0.0);
            let mut c = DVector::zeros(p);
            c[e % p] = 1.0;
            e += 1;
            c
        };
        loop {
            for _ in 0..2 {
                for j in 0..i {
                    let q = u.column(j);
                    let d = q.dot(&c);
                    c.axpy(-d, &q, 1.0);
                }
            }
            let norm = c.norm();
            if i < filled || norm > 1e-8 {
                u.set_column(i, &(c / norm));
                break;
            }
            c = DVector::zeros(p);
            c[e % p] = 1.0;
            e += 1;
        }
    }
    Ok((sigma, u))
}

/// Deterministic sign: the largest-magnitude entry of each mode is positive.
fn fix_signs(modes: &mut DMatrix<f64>) {
    for mut col in modes.column_iter_mut() {
        let (mut best, mut at) = (0.0, 0);
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                at = i;
            }
        }
        if col[at] < 0.0 {
            col.neg_mut();
        }
    }
}

/// `modesᵀ (y - mean)` for every column.
pub fn project(basis: &PodBasis, snapshots: &SnapshotMatrix) -> Result<LatentSet> {
    check_dim("snapshot field_dim", basis.field_dim(), snapshots.field_dim())?;
    project_matrix(basis, snapshots.values())
}

pub(crate) fn project_matrix(basis: &PodBasis, y: &DMatrix<f64>) -> Result<LatentSet> {
    let mut centered = y.clone();
    for mut col in centered.column_iter_mut() {
        col -= &basis.mean_field;
    }
    LatentSet::new(basis.modes.transpose() * centered, basis.id())
}

/// `mean + modes · coords` for every column.
pub fn reconstruct(basis: &PodBasis, latent: &LatentSet) -> Result<SnapshotMatrix> {
    check_dim("latent k", basis.k(), latent.k())?;
    let mut y = &basis.modes * &latent.coords;
    for mut col in y.column_iter_mut() {
        col += &basis.mean_field;
    }
    SnapshotMatrix::new(y, basis.fidelity)
}

/// Root-mean-square (over samples) norm of the projection residual.
pub fn reconstruction_rms(basis: &PodBasis, snapshots: &SnapshotMatrix) -> Result<f64> {
    let back = reconstruct(basis, &project(basis, snapshots)?)?;
    let n = snapshots.n_samples() as f64;
    Ok(((snapshots.values() - back.values()).norm_squared() / n).sqrt())
}
