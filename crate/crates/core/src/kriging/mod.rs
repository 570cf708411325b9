//! Ordinary and hierarchical Kriging with an ARD squared-exponential kernel.
//!
//! Both models share one engine: a Gaussian process with a single-column
//! trend `β f(ξ)`. Ordinary Kriging uses `f ≡ 1`; the HF stage of
//! hierarchical Kriging uses `f = LF Kriging prediction`, so `β` is the
//! scaling factor `α`.

mod optim;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky_inverse, cholesky_ln_det, cholesky_lower, cholesky_solve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KrigingOptions {
    pub n_starts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Diagonal jitter on the correlation matrix.
    pub nugget: f64,
}

impl Default for KrigingOptions {
    fn default() -> Self {
        KrigingOptions {
            n_starts: 8,
            max_iter: 40,
            seed: 0,
            nugget: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingModel {
    /// One site per row.
    sites: DMatrix<f64>,
    y: DVector<f64>,
    /// Trend regressor at each site.
    trend_basis: DVector<f64>,
    lengthscales: DVector<f64>,
    nugget: f64,
    beta: f64,
    process_variance: f64,
    /// `R⁻¹ (y - β F)`.
    weights: DVector<f64>,
    log_likelihood: f64,
    /// All targets equal; the model predicts that value everywhere.
    constant: bool,
    chol: DMatrix<f64>,
}

fn correlation(sites: &DMatrix<f64>, inv_ls: &[f64], nugget: f64) -> DMatrix<f64> {
    let (n, l) = sites.shape();
    let mut r = DMatrix::<f64>::identity(n, n) * (1.0 + nugget);
    for a in 0..n {
        for b in a + 1..n {
            let mut q = 0.0;
            for j in 0..l {
                let t = (sites[(a, j)] - sites[(b, j)]) * inv_ls[j];
                q += t * t;
            }
            let v = (-0.5 * q).exp();
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    r
}

/// Concentrated log-likelihood pieces at fixed lengthscales.
struct Concentrated {
    ll: f64,
    beta: f64,
    sigma2: f64,
    alpha: DVector<f64>,
    chol: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn concentrate(sites: &DMatrix<f64>, y: &DVector<f64>, f: &DVector<f64>, inv_ls: &[f64], nugget: f64) -> Option<Concentrated> {
    let n = y.len() as f64;
    let r = correlation(sites, inv_ls, nugget);
    let chol = cholesky_lower(&r)?;
    let rinv_f = cholesky_solve(&chol, f);
    let denom = f.dot(&rinv_f);
    if !(denom > 0.0) {
        return None;
    }
    let beta = rinv_f.dot(y) / denom;
    let resid = y - f * beta;
    let alpha = cholesky_solve(&chol, &resid);
    let floor = 1e-300_f64.max(1e-14 * y.norm_squared() / n);
    let sigma2 = (resid.dot(&alpha) / n).max(floor);
    let ll = -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) - 0.5 * cholesky_ln_det(&chol);
    ll.is_finite().then_some(Concentrated {
        ll,
        beta,
        sigma2,
        alpha,
        chol,
        r,
    })
}

/// Negative log-likelihood and its gradient with respect to log-lengthscales.
fn objective(sites: &DMatrix<f64>, y: &DVector<f64>, f: &DVector<f64>, psi: &[f64], nugget: f64) -> (f64, Vec<f64>) {
    let (n, l) = sites.shape();
    let inv_ls: Vec<f64> = psi.iter().map(|p| (-p).exp()).collect();
    let Some(c) = concentrate(sites, y, f, &inv_ls, nugget) else {
        return (f64::INFINITY, vec![0.0; l]);
    };
    let rinv = cholesky_inverse(&c.chol);
    let mut grad = vec![0.0; l];
    for a in 0..n {
        for b in a + 1..n {
            let w = (c.alpha[a] * c.alpha[b] / c.sigma2 - rinv[(a, b)]) * c.r[(a, b)];
            if w == 0.0 {
                continue;
            }
            for j in 0..l {
                let t = (sites[(a, j)] - sites[(b, j)]) * inv_ls[j];
                // symmetric pair counted twice, times the 1/2 prefactor
                grad[j] += w * t * t;
            }
        }
    }
    (-c.ll, grad.into_iter().map(|v| -v).collect())
}

fn check_sites(sites: &DMatrix<f64>) -> Result<()> {
    let (n, l) = sites.shape();
    if sites.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("Kriging sites contain non-finite values".into()));
    }
    for a in 0..n {
        for b in a + 1..n {
            let dist2: f64 = (0..l).map(|j| (sites[(a, j)] - sites[(b, j)]).powi(2)).sum();
            if dist2.sqrt() <= 1e-12 {
                return Err(Error::Data(format!("Kriging sites {a} and {b} coincide")));
            }
        }
    }
    Ok(())
}

/// Log-lengthscale search box `[1e-2, 1e2] × per-dimension site range`.
pub fn log_lengthscale_box(sites: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let l = sites.ncols();
    let mut lo = Vec::with_capacity(l);
    let mut hi = Vec::with_capacity(l);
    for j in 0..l {
        let col = sites.column(j);
        let mut range = col.max() - col.min();
        if !(range > 0.0) {
            range = 1.0;
        }
        lo.push((1e-2 * range).ln());
        hi.push((1e2 * range).ln());
    }
    (lo, hi)
}

impl KrigingModel {
    pub fn dim(&self) -> usize {
        self.sites.ncols()
    }

    pub fn n_sites(&self) -> usize {
        self.sites.nrows()
    }

    pub fn sites(&self) -> &DMatrix<f64> {
        &self.sites
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn trend_basis(&self) -> &DVector<f64> {
        &self.trend_basis
    }

    pub fn lengthscales(&self) -> &DVector<f64> {
        &self.lengthscales
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Trend coefficient (`β` for ordinary Kriging, `α` for the HF stage).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn process_variance(&self) -> f64 {
        self.process_variance
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// Rebuild a model from stored parts; the factorization is recomputed.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        sites: DMatrix<f64>,
        y: DVector<f64>,
        trend_basis: DVector<f64>,
        lengthscales: DVector<f64>,
        nugget: f64,
        beta: f64,
        process_variance: f64,
        weights: DVector<f64>,
        log_likelihood: f64,
        constant: bool,
    ) -> Result<Self> {
        let n = sites.nrows();
        check_dim("Kriging targets", n, y.len())?;
        check_dim("Kriging trend basis", n, trend_basis.len())?;
        check_dim("Kriging weights", n, weights.len())?;
        check_dim("Kriging lengthscales", sites.ncols(), lengthscales.len())?;
        if lengthscales.iter().any(|t| !(*t > 0.0)) || !(nugget >= 1e-10) {
            return Err(Error::Data("stored Kriging hyperparameters out of range".into()));
        }
        let inv: Vec<f64> = lengthscales.iter().map(|t| 1.0 / t).collect();
        let chol = cholesky_lower(&correlation(&sites, &inv, nugget))
            .ok_or_else(|| Error::Numerical("stored Kriging correlation matrix is not positive definite".into()))?;
        Ok(KrigingModel {
            sites,
            y,
            trend_basis,
            lengthscales,
            nugget,
            beta,
            process_variance,
            weights,
            log_likelihood,
            constant,
            chol,
        })
    }

    fn corr_vector(&self, xi: &[f64]) -> DVector<f64> {
        let (n, l) = self.sites.shape();
        DVector::from_fn(n, |i, _| {
            let mut q = 0.0;
            for j in 0..l {
                let t = (xi[j] - self.sites[(i, j)]) / self.lengthscales[j];
                q += t * t;
            }
            (-0.5 * q).exp()
        })
    }

    /// Mean prediction given the trend regressor value at `xi`.
    pub fn predict_with_trend(&self, xi: &[f64], trend: f64) -> Result<f64> {
        check_dim("prediction point", self.dim(), xi.len())?;
        if self.constant {
            return Ok(self.beta * trend);
        }
        Ok(self.beta * trend + self.corr_vector(xi).dot(&self.weights))
    }

    /// Ordinary-Kriging mean prediction.
    pub fn predict(&self, xi: &[f64]) -> Result<f64> {
        self.predict_with_trend(xi, 1.0)
    }

    /// Predictive variance given the trend regressor value at `xi`.
    pub fn variance_with_trend(&self, xi: &[f64], trend: f64) -> Result<f64> {
        check_dim("prediction point", self.dim(), xi.len())?;
        if self.constant {
            return Ok(0.0);
        }
        let r = self.corr_vector(xi);
        let rinv_r = cholesky_solve(&self.chol, &r);
        let rinv_f = cholesky_solve(&self.chol, &self.trend_basis);
        let u = self.trend_basis.dot(&rinv_r) - trend;
        let v = self.process_variance
            * (1.0 + self.nugget - r.dot(&rinv_r) + u * u / self.trend_basis.dot(&rinv_f));
        Ok(v.max(0.0))
    }

    pub fn variance(&self, xi: &[f64]) -> Result<f64> {
        self.variance_with_trend(xi, 1.0)
    }

    /// Concentrated log-likelihood at arbitrary lengthscales on this model's data.
    pub fn log_likelihood_at(&self, lengthscales: &[f64]) -> f64 {
        let inv: Vec<f64> = lengthscales.iter().map(|t| 1.0 / t).collect();
        concentrate(&self.sites, &self.y, &self.trend_basis, &inv, self.nugget).map_or(f64::NEG_INFINITY, |c| c.ll)
    }
}

/// Gaussian-process fit with trend `β f(ξ)`; `trend_basis` holds `f` at the
/// sites.
pub fn fit_with_trend(
    sites: &DMatrix<f64>,
    y: &DVector<f64>,
    trend_basis: &DVector<f64>,
    opts: &KrigingOptions,
) -> Result<KrigingModel> {
    let (n, l) = sites.shape();
    check_dim("Kriging targets", n, y.len())?;
    check_dim("Kriging trend basis", n, trend_basis.len())?;
    if n < 2 {
        return Err(Error::invalid(format!("Kriging needs at least 2 sites, got {n}")));
    }
    if l == 0 {
        return Err(Error::invalid("Kriging sites need at least one dimension"));
    }
    if !(opts.nugget >= 1e-10) || opts.n_starts == 0 {
        return Err(Error::invalid("Kriging needs nugget >= 1e-10 and at least one start"));
    }
    if y.iter().chain(trend_basis.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("Kriging targets contain non-finite values".into()));
    }
    check_sites(sites)?;

    let (lo, hi) = log_lengthscale_box(sites);
    let spread = y.max() - y.min();
    if spread <= 1e-12 * y.amax().max(1.0) {
        let ls = DVector::from_iterator(l, lo.iter().zip(&hi).map(|(a, b)| (0.5 * (a + b)).exp()));
        let inv: Vec<f64> = ls.iter().map(|t| 1.0 / t).collect();
        let chol = cholesky_lower(&correlation(sites, &inv, opts.nugget))
            .ok_or_else(|| Error::Numerical("correlation matrix is not positive definite".into()))?;
        return Ok(KrigingModel {
            sites: sites.clone(),
            y: y.clone(),
            trend_basis: DVector::from_element(n, 1.0),
            lengthscales: ls,
            nugget: opts.nugget,
            beta: y.mean(),
            process_variance: 0.0,
            weights: DVector::zeros(n),
            log_likelihood: f64::INFINITY,
            constant: true,
            chol,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Vec<f64>> = (0..opts.n_starts)
        .map(|s| {
            (0..l)
                .map(|j| {
                    if s == 0 {
                        0.5 * (lo[j] + hi[j])
                    } else {
                        lo[j] + rng.random::<f64>() * (hi[j] - lo[j])
                    }
                })
                .collect()
        })
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for x0 in starts {
        let out = optim::minimize_box(|p| objective(sites, y, trend_basis, p, opts.nugget), x0, &lo, &hi, opts.max_iter);
        if out.f.is_finite() && best.as_ref().is_none_or(|b| out.f < b.1) {
            best = Some((out.x, out.f));
        }
    }
    let (psi, _) = best.ok_or_else(|| Error::Numerical("Kriging likelihood could not be evaluated at any start".into()))?;
    // refit with the stored lengthscales so a reloaded model matches exactly
    let lengthscales = DVector::from_iterator(l, psi.iter().map(|p| p.exp()));
    let inv: Vec<f64> = lengthscales.iter().map(|t| 1.0 / t).collect();
    let c = concentrate(sites, y, trend_basis, &inv, opts.nugget)
        .ok_or_else(|| Error::Numerical("Kriging correlation matrix is not positive definite".into()))?;
    Ok(KrigingModel {
        sites: sites.clone(),
        y: y.clone(),
        trend_basis: trend_basis.clone(),
        lengthscales,
        nugget: opts.nugget,
        beta: c.beta,
        process_variance: c.sigma2,
        weights: c.alpha,
        log_likelihood: c.ll,
        constant: false,
        chol: c.chol,
    })
}

/// Ordinary Kriging (constant trend).
pub fn fit_kriging(sites: &DMatrix<f64>, y: &DVector<f64>, opts: &KrigingOptions) -> Result<KrigingModel> {
    fit_with_trend(sites, y, &DVector::from_element(y.len(), 1.0), opts)
}

/// Two-stage hierarchical Kriging: `h(ξ) ≈ α · lf(ξ) + GP residual`.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalKriging {
    pub lf_model: KrigingModel,
    /// HF stage; its trend coefficient is `α`. When `fallback` is set this is
    /// an ordinary Kriging model on the HF data alone.
    pub hf_model: KrigingModel,
    pub fallback: bool,
}

impl HierarchicalKriging {
    pub fn alpha(&self) -> f64 {
        if self.fallback {
            0.0
        } else {
            self.hf_model.beta()
        }
    }

    pub fn dim(&self) -> usize {
        self.hf_model.dim()
    }

    pub fn predict(&self, xi: &[f64]) -> Result<f64> {
        if self.fallback {
            return self.hf_model.predict(xi);
        }
        let lf = self.lf_model.predict(xi)?;
        self.hf_model.predict_with_trend(xi, lf)
    }

    pub fn variance(&self, xi: &[f64]) -> Result<f64> {
        if self.fallback {
            return self.hf_model.variance(xi);
        }
        let lf = self.lf_model.predict(xi)?;
        self.hf_model.variance_with_trend(xi, lf)
    }
}

pub fn fit_hk(
    xi_hf: &DMatrix<f64>,
    h: &DVector<f64>,
    xi_lf: &DMatrix<f64>,
    g: &DVector<f64>,
    opts: &KrigingOptions,
) -> Result<HierarchicalKriging> {
    check_dim("reduced input dimension", xi_hf.ncols(), xi_lf.ncols())?;
    if xi_hf.nrows() < 2 {
        return Err(Error::invalid("hierarchical Kriging needs at least 2 HF sites"));
    }
    let lf_model = fit_kriging(xi_lf, g, opts)?;
    let lf_at_hf = DVector::from_iterator(
        xi_hf.nrows(),
        (0..xi_hf.nrows()).map(|i| lf_model.predict(&row(xi_hf, i))).collect::<Result<Vec<_>>>()?,
    );
    let degenerate = lf_model.is_constant() || lf_at_hf.amax() <= 1e-12 * h.amax().max(1e-300);
    let stage2 = if degenerate {
        None
    } else {
        match fit_with_trend(xi_hf, h, &lf_at_hf, opts) {
            Ok(m) => Some(m),
            Err(Error::Numerical(msg)) => {
                log::warn!("HF stage with LF trend failed ({msg}); falling back to ordinary Kriging");
                None
            }
            Err(e) => return Err(e),
        }
    };
    Ok(match stage2 {
        Some(hf_model) => HierarchicalKriging {
            lf_model,
            hf_model,
            fallback: false,
        },
        None => {
            log::warn!("LF Kriging model is degenerate; hierarchical Kriging falls back to ordinary Kriging on HF data");
            HierarchicalKriging {
                lf_model,
                hf_model: fit_kriging(xi_hf, h, opts)?,
                fallback: true,
            }
        }
    })
}

pub(crate) fn row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    fn random_sites(n: usize, l: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, l, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn tol(m: &KrigingModel) -> f64 {
        10.0 * (m.nugget() * m.process_variance()).sqrt() + 1e-8
    }

    #[test]
    fn constant_targets() {
        let s = random_sites(6, 2, 1);
        let m = fit_kriging(&s, &DVector::from_element(6, 3.5), &KrigingOptions::default()).unwrap();
        assert!(m.is_constant());
        assert_eq!(m.predict(&[0.1, 0.7]).unwrap(), 3.5);
        assert_eq!(m.variance(&row(&s, 2)).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_in_one_dimension() {
        let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let y = DVector::from_iterator(5, xs.iter().map(|x| x * x));
        let m = fit_kriging(&col(&xs), &y, &KrigingOptions::default()).unwrap();
        for t in [-0.75, -0.25, 0.25, 0.75] {
            assert!((m.predict(&[t]).unwrap() - t * t).abs() < 0.05);
        }
        for (i, x) in xs.iter().enumerate() {
            assert!((m.predict(&[*x]).unwrap() - y[i]).abs() <= tol(&m));
            assert!(m.variance(&[*x]).unwrap() < 1e-6 * m.process_variance());
        }
        // symmetric data gives a symmetric predictor
        for t in [0.1, 0.33, 0.8, 2.0] {
            assert!((m.predict(&[t]).unwrap() - m.predict(&[-t]).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn far_field_reverts_to_trend() {
        let s = random_sites(12, 2, 4);
        let y = DVector::from_fn(12, |i, _| (s[(i, 0)] * 2.0).sin() + s[(i, 1)]);
        let m = fit_kriging(&s, &y, &KrigingOptions::default()).unwrap();
        let far = m.lengthscales().iter().fold(0.0_f64, |a, b| a.max(*b)) * 20.0 + 1.0;
        let p = m.predict(&[far, -far]).unwrap();
        assert!((p - m.beta()).abs() < 1e-3 * (y.max() - y.min()));
    }

    #[test]
    fn likelihood_beats_random_draws() {
        let s = random_sites(15, 2, 7);
        let y = DVector::from_fn(15, |i, _| (3.0 * s[(i, 0)]).cos() * s[(i, 1)]);
        let m = fit_kriging(&s, &y, &KrigingOptions::default()).unwrap();
        let (lo, hi) = log_lengthscale_box(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let ls: Vec<f64> = (0..2).map(|j| (lo[j] + rng.random::<f64>() * (hi[j] - lo[j])).exp()).collect();
            assert!(m.log_likelihood() >= m.log_likelihood_at(&ls) - 1e-9);
        }
        assert!((m.log_likelihood_at(m.lengthscales().as_slice()) - m.log_likelihood()).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = random_sites(10, 3, 2);
        let y = DVector::from_fn(10, |i, _| s[(i, 0)] - s[(i, 1)] * s[(i, 2)]);
        let f = DVector::from_element(10, 1.0);
        let psi = [0.1, -0.4, 0.3];
        let (_, g) = objective(&s, &y, &f, &psi, 1e-8);
        for j in 0..3 {
            let h = 1e-6;
            let mut a = psi;
            let mut b = psi;
            a[j] += h;
            b[j] -= h;
            let fd = (objective(&s, &y, &f, &a, 1e-8).0 - objective(&s, &y, &f, &b, 1e-8).0) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-5 * (1.0 + g[j].abs()), "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = random_sites(14, 2, 3);
        let y = DVector::from_fn(14, |i, _| s[(i, 0)].exp() * s[(i, 1)]);
        let o = KrigingOptions {
            seed: 5,
            ..Default::default()
        };
        let a = fit_kriging(&s, &y, &o).unwrap();
        let b = fit_kriging(&s, &y, &o).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn coincident_sites_rejected() {
        let s = col(&[0.0, 0.5, 0.5]);
        assert!(matches!(
            fit_kriging(&s, &DVector::from_vec(vec![1.0, 2.0, 3.0]), &KrigingOptions::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn hk_with_zero_lf_is_ordinary_kriging() {
        let hf = random_sites(10, 2, 11);
        let lf = random_sites(30, 2, 12);
        let h = DVector::from_fn(10, |i, _| (hf[(i, 0)] + hf[(i, 1)]).sin());
        let o = KrigingOptions::default();
        let hk = fit_hk(&hf, &h, &lf, &DVector::zeros(30), &o).unwrap();
        let ok = fit_kriging(&hf, &h, &o).unwrap();
        assert!(hk.fallback);
        assert_eq!(hk.alpha(), 0.0);
        let pts = random_sites(100, 2, 13);
        for i in 0..100 {
            let p = row(&pts, i);
            assert!((hk.predict(&p).unwrap() - ok.predict(&p).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn hk_identical_fidelities() {
        let s = random_sites(12, 2, 21);
        let h = DVector::from_fn(12, |i, _| s[(i, 0)].powi(2) - 0.5 * s[(i, 1)]);
        let hk = fit_hk(&s, &h, &s, &h, &KrigingOptions::default()).unwrap();
        assert!((hk.alpha() - 1.0).abs() < 0.1);
        for i in 0..12 {
            assert!((hk.predict(&row(&s, i)).unwrap() - h[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn hk_recovers_scaling() {
        let mut alphas = Vec::new();
        for seed in 0..20 {
            let lf = random_sites(40, 1, 100 + seed);
            let hf = lf.rows(0, 6).into_owned();
            let f = |x: f64| (2.5 * x).sin() + 0.3 * x;
            let g = DVector::from_fn(40, |i, _| f(lf[(i, 0)]));
            let h = DVector::from_fn(6, |i, _| 2.0 * f(hf[(i, 0)]));
            let hk = fit_hk(&hf, &h, &lf, &g, &KrigingOptions { seed, ..Default::default() }).unwrap();
            alphas.push(hk.alpha());
        }
        alphas.sort_by(f64::total_cmp);
        let median = 0.5 * (alphas[9] + alphas[10]);
        assert!((1.8..=2.2).contains(&median), "{median}");
    }

    #[test]
    fn hk_far_field_follows_scaled_lf() {
        let lf = random_sites(30, 1, 31);
        let hf = lf.rows(0, 8).into_owned();
        let g = DVector::from_fn(30, |i, _| lf[(i, 0)] * 3.0 + 1.0);
        let h = DVector::from_fn(8, |i, _| 1.5 * g[i] + 0.1 * (5.0 * hf[(i, 0)]).sin());
        let hk = fit_hk(&hf, &h, &lf, &g, &KrigingOptions::default()).unwrap();
        let far = 50.0 * hk.hf_model.lengthscales()[0] + 2.0;
        let want = hk.alpha() * hk.lf_model.predict(&[far]).unwrap();
        assert!((hk.predict(&[far]).unwrap() - want).abs() < 1e-3 * (h.max() - h.min()));
    }
}
