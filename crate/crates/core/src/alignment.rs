//! Procrustes alignment of LF latent coordinates onto the HF latent frame.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::thin_svd;
use crate::pod::LatentSet;

/// Similarity map `s ↦ scale · rotation · (s - mu_lf) + mu_hf`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMap {
    pub rotation: DMatrix<f64>,
    pub scale: f64,
    pub mu_lf: DVector<f64>,
    pub mu_hf: DVector<f64>,
    pub singular_values: Vec<f64>,
    /// Frobenius misfit on the fitting pairs.
    pub residual: f64,
    /// Fewer independent pairs than latent dimensions.
    pub underdetermined: bool,
}

impl AlignmentMap {
    pub fn k(&self) -> usize {
        self.rotation.nrows()
    }

    pub fn from_parts(
        rotation: DMatrix<f64>,
        scale: f64,
        mu_lf: DVector<f64>,
        mu_hf: DVector<f64>,
        singular_values: Vec<f64>,
        residual: f64,
    ) -> Result<Self> {
        let k = rotation.nrows();
        check_dim("rotation columns", k, rotation.ncols())?;
        check_dim("LF translation", k, mu_lf.len())?;
        check_dim("HF translation", k, mu_hf.len())?;
        let off = (rotation.transpose() * &rotation - DMatrix::identity(k, k)).amax();
        if off > 1e-10 {
            return Err(Error::Data(format!("stored rotation is not orthogonal ({off:e})")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Data(format!("stored scale must be positive, got {scale}")));
        }
        Ok(AlignmentMap {
            rotation,
            scale,
            mu_lf,
            mu_hf,
            singular_values,
            residual,
            underdetermined: false,
        })
    }
}

fn centered(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mu = m.column_mean();
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        col -= &mu;
    }
    (c, mu)
}

/// Fit rotation (reflections allowed), scale and translations that carry
/// `s_linked` onto `h` column by column.
pub fn procrustes_align(h: &LatentSet, s_linked: &LatentSet) -> Result<AlignmentMap> {
    let k = h.k();
    check_dim("latent dimension", k, s_linked.k())?;
    check_dim("linked sample count", h.n_samples(), s_linked.n_samples())?;
    let m1 = h.n_samples();
    if m1 == 0 || k == 0 {
        return Err(Error::invalid("alignment needs at least one latent pair"));
    }
    let underdetermined = m1 < k + 1;
    if underdetermined {
        log::warn!("alignment underdetermined: {m1} linked pairs for {k} latent dimensions");
    }
    let (hc, mu_hf) = centered(&h.coords);
    let (sc, mu_lf) = centered(&s_linked.coords);
    let denom = sc.norm_squared();
    if denom == 0.0 {
        return Err(Error::Degenerate("degenerate low-fidelity latent set".into()));
    }
    let svd = thin_svd(&(&sc * hc.transpose()))?;
    let rotation = svd.v_t.transpose() * svd.u.transpose();
    let trace: f64 = svd.singular_values.iter().sum();
    let scale = trace / denom;
    if !(scale > 0.0) {
        return Err(Error::Degenerate("degenerate high-fidelity latent set".into()));
    }
    let residual = (&rotation * &sc * scale - &hc).norm();
    Ok(AlignmentMap {
        rotation,
        scale,
        mu_lf,
        mu_hf,
        singular_values: svd.singular_values,
        residual,
        underdetermined,
    })
}

pub fn apply_alignment(map: &AlignmentMap, s: &LatentSet) -> Result<LatentSet> {
    check_dim("latent dimension", map.k(), s.k())?;
    let mut c = s.coords.clone();
    for mut col in c.column_iter_mut() {
        col -= &map.mu_lf;
    }
    let mut g = &map.rotation * c * map.scale;
    for mut col in g.column_iter_mut() {
        col += &map.mu_hf;
    }
    LatentSet::new(g, format!("aligned:{}", s.basis_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn latent(m: DMatrix<f64>) -> LatentSet {
        LatentSet::new(m, "t").unwrap()
    }

    fn random(k: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(k, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn orthogonal(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        random(k, k, rng).qr().q()
    }

    /// Centered 2 × 4 set with distinct singular values.
    fn h_set() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 4, &[3.0, -3.0, 1.0, -1.0, 0.5, 0.5, -0.5, -0.5])
    }

    #[test]
    fn identical_sets() {
        let h = latent(h_set());
        let map = procrustes_align(&h, &h).unwrap();
        assert!((&map.rotation - DMatrix::identity(2, 2)).amax() < 1e-10);
        assert!((map.scale - 1.0).abs() < 1e-10);
    }

    #[test]
    fn scaled_set() {
        let h = latent(h_set());
        let s = latent(h_set() * 2.0);
        let map = procrustes_align(&h, &s).unwrap();
        assert!((&map.rotation - DMatrix::identity(2, 2)).amax() < 1e-10);
        assert!((map.scale - 0.5).abs() < 1e-12);
        assert!((&s.coords * map.scale - &h.coords).amax() < 1e-10);

        // unlinked LF column (4, -2) maps to 0.5 * (4, -2) = (2, -1)
        let extra = latent(DMatrix::from_column_slice(2, 1, &[4.0, -2.0]));
        let g = apply_alignment(&map, &extra).unwrap();
        assert!((g.coords[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((g.coords[(1, 0)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn() {
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let h = latent(h_set());
        let s = latent(&r * h_set());
        let map = procrustes_align(&h, &s).unwrap();
        assert!((&map.rotation - r.transpose()).amax() < 1e-10);
        assert!((map.scale - 1.0).abs() < 1e-10);
        assert!(map.residual < 1e-10);
    }

    #[test]
    fn translation_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = latent(random(3, 9, &mut rng));
        let s = latent(random(3, 9, &mut rng));
        let map = procrustes_align(&h, &s).unwrap();
        let g = apply_alignment(&map, &latent(DMatrix::from_columns(&[map.mu_lf.clone()]))).unwrap();
        assert!((g.coords.column(0) - &map.mu_hf).amax() < 1e-14);
        let fit = apply_alignment(&map, &s).unwrap();
        assert!(((&fit.coords - &h.coords).norm() - map.residual).abs() < 1e-12);
    }

    #[test]
    fn degenerate_lf_rejected() {
        let h = latent(h_set());
        let s = latent(DMatrix::from_element(2, 4, 1.5));
        let err = procrustes_align(&h, &s).unwrap_err();
        assert!(err.to_string().contains("degenerate low-fidelity latent set"));
    }

    #[test]
    fn underdetermined_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let map = procrustes_align(&latent(random(3, 2, &mut rng)), &latent(random(3, 2, &mut rng))).unwrap();
        assert!(map.underdetermined);
        assert!((map.rotation.transpose() * &map.rotation - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn beats_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random(4, 15, &mut rng);
        let s = random(4, 15, &mut rng);
        let map = procrustes_align(&latent(h.clone()), &latent(s.clone())).unwrap();
        let (hc, _) = centered(&h);
        let (sc, _) = centered(&s);
        for _ in 0..100 {
            let q = orthogonal(4, &mut rng);
            let qs = &q * &sc;
            // best scale for this rotation
            let t = (hc.dot(&qs) / qs.norm_squared()).max(0.0);
            let r = (qs * t - &hc).norm();
            assert!(map.residual < r);
        }
    }

    proptest! {
        #[test]
        fn recovers_similarity_maps(k in 1usize..=8, extra in 1usize..=32, t0 in 0.05f64..20.0, seed in any::<u64>()) {
            let m1 = (k + extra).min(40);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random(k, m1, &mut rng) * 3.0;
            let p0 = orthogonal(k, &mut rng);
            let mu0 = DVector::from_fn(k, |_, _| rng.random::<f64>() * 10.0 - 5.0);
            let (hc, _) = centered(&h);
            let mut s = p0.transpose() * hc / t0;
            for mut col in s.column_iter_mut() {
                col += &mu0;
            }
            let map = procrustes_align(&latent(h.clone()), &latent(s.clone())).unwrap();
            let g = apply_alignment(&map, &latent(s)).unwrap();
            prop_assert!((&g.coords - &h).norm() / h.norm() < 1e-8);
            prop_assert!((map.rotation.transpose() * &map.rotation - DMatrix::identity(k, k)).amax() < 1e-10);
            prop_assert!((map.rotation.determinant().abs() - 1.0).abs() < 1e-8);
            prop_assert!(map.scale > 0.0);
            prop_assert!(map.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn apply_is_affine(alpha in -2.0f64..2.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let map = procrustes_align(&latent(random(3, 8, &mut rng)), &latent(random(3, 8, &mut rng))).unwrap();
            let a = random(3, 1, &mut rng);
            let b = random(3, 1, &mut rng);
            let mix = &a * alpha + &b * (1.0 - alpha);
            let lhs = apply_alignment(&map, &latent(mix)).unwrap().coords;
            let rhs = apply_alignment(&map, &latent(a)).unwrap().coords * alpha
                + apply_alignment(&map, &latent(b)).unwrap().coords * (1.0 - alpha);
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
