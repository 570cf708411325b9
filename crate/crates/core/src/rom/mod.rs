//! End-to-end reduced-order models: MF-PCAS, single-fidelity PCAS and the
//! alignment-only MA-ROM baseline.

pub mod archive;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::alignment::{apply_alignment, procrustes_align, AlignmentMap};
use crate::dataset::{Bounds, DesignMatrix, LinkedPartition, SnapshotMatrix};
use crate::error::{check_dim, Error, Result};
use crate::kriging::{fit_hk, fit_kriging, HierarchicalKriging, KrigingModel, KrigingOptions};
use crate::par::{derive_seed, try_map_range, Exec};
use crate::pod::{fit_pod_with, project, LatentSet, PodBasis, PodOptions, SvdPath};
use crate::subspace::{
    fit_mf_surrogate, fit_sf_surrogate, subspace_from_surrogate, ActiveSubspace, SubspaceOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    MfPcas,
    Pcas,
    MaRom,
}

impl Variant {
    pub fn is_multi_fidelity(self) -> bool {
        self != Variant::Pcas
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::MfPcas => "mf_pcas",
            Variant::Pcas => "pcas",
            Variant::MaRom => "ma_rom",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mf_pcas" => Ok(Variant::MfPcas),
            "pcas" => Ok(Variant::Pcas),
            "ma_rom" => Ok(Variant::MaRom),
            other => Err(Error::invalid(format!("unknown method '{other}' (expected mf_pcas, pcas or ma_rom)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RomConfig {
    pub ric: f64,
    pub pod_path: SvdPath,
    pub subspace: SubspaceOptions,
    pub kriging: KrigingOptions,
    /// Base seed; per-mode seeds are derived from it.
    pub seed: u64,
}

impl Default for RomConfig {
    fn default() -> Self {
        RomConfig {
            ric: 0.99,
            pod_path: SvdPath::Auto,
            subspace: SubspaceOptions::default(),
            kriging: KrigingOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub m1: usize,
    /// 0 for single-fidelity models.
    pub m2: usize,
    pub tau: Option<f64>,
    pub ric: f64,
    pub seed: u64,
    pub d: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regressor {
    Ordinary(KrigingModel),
    Hierarchical(HierarchicalKriging),
}

impl Regressor {
    pub fn predict(&self, xi: &[f64]) -> Result<f64> {
        match self {
            Regressor::Ordinary(m) => m.predict(xi),
            Regressor::Hierarchical(m) => m.predict(xi),
        }
    }
}

/// Model for one latent coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeModel {
    /// Absent for MA-ROM (regression on the full input).
    pub subspace: Option<ActiveSubspace>,
    /// Cached projector `d × l`.
    projector: Option<DMatrix<f64>>,
    pub regressor: Regressor,
}

impl ModeModel {
    pub fn new(subspace: Option<ActiveSubspace>, regressor: Regressor) -> Self {
        let projector = subspace.as_ref().map(ActiveSubspace::projector);
        ModeModel {
            subspace,
            projector,
            regressor,
        }
    }

    fn reduce(&self, x: &[f64]) -> Vec<f64> {
        match &self.projector {
            Some(w) => (0..w.ncols())
                .map(|c| w.column(c).iter().zip(x).map(|(a, b)| a * b).sum())
                .collect(),
            None => x.to_vec(),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.regressor.predict(&self.reduce(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RomModel {
    pub variant: Variant,
    pub basis: PodBasis,
    pub alignment: Option<AlignmentMap>,
    pub modes: Vec<ModeModel>,
    pub input_box: Bounds,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

/// A field prediction and whether the design was outside the training box.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPrediction {
    pub field: DVector<f64>,
    pub latent: DVector<f64>,
    pub extrapolated: bool,
}

impl RomModel {
    pub fn k(&self) -> usize {
        self.basis.k()
    }

    pub fn dim(&self) -> usize {
        self.input_box.dim()
    }

    pub(crate) fn check(&self) -> Result<()> {
        check_dim("regressor count", self.basis.k(), self.modes.len())?;
        for m in &self.modes {
            if let Some(s) = &m.subspace {
                check_dim("subspace dimension", self.dim(), s.dim())?;
            }
        }
        Ok(())
    }

    pub fn predict_latent(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim("design dimension", self.dim(), x.len())?;
        let v = self.modes.iter().map(|m| m.predict(x)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }

    pub fn predict_field(&self, x: &[f64]) -> Result<FieldPrediction> {
        let latent = self.predict_latent(x)?;
        let extrapolated = !self.input_box.contains(x);
        if extrapolated {
            log::warn!("design lies outside the training box; prediction is an extrapolation");
        }
        let field = self.basis.mean_field() + self.basis.modes() * &latent;
        Ok(FieldPrediction {
            field,
            latent,
            extrapolated,
        })
    }

    /// Predictions for every row; returns fields (one per column), latent
    /// coordinates and the rows that were extrapolated.
    pub fn predict_batch(&self, designs: &DesignMatrix, exec: Exec) -> Result<(SnapshotMatrix, LatentSet, Vec<usize>)> {
        check_dim("design dimension", self.dim(), designs.dim())?;
        let preds = try_map_range(exec, designs.len(), |i| self.predict_field(&designs.row(i)))?;
        let n = preds.len();
        let mut fields = DMatrix::zeros(self.basis.field_dim(), n);
        let mut latent = DMatrix::zeros(self.k(), n);
        let mut extrapolated = Vec::new();
        for (i, p) in preds.into_iter().enumerate() {
            fields.set_column(i, &p.field);
            latent.set_column(i, &p.latent);
            if p.extrapolated {
                extrapolated.push(i);
            }
        }
        Ok((
            SnapshotMatrix::new(fields, self.basis.fidelity)?,
            LatentSet::new(latent, self.basis.id())?,
            extrapolated,
        ))
    }
}

fn input_box(x: &DesignMatrix) -> Bounds {
    x.bounds().cloned().unwrap_or_else(|| x.bounding_box())
}

fn check_pairing(snaps: &SnapshotMatrix, designs: &DesignMatrix, what: &'static str) -> Result<()> {
    check_dim(what, designs.len(), snaps.n_samples())
}

fn check_partition(part: &LinkedPartition, x_hf: &DesignMatrix, x_lf: &DesignMatrix) -> Result<()> {
    check_dim("linked count", x_hf.len(), part.n_linked)?;
    check_dim("LF design count", x_lf.len(), part.n_total_lf)?;
    check_dim("linked index count", part.n_linked, part.linked_indices.len())?;
    for (i, &j) in part.linked_indices.iter().enumerate() {
        if j >= x_lf.len() || x_hf.row(i) != x_lf.row(j) {
            return Err(Error::Data(format!("HF design row {i} does not match LF design row {j}")));
        }
    }
    Ok(())
}

struct Reduced {
    hf_basis: PodBasis,
    h: LatentSet,
    g: LatentSet,
    map: AlignmentMap,
    warnings: Vec<String>,
}

/// POD of both fidelities plus Procrustes alignment of all LF coordinates.
fn reduce_and_align(
    y: &SnapshotMatrix,
    z: &SnapshotMatrix,
    part: &LinkedPartition,
    cfg: &RomConfig,
) -> Result<Reduced> {
    let mut pod = PodOptions::with_ric(cfg.ric);
    pod.path = cfg.pod_path;
    let hf_basis = fit_pod_with(y, &pod)?;
    let k = hf_basis.k();
    pod.fixed_k = Some(k);
    let lf_basis = fit_pod_with(z, &pod)?;
    let h = project(&hf_basis, y)?;
    let s = project(&lf_basis, z)?;
    let map = procrustes_align(&h, &s.select_samples(&part.linked_indices))?;
    let mut warnings = Vec::new();
    if map.underdetermined {
        warnings.push(format!(
            "alignment underdetermined: {} linked samples for {k} latent dimensions",
            part.n_linked
        ));
    }
    let g = apply_alignment(&map, &s)?;
    Ok(Reduced {
        hf_basis,
        h,
        g,
        map,
        warnings,
    })
}

fn mode_options(cfg: &RomConfig, i: usize) -> (SubspaceOptions, KrigingOptions) {
    let mut s = cfg.subspace.clone();
    s.seed = derive_seed(cfg.seed, 2 * i as u64);
    let mut k = cfg.kriging.clone();
    k.seed = derive_seed(cfg.seed, 2 * i as u64 + 1);
    (s, k)
}

fn collect_mode_warnings(modes: &[ModeModel], warnings: &mut Vec<String>) {
    for (i, m) in modes.iter().enumerate() {
        if let Some(s) = &m.subspace {
            for w in &s.warnings {
                warnings.push(format!("mode {i}: {w}"));
            }
            if s.no_gap {
                warnings.push(format!("mode {i}: no clear gap in the gradient covariance spectrum"));
            }
        }
        if let Regressor::Hierarchical(hk) = &m.regressor {
            if hk.fallback {
                warnings.push(format!("mode {i}: LF Kriging degenerate; ordinary Kriging on HF data used"));
            }
        }
    }
}

pub fn train_mf_pcas(
    y: &SnapshotMatrix,
    z: &SnapshotMatrix,
    x_hf: &DesignMatrix,
    x_lf: &DesignMatrix,
    part: &LinkedPartition,
    cfg: &RomConfig,
    exec: Exec,
) -> Result<RomModel> {
    train_multi_fidelity(Variant::MfPcas, y, z, x_hf, x_lf, part, cfg, exec)
}

pub fn train_ma_rom(
    y: &SnapshotMatrix,
    z: &SnapshotMatrix,
    x_hf: &DesignMatrix,
    x_lf: &DesignMatrix,
    part: &LinkedPartition,
    cfg: &RomConfig,
    exec: Exec,
) -> Result<RomModel> {
    train_multi_fidelity(Variant::MaRom, y, z, x_hf, x_lf, part, cfg, exec)
}

#[allow(clippy::too_many_arguments)]
fn train_multi_fidelity(
    variant: Variant,
    y: &SnapshotMatrix,
    z: &SnapshotMatrix,
    x_hf: &DesignMatrix,
    x_lf: &DesignMatrix,
    part: &LinkedPartition,
    cfg: &RomConfig,
    exec: Exec,
) -> Result<RomModel> {
    check_pairing(y, x_hf, "HF snapshot count")?;
    check_pairing(z, x_lf, "LF snapshot count")?;
    check_partition(part, x_hf, x_lf)?;
    let red = reduce_and_align(y, z, part, cfg)?;
    let bounds = input_box(x_lf);
    let k = red.hf_basis.k();
    let modes = try_map_range(exec, k, |i| {
        let (sub_opts, krig_opts) = mode_options(cfg, i);
        let h = red.h.mode(i);
        let g = red.g.mode(i);
        match variant {
            Variant::MfPcas => {
                let surrogate = fit_mf_surrogate(x_hf, &h, x_lf, &g)?;
                let sub = subspace_from_surrogate(&surrogate, &bounds, &sub_opts, exec)?;
                let hk = fit_hk(&sub.reduce(x_hf.values()), &h, &sub.reduce(x_lf.values()), &g, &krig_opts)?;
                Ok::<_, Error>(ModeModel::new(Some(sub), Regressor::Hierarchical(hk)))
            }
            _ => {
                let hk = fit_hk(x_hf.values(), &h, x_lf.values(), &g, &krig_opts)?;
                Ok(ModeModel::new(None, Regressor::Hierarchical(hk)))
            }
        }
    })?;
    let mut warnings = red.warnings;
    collect_mode_warnings(&modes, &mut warnings);
    let model = RomModel {
        variant,
        basis: red.hf_basis,
        alignment: Some(red.map),
        modes,
        input_box: bounds,
        provenance: Provenance {
            m1: x_hf.len(),
            m2: x_lf.len(),
            tau: Some(part.tau()),
            ric: cfg.ric,
            seed: cfg.seed,
            d: x_hf.dim(),
        },
        warnings,
    };
    model.check()?;
    Ok(model)
}

pub fn train_pcas(y: &SnapshotMatrix, x_hf: &DesignMatrix, cfg: &RomConfig, exec: Exec) -> Result<RomModel> {
    check_pairing(y, x_hf, "HF snapshot count")?;
    let mut pod = PodOptions::with_ric(cfg.ric);
    pod.path = cfg.pod_path;
    let basis = fit_pod_with(y, &pod)?;
    let h = project(&basis, y)?;
    let bounds = input_box(x_hf);
    let modes = try_map_range(exec, basis.k(), |i| {
        let (sub_opts, krig_opts) = mode_options(cfg, i);
        let hi = h.mode(i);
        let surrogate = fit_sf_surrogate(x_hf, &hi, cfg.subspace.linear_only)?;
        let sub = subspace_from_surrogate(&surrogate, &bounds, &sub_opts, exec)?;
        let ok = fit_kriging(&sub.reduce(x_hf.values()), &hi, &krig_opts)?;
        Ok::<_, Error>(ModeModel::new(Some(sub), Regressor::Ordinary(ok)))
    })?;
    let mut warnings = Vec::new();
    collect_mode_warnings(&modes, &mut warnings);
    let model = RomModel {
        variant: Variant::Pcas,
        basis,
        alignment: None,
        modes,
        input_box: bounds,
        provenance: Provenance {
            m1: x_hf.len(),
            m2: 0,
            tau: None,
            ric: cfg.ric,
            seed: cfg.seed,
            d: x_hf.dim(),
        },
        warnings,
    };
    model.check()?;
    Ok(model)
}

/// Dispatch on `variant`; LF data is ignored for PCAS.
#[allow(clippy::too_many_arguments)]
pub fn train(
    variant: Variant,
    y: &SnapshotMatrix,
    z: Option<&SnapshotMatrix>,
    x_hf: &DesignMatrix,
    x_lf: Option<&DesignMatrix>,
    part: Option<&LinkedPartition>,
    cfg: &RomConfig,
    exec: Exec,
) -> Result<RomModel> {
    match (variant, z, x_lf, part) {
        (Variant::Pcas, ..) => train_pcas(y, x_hf, cfg, exec),
        (v, Some(z), Some(x_lf), Some(part)) => train_multi_fidelity(v, y, z, x_hf, x_lf, part, cfg, exec),
        (v, ..) => Err(Error::invalid(format!("{v} needs LF designs and snapshots"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{evaluate_fields, make_linked_partition, sample_doe, sample_uniform, Fidelity, ProblemParams, SyntheticProblemSpec};
    use crate::pod::reconstruction_rms;

    struct Data {
        spec: SyntheticProblemSpec,
        x_hf: DesignMatrix,
        x_lf: DesignMatrix,
        y: SnapshotMatrix,
        z: SnapshotMatrix,
        part: LinkedPartition,
    }

    fn data(p: ProblemParams, m1: usize, m2: usize, seed: u64) -> Data {
        let spec = SyntheticProblemSpec::generate(&p).unwrap();
        let x_lf = sample_doe(&spec.bounds, m2, seed).unwrap();
        let x_hf = x_lf.select_rows(&(0..m1).collect::<Vec<_>>());
        let y = evaluate_fields(&spec, &x_hf, Fidelity::Hf).unwrap();
        let z = evaluate_fields(&spec, &x_lf, Fidelity::Lf).unwrap();
        let part = make_linked_partition(&x_hf, &x_lf).unwrap();
        Data { spec, x_hf, x_lf, y, z, part }
    }

    fn small(d: usize, k: usize) -> ProblemParams {
        let mut p = ProblemParams::new(d, k);
        p.mesh_hf = 60;
        p.mesh_lf = 30;
        if k == 1 {
            p.lf_mode_drop = 0;
        }
        p
    }

    fn rel_rms(model: &RomModel, x: &DesignMatrix, truth: &SnapshotMatrix) -> f64 {
        let (pred, _, _) = model.predict_batch(x, Exec::Parallel).unwrap();
        (pred.values() - truth.values()).norm() / truth.values().norm()
    }

    #[test]
    fn mf_pcas_structure_and_generalization() {
        let mut p = small(20, 3);
        p.mesh_hf = 100;
        let dt = data(p, 30, 120, 3);
        let cfg = RomConfig::default();
        let m = train_mf_pcas(&dt.y, &dt.z, &dt.x_hf, &dt.x_lf, &dt.part, &cfg, Exec::Parallel).unwrap();
        assert_eq!(m.modes.len(), m.k());
        assert!(m.modes.iter().all(|md| md.subspace.is_some()));
        assert_eq!(m.provenance.tau, Some(4.0));
        let xv = sample_uniform(&dt.spec.bounds, 40, 77).unwrap();
        let yv = evaluate_fields(&dt.spec, &xv, Fidelity::Hf).unwrap();
        assert!(rel_rms(&m, &dt.x_hf, &dt.y) < rel_rms(&m, &xv, &yv));
    }

    #[test]
    fn self_consistent_with_identical_fidelities() {
        let mut p = small(3, 2);
        p.mesh_lf = 59;
        p.mesh_hf = 60;
        p.lf_bias = Some(vec![0.0, 0.0]);
        p.lf_mode_drop = 0;
        let spec = SyntheticProblemSpec::generate(&p).unwrap();
        // LF evaluated on the HF mesh: same fields
        let x_lf = sample_doe(&spec.bounds, 25, 1).unwrap();
        let x_hf = x_lf.select_rows(&(0..24).collect::<Vec<_>>());
        let y = evaluate_fields(&spec, &x_hf, Fidelity::Hf).unwrap();
        let mut z = evaluate_fields(&spec, &x_lf, Fidelity::Hf).unwrap();
        z.fidelity = Fidelity::Lf;
        let part = make_linked_partition(&x_hf, &x_lf).unwrap();
        // keep every input direction so the regressors interpolate the training sites
        let mut cfg = RomConfig::default();
        cfg.subspace.energy_threshold = 1.0;
        let m = train_mf_pcas(&y, &z, &x_hf, &x_lf, &part, &cfg, Exec::Parallel).unwrap();
        assert!(m.modes.iter().all(|md| md.subspace.as_ref().unwrap().l == 3));
        let (pred, _, _) = m.predict_batch(&x_hf, Exec::Sequential).unwrap();
        let pod_err = reconstruction_rms(&m.basis, &y).unwrap() * (y.n_samples() as f64).sqrt();
        let err = (pred.values() - y.values()).norm();
        assert!(err <= pod_err + 1e-4 * y.values().norm(), "{err} vs {pod_err}");
    }

    #[test]
    fn minimal_hf_set() {
        let dt = data(small(4, 2), 2, 10, 5);
        let m = train_mf_pcas(&dt.y, &dt.z, &dt.x_hf, &dt.x_lf, &dt.part, &RomConfig::default(), Exec::Sequential).unwrap();
        assert_eq!(m.k(), 1);
        assert!(!m.warnings.is_empty());
        assert!(m.predict_field(&dt.x_lf.row(5)).unwrap().field.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn pcas_and_ma_rom_train() {
        let dt = data(small(5, 2), 12, 36, 2);
        let cfg = RomConfig::default();
        let pcas = train_pcas(&dt.y, &dt.x_hf, &cfg, Exec::Parallel).unwrap();
        assert!(matches!(pcas.modes[0].regressor, Regressor::Ordinary(_)));
        assert_eq!(pcas.provenance.tau, None);
        let ma = train_ma_rom(&dt.y, &dt.z, &dt.x_hf, &dt.x_lf, &dt.part, &cfg, Exec::Parallel).unwrap();
        assert!(ma.modes.iter().all(|m| m.subspace.is_none()));
        let again = train_ma_rom(&dt.y, &dt.z, &dt.x_hf, &dt.x_lf, &dt.part, &cfg, Exec::Sequential).unwrap();
        assert_eq!(ma, again);
        let mut lin = cfg.clone();
        lin.subspace.linear_only = true;
        assert!(train_pcas(&dt.y, &dt.x_hf, &lin, Exec::Parallel).is_ok());
    }

    #[test]
    fn rank_one_fields_use_one_mode() {
        let dt = data(small(3, 1), 8, 20, 1);
        let m = train_pcas(&dt.y, &dt.x_hf, &RomConfig::default(), Exec::Parallel).unwrap();
        assert_eq!(m.k(), 1);
        assert_eq!(m.modes.len(), 1);
    }

    #[test]
    fn single_mode_prediction_by_hand() {
        let dt = data(small(3, 1), 8, 20, 1);
        let m = train_pcas(&dt.y, &dt.x_hf, &RomConfig::default(), Exec::Parallel).unwrap();
        let x = [0.2, -0.4, 0.1];
        let w = m.modes[0].subspace.as_ref().unwrap().projector();
        let xi: Vec<f64> = (0..w.ncols()).map(|c| w.column(c).iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
        let h = m.modes[0].regressor.predict(&xi).unwrap();
        let want = m.basis.mean_field() + m.basis.modes().column(0) * h;
        let got = m.predict_field(&x).unwrap();
        assert!((got.field - want).amax() < 1e-12);
        assert!(!got.extrapolated);
        assert!(m.predict_field(&[2.0, 0.0, 0.0]).unwrap().extrapolated);
    }

    #[test]
    fn mismatched_partition_rejected() {
        let dt = data(small(3, 2), 5, 15, 1);
        let mut bad = dt.part.clone();
        bad.linked_indices.swap(0, 1);
        assert!(matches!(
            train_mf_pcas(&dt.y, &dt.z, &dt.x_hf, &dt.x_lf, &bad, &RomConfig::default(), Exec::Sequential),
            Err(Error::Data(_))
        ));
    }
}
