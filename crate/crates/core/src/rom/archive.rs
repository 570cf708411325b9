//! Model archive: everything `predict` needs, in one file.
//!
//! Layout: the 6-byte magic `MFRMv1`, a u64 LE manifest length, the
//! manifest as UTF-8 JSON, then a data section of f64 LE blocks. The manifest
//! records structure and integers; every floating-point value lives in the
//! data section so a loaded model predicts bit-for-bit like the saved one.
//! Block offsets are relative to the start of the data section.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ModeModel, Provenance, Regressor, RomModel, Variant};
use crate::alignment::AlignmentMap;
use crate::dataset::format::atomic_write;
use crate::dataset::{Bounds, Fidelity};
use crate::error::{check_dim, Error, Result};
use crate::kriging::{HierarchicalKriging, KrigingModel};
use crate::pod::PodBasis;
use crate::subspace::ActiveSubspace;

pub const ARCHIVE_MAGIC: &[u8; 6] = b"MFRMv1";
const PREFIX_LEN: usize = 14;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Block {
    offset: u64,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct BasisRec {
    fidelity: Fidelity,
    modes: Block,
    eigenvalues: Block,
    mean: Block,
    ric_achieved: Block,
}

#[derive(Serialize, Deserialize)]
struct AlignRec {
    rotation: Block,
    mu_lf: Block,
    mu_hf: Block,
    singular_values: Block,
    /// scale, residual
    scalars: Block,
    underdetermined: bool,
}

#[derive(Serialize, Deserialize)]
struct SubspaceRec {
    eigenvalues: Block,
    eigenvectors: Block,
    l: usize,
    energy_threshold: Block,
    no_gap: bool,
    n_mc: usize,
    seed: u64,
    warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct KrigingRec {
    sites: Block,
    y: Block,
    trend: Block,
    lengthscales: Block,
    weights: Block,
    /// nugget, beta, process variance, log-likelihood
    scalars: Block,
    constant: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RegressorRec {
    Ordinary { model: KrigingRec },
    Hierarchical { lf: KrigingRec, hf: KrigingRec, fallback: bool },
}

#[derive(Serialize, Deserialize)]
struct ModeRec {
    subspace: Option<SubspaceRec>,
    regressor: RegressorRec,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    variant: Variant,
    provenance: Provenance,
    warnings: Vec<String>,
    basis: BasisRec,
    alignment: Option<AlignRec>,
    /// Row 0 lower bounds, row 1 upper bounds.
    input_box: Block,
    modes: Vec<ModeRec>,
    data_len: u64,
}

#[derive(Default)]
struct Writer {
    data: Vec<u8>,
}

impl Writer {
    fn put(&mut self, m: &DMatrix<f64>) -> Block {
        let b = Block {
            offset: self.data.len() as u64,
            rows: m.nrows(),
            cols: m.ncols(),
        };
        for v in m.iter() {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    fn put_slice(&mut self, v: &[f64]) -> Block {
        self.put(&DMatrix::from_column_slice(v.len(), 1, v))
    }

    fn kriging(&mut self, m: &KrigingModel) -> KrigingRec {
        KrigingRec {
            sites: self.put(m.sites()),
            y: self.put_slice(m.targets().as_slice()),
            trend: self.put_slice(m.trend_basis().as_slice()),
            lengthscales: self.put_slice(m.lengthscales().as_slice()),
            weights: self.put_slice(m.weights().as_slice()),
            scalars: self.put_slice(&[m.nugget(), m.beta(), m.process_variance(), m.log_likelihood()]),
            constant: m.is_constant(),
        }
    }
}

struct Reader<'a> {
    path: &'a Path,
    data: &'a [u8],
    base: u64,
}

impl Reader<'_> {
    fn err(&self, offset: u64, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset,
            msg: msg.into(),
        }
    }

    fn get(&self, b: Block) -> Result<DMatrix<f64>> {
        let at = self.base + b.offset;
        let n = b
            .rows
            .checked_mul(b.cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| self.err(at, "block size overflows"))?;
        let start = usize::try_from(b.offset).map_err(|_| self.err(at, "block offset out of range"))?;
        let end = start
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| self.err(at, format!("block of {} × {} runs past the end of the data", b.rows, b.cols)))?;
        let vals = self.data[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        Ok(DMatrix::from_iterator(b.rows, b.cols, vals))
    }

    fn vector(&self, b: Block) -> Result<DVector<f64>> {
        if b.cols != 1 {
            return Err(self.err(self.base + b.offset, "expected a column block"));
        }
        Ok(self.get(b)?.column(0).into_owned())
    }

    fn scalars<const N: usize>(&self, b: Block) -> Result<[f64; N]> {
        let v = self.vector(b)?;
        v.as_slice()
            .try_into()
            .map_err(|_| self.err(self.base + b.offset, format!("expected {N} scalars, found {}", v.len())))
    }

    fn kriging(&self, r: &KrigingRec) -> Result<KrigingModel> {
        let [nugget, beta, variance, ll] = self.scalars::<4>(r.scalars)?;
        KrigingModel::from_parts(
            self.get(r.sites)?,
            self.vector(r.y)?,
            self.vector(r.trend)?,
            self.vector(r.lengthscales)?,
            nugget,
            beta,
            variance,
            self.vector(r.weights)?,
            ll,
            r.constant,
        )
    }
}

/// Serialize a trained model.
pub fn to_bytes(model: &RomModel) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    let b = &model.basis;
    let basis = BasisRec {
        fidelity: b.fidelity,
        modes: w.put(b.modes()),
        eigenvalues: w.put_slice(b.eigenvalues()),
        mean: w.put_slice(b.mean_field().as_slice()),
        ric_achieved: w.put_slice(&[b.ric_achieved()]),
    };
    let alignment = model.alignment.as_ref().map(|a| AlignRec {
        rotation: w.put(&a.rotation),
        mu_lf: w.put_slice(a.mu_lf.as_slice()),
        mu_hf: w.put_slice(a.mu_hf.as_slice()),
        singular_values: w.put_slice(&a.singular_values),
        scalars: w.put_slice(&[a.scale, a.residual]),
        underdetermined: a.underdetermined,
    });
    let d = model.dim();
    let input_box = w.put(&DMatrix::from_fn(2, d, |r, c| {
        if r == 0 {
            model.input_box.lo[c]
        } else {
            model.input_box.hi[c]
        }
    }));
    let mut modes = Vec::with_capacity(model.modes.len());
    for m in &model.modes {
        let subspace = m.subspace.as_ref().map(|s| SubspaceRec {
            eigenvalues: w.put_slice(&s.eigenvalues),
            eigenvectors: w.put(&s.eigenvectors),
            l: s.l,
            energy_threshold: w.put_slice(&[s.energy_threshold]),
            no_gap: s.no_gap,
            n_mc: s.n_mc,
            seed: s.seed,
            warnings: s.warnings.clone(),
        });
        let regressor = match &m.regressor {
            Regressor::Ordinary(k) => RegressorRec::Ordinary { model: w.kriging(k) },
            Regressor::Hierarchical(hk) => RegressorRec::Hierarchical {
                lf: w.kriging(&hk.lf_model),
                hf: w.kriging(&hk.hf_model),
                fallback: hk.fallback,
            },
        };
        modes.push(ModeRec { subspace, regressor });
    }
    let manifest = Manifest {
        variant: model.variant,
        provenance: model.provenance.clone(),
        warnings: model.warnings.clone(),
        basis,
        alignment,
        input_box,
        modes,
        data_len: w.data.len() as u64,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + w.data.len());
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&w.data);
    Ok(out)
}

/// Decode an archive; `path` is only used in error messages.
pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<RomModel> {
    let fail = |offset: usize, msg: String| Error::Format {
        path: PathBuf::from(path),
        offset: offset as u64,
        msg,
    };
    if bytes.len() < PREFIX_LEN {
        return Err(fail(bytes.len(), format!("truncated header: {} of {PREFIX_LEN} bytes", bytes.len())));
    }
    if &bytes[..6] != ARCHIVE_MAGIC {
        return Err(fail(0, "not a model archive (bad magic)".into()));
    }
    let json_len = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
    let json_end = usize::try_from(json_len)
        .ok()
        .and_then(|n| n.checked_add(PREFIX_LEN))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| fail(bytes.len(), format!("truncated manifest: header declares {json_len} bytes")))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[PREFIX_LEN..json_end]).map_err(|e| {
        fail(PREFIX_LEN, format!("malformed manifest: {e}"))
    })?;
    let data = &bytes[json_end..];
    if (data.len() as u64) < manifest.data_len {
        return Err(fail(
            bytes.len(),
            format!("truncated data: {} of {} bytes", data.len(), manifest.data_len),
        ));
    }
    if (data.len() as u64) > manifest.data_len {
        return Err(fail(
            json_end + manifest.data_len as usize,
            "trailing bytes after the data section".into(),
        ));
    }
    let r = Reader {
        path,
        data,
        base: json_end as u64,
    };
    decode(&r, &manifest).map_err(|e| match e {
        Error::Format { .. } => e,
        other => Error::Data(format!("{}: inconsistent archive: {other}", path.display())),
    })
}

fn decode(r: &Reader<'_>, m: &Manifest) -> Result<RomModel> {
    let [ric_achieved] = r.scalars::<1>(m.basis.ric_achieved)?;
    let basis = PodBasis::from_parts(
        r.get(m.basis.modes)?,
        r.vector(m.basis.eigenvalues)?.as_slice().to_vec(),
        r.vector(m.basis.mean)?,
        ric_achieved,
        m.basis.fidelity,
    )?;
    let alignment = match &m.alignment {
        Some(a) => {
            let [scale, residual] = r.scalars::<2>(a.scalars)?;
            let mut map = AlignmentMap::from_parts(
                r.get(a.rotation)?,
                scale,
                r.vector(a.mu_lf)?,
                r.vector(a.mu_hf)?,
                r.vector(a.singular_values)?.as_slice().to_vec(),
                residual,
            )?;
            map.underdetermined = a.underdetermined;
            Some(map)
        }
        None => None,
    };
    let bx = r.get(m.input_box)?;
    check_dim("input box rows", 2, bx.nrows())?;
    let input_box = Bounds::new(bx.row(0).iter().copied().collect(), bx.row(1).iter().copied().collect())?;
    let d = input_box.dim();
    let mut modes = Vec::with_capacity(m.modes.len());
    for rec in &m.modes {
        let subspace = match &rec.subspace {
            Some(s) => {
                let eigenvectors = r.get(s.eigenvectors)?;
                check_dim("subspace eigenvector rows", d, eigenvectors.nrows())?;
                check_dim("subspace eigenvector columns", d, eigenvectors.ncols())?;
                if s.l == 0 || s.l > d {
                    return Err(Error::Data(format!("stored subspace dimension {} outside 1..={d}", s.l)));
                }
                let [energy_threshold] = r.scalars::<1>(s.energy_threshold)?;
                Some(ActiveSubspace {
                    eigenvalues: r.vector(s.eigenvalues)?.as_slice().to_vec(),
                    eigenvectors,
                    l: s.l,
                    energy_threshold,
                    no_gap: s.no_gap,
                    n_mc: s.n_mc,
                    seed: s.seed,
                    warnings: s.warnings.clone(),
                })
            }
            None => None,
        };
        let regressor = match &rec.regressor {
            RegressorRec::Ordinary { model } => Regressor::Ordinary(r.kriging(model)?),
            RegressorRec::Hierarchical { lf, hf, fallback } => Regressor::Hierarchical(HierarchicalKriging {
                lf_model: r.kriging(lf)?,
                hf_model: r.kriging(hf)?,
                fallback: *fallback,
            }),
        };
        let reduced = subspace.as_ref().map_or(d, |s| s.l);
        let reg_dim = match &regressor {
            Regressor::Ordinary(k) => k.dim(),
            Regressor::Hierarchical(hk) => {
                check_dim("LF Kriging dimension", reduced, hk.lf_model.dim())?;
                hk.dim()
            }
        };
        check_dim("Kriging input dimension", reduced, reg_dim)?;
        modes.push(ModeModel::new(subspace, regressor));
    }
    let model = RomModel {
        variant: m.variant,
        basis,
        alignment,
        modes,
        input_box,
        provenance: m.provenance.clone(),
        warnings: m.warnings.clone(),
    };
    model.check()?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &RomModel) -> Result<()> {
    atomic_write(path, &to_bytes(model)?)
}

pub fn load_model(path: &Path) -> Result<RomModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(path, &bytes)
}
