use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Global;
use crate::dataset::format::{atomic_write, read_designs, read_snapshots, write_designs, write_snapshots, Encoding};
use crate::dataset::{
    evaluate_fields, make_linked_partition, sample_doe, sample_uniform, Bounds, DesignMatrix, Fidelity, ProblemParams,
    SnapshotMatrix, SyntheticProblemSpec,
};
use crate::error::{Error, Result};
use crate::metrics::experiment::ExperimentConfig;
use crate::metrics::{evaluate, ErrorReport};
use crate::par::{derive_seed, Exec};
use crate::rom::archive::{load_model, save_model};
use crate::rom::{train as train_model, RomConfig, Variant};

const MANIFEST: &str = "manifest.json";

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))
}

fn config_or_default<T: DeserializeOwned + Default>(g: &Global) -> Result<T> {
    g.config.as_deref().map_or_else(|| Ok(T::default()), load_config)
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn extension(enc: Encoding) -> &'static str {
    match enc {
        Encoding::Binary => "bin",
        Encoding::Csv => "csv",
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

// ---------------------------------------------------------------- gen

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub problem: ProblemParams,
    pub m1: usize,
    pub tau: f64,
    /// Held-out designs and HF fields to write alongside the training data.
    pub n_validation: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            problem: ProblemParams::new(4, 2),
            m1: 10,
            tau: 4.0,
            n_validation: 0,
            seed: 0,
            out_dir: None,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k_true: Option<usize>,
    #[arg(long)]
    pub m1: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub mesh_hf: Option<usize>,
    #[arg(long)]
    pub mesh_lf: Option<usize>,
    #[arg(long)]
    pub lf_mode_drop: Option<usize>,
    /// Seed of the ridge directions.
    #[arg(long)]
    pub problem_seed: Option<u64>,
    #[arg(long)]
    pub n_val: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub role: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenManifest {
    pub problem: ProblemParams,
    pub bounds: Bounds,
    pub m1: usize,
    pub m2: usize,
    pub tau: f64,
    pub seed: u64,
    /// HF designs are the first `m1` LF designs.
    pub linked_prefix: bool,
    pub files: Vec<FileEntry>,
}

impl GenManifest {
    fn file(&self, role: &str) -> Option<&str> {
        self.files.iter().find(|f| f.role == role).map(|f| f.file.as_str())
    }
}

pub fn gen(g: &Global, a: &GenArgs) -> Result<()> {
    let mut cfg: GenConfig = config_or_default(g)?;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    set!(cfg.problem.d, a.d);
    set!(cfg.problem.k_true, a.k_true);
    set!(cfg.problem.mesh_hf, a.mesh_hf);
    set!(cfg.problem.mesh_lf, a.mesh_lf);
    set!(cfg.problem.lf_mode_drop, a.lf_mode_drop);
    set!(cfg.problem.seed, a.problem_seed);
    set!(cfg.m1, a.m1);
    set!(cfg.tau, a.tau);
    set!(cfg.n_validation, a.n_val);
    set!(cfg.seed, g.seed);
    if a.out_dir.is_some() {
        cfg.out_dir = a.out_dir.clone();
    }
    let dir = cfg.out_dir.clone().ok_or_else(|| Error::invalid("gen needs --out-dir"))?;
    if cfg.m1 < 1 || !(cfg.tau > 1.0 && cfg.tau.is_finite()) {
        return Err(Error::invalid(format!("need m1 >= 1 and τ > 1, got m1 = {}, τ = {}", cfg.m1, cfg.tau)));
    }
    let m2 = (cfg.tau * cfg.m1 as f64).round() as usize;
    if m2 <= cfg.m1 {
        return Err(Error::invalid(format!("τ = {} gives no unlinked LF designs for m1 = {}", cfg.tau, cfg.m1)));
    }
    let spec = SyntheticProblemSpec::generate(&cfg.problem)?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let enc = g.encoding();
    let ext = extension(enc);
    let x_lf = sample_doe(&spec.bounds, m2, cfg.seed)?;
    let x_hf = x_lf.select_rows(&(0..cfg.m1).collect::<Vec<_>>());
    let mut outputs: Vec<(&str, Output)> = vec![
        ("hf_designs", Output::Designs(x_hf.clone())),
        ("hf_snapshots", Output::Fields(evaluate_fields(&spec, &x_hf, Fidelity::Hf)?)),
        ("lf_designs", Output::Designs(x_lf.clone())),
        ("lf_snapshots", Output::Fields(evaluate_fields(&spec, &x_lf, Fidelity::Lf)?)),
    ];
    if cfg.n_validation > 0 {
        let x_val = sample_uniform(&spec.bounds, cfg.n_validation, derive_seed(cfg.seed, 1))?;
        let y_val = evaluate_fields(&spec, &x_val, Fidelity::Hf)?;
        outputs.push(("val_designs", Output::Designs(x_val)));
        outputs.push(("val_snapshots", Output::Fields(y_val)));
    }
    let mut files = Vec::new();
    for (role, out) in &outputs {
        let name = format!("{role}.{ext}");
        let path = dir.join(&name);
        let (rows, cols) = match out {
            Output::Designs(x) => {
                write_designs(&path, x, enc)?;
                (x.len(), x.dim())
            }
            Output::Fields(s) => {
                write_snapshots(&path, s, enc)?;
                (s.n_samples(), s.field_dim())
            }
        };
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        files.push(FileEntry {
            role: role.to_string(),
            file: name,
            rows,
            cols,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = GenManifest {
        problem: cfg.problem.clone(),
        bounds: spec.bounds.clone(),
        m1: cfg.m1,
        m2,
        tau: m2 as f64 / cfg.m1 as f64,
        seed: cfg.seed,
        linked_prefix: true,
        files,
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}

enum Output {
    Designs(DesignMatrix),
    Fields(SnapshotMatrix),
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Option<Variant>,
    /// Directory written by `gen`; supplies default file paths and bounds.
    pub data: Option<PathBuf>,
    pub hf_designs: Option<PathBuf>,
    pub hf_snapshots: Option<PathBuf>,
    pub lf_designs: Option<PathBuf>,
    pub lf_snapshots: Option<PathBuf>,
    /// Use only the first `τ·m1` LF samples (linked ones always kept).
    pub tau: Option<f64>,
    pub out: Option<PathBuf>,
    pub rom: RomConfig,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// mf_pcas, pcas or ma_rom.
    #[arg(long)]
    pub method: Option<Variant>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub hf_designs: Option<PathBuf>,
    #[arg(long)]
    pub hf_snapshots: Option<PathBuf>,
    #[arg(long)]
    pub lf_designs: Option<PathBuf>,
    #[arg(long)]
    pub lf_snapshots: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub ric: Option<f64>,
    #[arg(long)]
    pub energy_threshold: Option<f64>,
    #[arg(long)]
    pub l_max: Option<usize>,
    #[arg(long)]
    pub n_mc: Option<usize>,
    #[arg(long)]
    pub n_starts: Option<usize>,
    /// Linear gradient surrogate for PCAS.
    #[arg(long)]
    pub linear_only: bool,
}

/// Data directory contents: manifest (when present) and per-role paths.
struct DataDir {
    dir: PathBuf,
    manifest: Option<GenManifest>,
}

impl DataDir {
    fn open(dir: &Path) -> Result<Self> {
        let mpath = dir.join(MANIFEST);
        let manifest = if mpath.exists() {
            let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", mpath.display())))?)
        } else {
            None
        };
        Ok(DataDir {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    fn path(&self, role: &str) -> PathBuf {
        if let Some(f) = self.manifest.as_ref().and_then(|m| m.file(role)) {
            return self.dir.join(f);
        }
        let bin = self.dir.join(format!("{role}.bin"));
        if bin.exists() {
            bin
        } else {
            self.dir.join(format!("{role}.csv"))
        }
    }
}

fn required(p: Option<PathBuf>, dd: Option<&DataDir>, role: &str) -> Result<PathBuf> {
    p.or_else(|| dd.map(|d| d.path(role)))
        .ok_or_else(|| Error::invalid(format!("missing --{} (or --data)", role.replace('_', "-"))))
}

fn load_designs(path: &Path, bounds: Option<&Bounds>) -> Result<DesignMatrix> {
    let x = read_designs(path)?.ok_or_else(|| Error::Data(format!("{}: design file is empty", path.display())))?;
    match bounds {
        Some(b) if b.dim() == x.dim() && (0..x.len()).all(|i| b.contains(&x.row(i))) => x.with_bounds(b.clone()),
        _ => Ok(x),
    }
}

fn check_pair(designs: &DesignMatrix, snaps: &SnapshotMatrix, dpath: &Path, spath: &Path) -> Result<()> {
    if designs.len() != snaps.n_samples() {
        return Err(Error::Data(format!(
            "{} has {} samples but {} has {} designs",
            spath.display(),
            snaps.n_samples(),
            dpath.display(),
            designs.len()
        )));
    }
    Ok(())
}

pub fn train(g: &Global, a: &TrainArgs, exec: Exec) -> Result<()> {
    let mut cfg: TrainConfig = config_or_default(g)?;
    let method = a.method.or(cfg.method).unwrap_or(Variant::MfPcas);
    let tau = a.tau.or(cfg.tau);
    if let Some(r) = a.ric {
        cfg.rom.ric = r;
    }
    if let Some(t) = a.energy_threshold {
        cfg.rom.subspace.energy_threshold = t;
    }
    if a.l_max.is_some() {
        cfg.rom.subspace.l_max = a.l_max;
    }
    if a.n_mc.is_some() {
        cfg.rom.subspace.n_mc = a.n_mc;
    }
    if let Some(n) = a.n_starts {
        cfg.rom.kriging.n_starts = n;
    }
    if a.linear_only {
        cfg.rom.subspace.linear_only = true;
    }
    if let Some(s) = g.seed {
        cfg.rom.seed = s;
    }
    if !(cfg.rom.ric > 0.0 && cfg.rom.ric <= 1.0) {
        return Err(Error::invalid(format!("ric must be in (0, 1], got {}", cfg.rom.ric)));
    }
    let out = a.out.clone().or(cfg.out.clone()).ok_or_else(|| Error::invalid("train needs --out"))?;
    let dd = a.data.clone().or(cfg.data.clone()).map(|d| DataDir::open(&d)).transpose()?;
    let bounds = dd.as_ref().and_then(|d| d.manifest.as_ref()).map(|m| m.bounds.clone());

    let hf_d = required(a.hf_designs.clone().or(cfg.hf_designs.clone()), dd.as_ref(), "hf_designs")?;
    let hf_s = required(a.hf_snapshots.clone().or(cfg.hf_snapshots.clone()), dd.as_ref(), "hf_snapshots")?;
    let x_hf = load_designs(&hf_d, bounds.as_ref())?;
    let y = read_snapshots(&hf_s, Fidelity::Hf)?;
    check_pair(&x_hf, &y, &hf_d, &hf_s)?;

    let model = if method == Variant::Pcas {
        if tau.is_some() {
            log::warn!("τ ignored for PCAS");
        }
        train_model(method, &y, None, &x_hf, None, None, &cfg.rom, exec)?
    } else {
        let lf_d = required(a.lf_designs.clone().or(cfg.lf_designs.clone()), dd.as_ref(), "lf_designs")?;
        let lf_s = required(a.lf_snapshots.clone().or(cfg.lf_snapshots.clone()), dd.as_ref(), "lf_snapshots")?;
        let mut x_lf = load_designs(&lf_d, bounds.as_ref())?;
        let mut z = read_snapshots(&lf_s, Fidelity::Lf)?;
        check_pair(&x_lf, &z, &lf_d, &lf_s)?;
        if x_lf.dim() != x_hf.dim() {
            return Err(Error::Data(format!(
                "{} has dimension {} but {} has {}",
                lf_d.display(),
                x_lf.dim(),
                hf_d.display(),
                x_hf.dim()
            )));
        }
        let mut part = make_linked_partition(&x_hf, &x_lf)?;
        if let Some(t) = tau {
            let keep = tau_subset(&part, x_hf.len(), t)?;
            x_lf = x_lf.select_rows(&keep);
            z = z.select_samples(&keep);
            part = make_linked_partition(&x_hf, &x_lf)?;
        }
        train_model(method, &y, Some(&z), &x_hf, Some(&x_lf), Some(&part), &cfg.rom, exec)?
    };
    for w in &model.warnings {
        log::warn!("{w}");
    }
    save_model(&out, &model)?;
    log::info!("wrote {} model with k = {} to {}", model.variant, model.k(), out.display());
    Ok(())
}

/// LF rows kept for ratio `tau`: every linked row plus the first unlinked
/// rows, in file order.
fn tau_subset(part: &crate::dataset::LinkedPartition, m1: usize, tau: f64) -> Result<Vec<usize>> {
    if !(tau > 1.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("τ must be > 1, got {tau}")));
    }
    let m2 = (tau * m1 as f64).round() as usize;
    if m2 > part.n_total_lf {
        return Err(Error::invalid(format!(
            "τ = {tau} needs {m2} LF samples but only {} are available",
            part.n_total_lf
        )));
    }
    if m2 <= m1 {
        return Err(Error::invalid(format!("τ = {tau} leaves no unlinked LF samples")));
    }
    let mut keep: Vec<usize> = part.linked_indices.clone();
    keep.extend(part.unlinked_indices().into_iter().take(m2 - m1));
    keep.sort_unstable();
    Ok(keep)
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    #[arg(long, short)]
    pub designs: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictSidecar {
    pub n: usize,
    pub field_dim: usize,
    pub extrapolated: Vec<usize>,
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn predict(g: &Global, a: &PredictArgs, exec: Exec) -> Result<()> {
    let model = load_model(&a.model)?;
    let p = model.basis.field_dim();
    let (fields, extrapolated) = match read_designs(&a.designs)? {
        None => (SnapshotMatrix::new(nalgebra::DMatrix::zeros(p, 0), Fidelity::Hf)?, Vec::new()),
        Some(x) => {
            if x.dim() != model.dim() {
                return Err(Error::Data(format!(
                    "{} has dimension {} but the model expects {}",
                    a.designs.display(),
                    x.dim(),
                    model.dim()
                )));
            }
            let (f, _, ex) = model.predict_batch(&x, exec)?;
            (f, ex)
        }
    };
    if !extrapolated.is_empty() {
        log::warn!("{} design(s) outside the training box; see the sidecar", extrapolated.len());
    }
    write_snapshots(&a.out, &fields, g.encoding())?;
    write_json(
        &sidecar_path(&a.out),
        &PredictSidecar {
            n: fields.n_samples(),
            field_dim: p,
            extrapolated,
        },
    )
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub model: Option<PathBuf>,
    pub designs: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, short)]
    pub model: Option<PathBuf>,
    #[arg(long, short)]
    pub designs: Option<PathBuf>,
    #[arg(long, short)]
    pub snapshots: Option<PathBuf>,
    /// Report file (JSON, or CSV with --csv).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn report_csv(r: &ErrorReport) -> String {
    let mut s = format!("quantity,value\nn_v,{}\ne_total,{}\ne_rc,{}\ne_rg,{}\n", r.n_v, r.e_total, r.e_rc, r.e_rg);
    for (j, e) in r.per_mode.iter().enumerate() {
        s.push_str(&format!("mode_{},{e}\n", j + 1));
    }
    s
}

pub fn eval(g: &Global, a: &EvalArgs, exec: Exec) -> Result<()> {
    let cfg: EvalConfig = config_or_default(g)?;
    let model_path = a.model.clone().or(cfg.model).ok_or_else(|| Error::invalid("eval needs --model"))?;
    let dpath = a.designs.clone().or(cfg.designs).ok_or_else(|| Error::invalid("eval needs --designs"))?;
    let spath = a.snapshots.clone().or(cfg.snapshots).ok_or_else(|| Error::invalid("eval needs --snapshots"))?;
    let out = a.out.clone().or(cfg.out);
    let model = load_model(&model_path)?;
    let x = read_designs(&dpath)?.ok_or_else(|| Error::Data("empty validation set".into()))?;
    let truth = read_snapshots(&spath, Fidelity::Hf)?;
    check_pair(&x, &truth, &dpath, &spath)?;
    if truth.field_dim() != model.basis.field_dim() {
        return Err(Error::Data(format!(
            "{} has field length {} but the model predicts {}",
            spath.display(),
            truth.field_dim(),
            model.basis.field_dim()
        )));
    }
    if x.dim() != model.dim() {
        return Err(Error::Data(format!(
            "{} has dimension {} but the model expects {}",
            dpath.display(),
            x.dim(),
            model.dim()
        )));
    }
    let report = evaluate(&model, &x, &truth, exec)?;
    println!("{:<10} {:>14}", "quantity", "value");
    println!("{:<10} {:>14}", "n_v", report.n_v);
    for (name, v) in [("e_total", report.e_total), ("e_rc", report.e_rc), ("e_rg", report.e_rg)] {
        println!("{name:<10} {v:>14.6e}");
    }
    for (j, e) in report.per_mode.iter().enumerate() {
        println!("{:<10} {e:>14.6e}", format!("mode_{}", j + 1));
    }
    if let Some(path) = out {
        if g.csv {
            atomic_write(&path, report_csv(&report).as_bytes())?;
        } else {
            write_json(&path, &report)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k_true: Option<usize>,
    /// Comma-separated HF sample counts.
    #[arg(long, value_delimiter = ',')]
    pub m1: Vec<usize>,
    /// Comma-separated multi-fidelity ratios.
    #[arg(long, value_delimiter = ',')]
    pub tau: Vec<f64>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Variant>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
}

pub fn sweep(g: &Global, a: &SweepArgs, exec: Exec) -> Result<()> {
    let mut cfg: ExperimentConfig = match &g.config {
        Some(p) => load_config(p)?,
        None => {
            let (d, k) = a
                .d
                .zip(a.k_true)
                .ok_or_else(|| Error::invalid("sweep needs --config or both --d and --k-true"))?;
            ExperimentConfig::new(ProblemParams::new(d, k), Vec::new(), Vec::new())
        }
    };
    if let Some(d) = a.d {
        cfg.problem.d = d;
    }
    if let Some(k) = a.k_true {
        cfg.problem.k_true = k;
    }
    if !a.m1.is_empty() {
        cfg.m1_grid = a.m1.clone();
    }
    if !a.tau.is_empty() {
        cfg.tau_grid = a.tau.clone();
    }
    if !a.methods.is_empty() {
        cfg.methods = a.methods.clone();
    }
    if let Some(r) = a.replications {
        cfg.n_replications = r;
    }
    if let Some(n) = a.n_val {
        cfg.n_validation = n;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if cfg.methods.contains(&Variant::Pcas) && !cfg.tau_grid.is_empty() && cfg.methods.len() == 1 {
        log::warn!("τ ignored for PCAS");
    }
    let report = crate::metrics::run_experiment(&cfg, exec)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let mut json = report.to_json()?;
    json.push('\n');
    atomic_write(&a.out_dir.join("report.json"), json.as_bytes())?;
    atomic_write(&a.out_dir.join("runs.csv"), report.to_csv().as_bytes())?;
    for c in &report.cells {
        let tau = c.tau.map_or_else(|| "-".to_string(), |t| t.to_string());
        println!(
            "{:<8} m1={:<5} tau={:<5} median={:.6e} mean={:.6e} cost={:.3}",
            c.method, c.m1, tau, c.median_e_total, c.mean_e_total, c.cost_cpu_hr
        );
    }
    Ok(())
}
