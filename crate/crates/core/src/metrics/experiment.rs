//! Replicated train/evaluate sweeps over `(m1, τ)` grids on a synthetic problem.
//!
//! For replication `r` at HF size `m1` one Sobol design stream is drawn; the
//! LF set is its first `τ·m1` points and the HF set its first `m1`, so larger
//! τ nests smaller τ. PCAS does not use LF data and is trained once per
//! `(m1, r)`. All methods in a replication share the same validation set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{evaluate, training_cost, CostLedger, ErrorReport};
use crate::dataset::{
    evaluate_fields, make_linked_partition, sample_doe, sample_uniform, Fidelity, ProblemParams, SyntheticProblemSpec,
};
use crate::error::{Error, Result};
use crate::par::{derive_seed, try_map_range, Exec};
use crate::rom::{train, RomConfig, Variant};

const VALIDATION_STREAM: u64 = 0x5641_4c49;

fn default_methods() -> Vec<Variant> {
    vec![Variant::MfPcas, Variant::Pcas]
}
fn default_replications() -> usize {
    20
}
fn default_validation() -> usize {
    200
}
fn default_charge_linked() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemParams,
    pub m1_grid: Vec<usize>,
    /// Multi-fidelity ratios `m2 / m1`; each must exceed 1.
    pub tau_grid: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Variant>,
    #[serde(default = "default_replications")]
    pub n_replications: usize,
    #[serde(default = "default_validation")]
    pub n_validation: usize,
    /// Base seed for designs, validation sets and training.
    #[serde(default)]
    pub seed: u64,
    /// Largest LF sample count available; larger cells are skipped.
    #[serde(default)]
    pub lf_budget: Option<usize>,
    #[serde(default = "default_charge_linked")]
    pub charge_linked_lf: bool,
    /// Model settings; its `seed` is replaced per run.
    #[serde(default)]
    pub rom: RomConfig,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemParams, m1_grid: Vec<usize>, tau_grid: Vec<f64>) -> Self {
        ExperimentConfig {
            problem,
            m1_grid,
            tau_grid,
            methods: default_methods(),
            n_replications: default_replications(),
            n_validation: default_validation(),
            seed: 0,
            lf_budget: None,
            charge_linked_lf: true,
            rom: RomConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m1_grid.is_empty() || self.m1_grid.iter().any(|&m| m < 2) {
            return Err(Error::invalid("m1_grid needs at least one value, each >= 2"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        let multi = self.methods.iter().any(|v| v.is_multi_fidelity());
        if multi && self.tau_grid.is_empty() {
            return Err(Error::invalid("tau_grid needs at least one value for multi-fidelity methods"));
        }
        if let Some(t) = self.tau_grid.iter().find(|t| !(**t > 1.0 && t.is_finite())) {
            return Err(Error::invalid(format!("τ values must be finite and > 1, got {t}")));
        }
        if self.n_replications == 0 || self.n_validation == 0 {
            return Err(Error::invalid("n_replications and n_validation must be >= 1"));
        }
        Ok(())
    }

    fn ledger(&self) -> Result<CostLedger> {
        let mut l = CostLedger::new(self.problem.cost_hf, self.problem.cost_lf)?;
        l.charge_linked_lf = self.charge_linked_lf;
        Ok(l)
    }
}

/// One trained-and-evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Variant,
    pub m1: usize,
    /// `None` for single-fidelity runs.
    pub tau: Option<f64>,
    pub replication: usize,
    pub k: usize,
    pub errors: ErrorReport,
    pub cost_cpu_hr: f64,
}

impl RunRecord {
    /// Positive floats order like their bit patterns.
    fn cell_key(&self) -> (Variant, usize, u64) {
        (self.method, self.m1, self.tau.map_or(0, f64::to_bits))
    }

    fn key(&self) -> (Variant, usize, u64, usize) {
        let (m, m1, t) = self.cell_key();
        (m, m1, t, self.replication)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Variant,
    pub m1: usize,
    pub tau: Option<f64>,
    pub n_runs: usize,
    pub mean_e_total: f64,
    pub median_e_total: f64,
    pub mean_e_rc: f64,
    pub median_e_rc: f64,
    pub mean_e_rg: f64,
    pub median_e_rg: f64,
    /// Mean over the runs that retained mode `j`.
    pub mean_per_mode: Vec<f64>,
    pub cost_cpu_hr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Sorted by method, m1, τ, replication.
    pub records: Vec<RunRecord>,
    pub cells: Vec<CellSummary>,
    /// Skipped cells and other remarks.
    pub notices: Vec<String>,
}

pub const CSV_HEADER: &str = "method,m1,tau,replication,e_total,e_rc,e_rg,cost_cpu_hr";

fn tau_label(tau: Option<f64>) -> String {
    tau.map_or_else(String::new, |t| t.to_string())
}

impl ExperimentReport {
    pub fn cell(&self, method: Variant, m1: usize, tau: Option<f64>) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.m1 == m1 && c.tau == tau)
    }

    /// Tidy CSV, one row per run, in record order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                r.m1,
                tau_label(r.tau),
                r.replication,
                r.errors.e_total,
                r.errors.e_rc,
                r.errors.e_rg,
                r.cost_cpu_hr
            ));
        }
        out
    }

    /// Statistics nested as method → m1 → τ (`"single"` for PCAS).
    pub fn to_json(&self) -> Result<String> {
        let mut nested: BTreeMap<String, BTreeMap<usize, BTreeMap<String, &CellSummary>>> = BTreeMap::new();
        for c in &self.cells {
            let tau = c.tau.map_or_else(|| "single".to_string(), |t| t.to_string());
            nested.entry(c.method.to_string()).or_default().entry(c.m1).or_default().insert(tau, c);
        }
        let doc = serde_json::json!({ "results": nested, "notices": self.notices });
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut cells: Vec<CellSummary> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let head = &records[start];
        let end = start + records[start..].iter().take_while(|r| r.cell_key() == head.cell_key()).count();
        let runs = &records[start..end];
        let col = |f: fn(&ErrorReport) -> f64| runs.iter().map(|r| f(&r.errors)).collect::<Vec<_>>();
        let (mut tot, mut rc, mut rg) = (col(|e| e.e_total), col(|e| e.e_rc), col(|e| e.e_rg));
        let k_max = runs.iter().map(|r| r.errors.per_mode.len()).max().unwrap_or(0);
        let mean_per_mode = (0..k_max)
            .map(|j| mean(&runs.iter().filter_map(|r| r.errors.per_mode.get(j).copied()).collect::<Vec<_>>()))
            .collect();
        cells.push(CellSummary {
            method: head.method,
            m1: head.m1,
            tau: head.tau,
            n_runs: runs.len(),
            mean_e_total: mean(&tot),
            median_e_total: median(&mut tot),
            mean_e_rc: mean(&rc),
            median_e_rc: median(&mut rc),
            mean_e_rg: mean(&rg),
            median_e_rg: median(&mut rg),
            mean_per_mode,
            cost_cpu_hr: head.cost_cpu_hr,
        });
        start = end;
    }
    cells
}

/// Seed of the design stream for HF size `m1`, replication `rep`.
fn design_seed(base: u64, m1: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(base, m1 as u64), rep as u64)
}

pub fn run_experiment(cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentReport> {
    cfg.validate()?;
    let spec = SyntheticProblemSpec::generate(&cfg.problem)?;
    let ledger = cfg.ledger()?;
    let mut notices = Vec::new();

    // feasible (τ, m2) pairs per m1
    let mut plans: Vec<(usize, Vec<(f64, usize)>)> = Vec::new();
    for &m1 in &cfg.m1_grid {
        let mut taus = Vec::new();
        if cfg.methods.iter().any(|v| v.is_multi_fidelity()) {
            for &tau in &cfg.tau_grid {
                let m2 = (tau * m1 as f64).round() as usize;
                match cfg.lf_budget {
                    Some(b) if m2 > b => {
                        let msg = format!("skipped m1 = {m1}, τ = {tau}: needs {m2} LF samples, budget is {b}");
                        log::warn!("{msg}");
                        notices.push(msg);
                    }
                    _ => taus.push((tau, m2)),
                }
            }
        }
        plans.push((m1, taus));
    }

    let units: Vec<(usize, usize)> = (0..plans.len())
        .flat_map(|p| (0..cfg.n_replications).map(move |r| (p, r)))
        .collect();
    let per_unit = try_map_range(exec, units.len(), |u| {
        let (p, rep) = units[u];
        let (m1, taus) = &plans[p];
        run_unit(cfg, &spec, &ledger, *m1, taus, rep, exec)
    })?;
    let mut records: Vec<RunRecord> = per_unit.into_iter().flatten().collect();
    records.sort_by_key(RunRecord::key);
    let cells = summarize(&records);
    Ok(ExperimentReport { records, cells, notices })
}

fn run_unit(
    cfg: &ExperimentConfig,
    spec: &SyntheticProblemSpec,
    ledger: &CostLedger,
    m1: usize,
    taus: &[(f64, usize)],
    rep: usize,
    exec: Exec,
) -> Result<Vec<RunRecord>> {
    let seed = design_seed(cfg.seed, m1, rep);
    let m_stream = taus.iter().map(|t| t.1).max().unwrap_or(m1).max(m1);
    let stream = sample_doe(&spec.bounds, m_stream, seed)?;
    let x_hf = stream.select_rows(&(0..m1).collect::<Vec<_>>());
    let y = evaluate_fields(spec, &x_hf, Fidelity::Hf)?;
    let x_val = sample_uniform(&spec.bounds, cfg.n_validation, derive_seed(derive_seed(cfg.seed, VALIDATION_STREAM), rep as u64))?;
    let truth = evaluate_fields(spec, &x_val, Fidelity::Hf)?;
    let mut rom = cfg.rom.clone();
    rom.seed = seed;
    let mut out = Vec::new();
    for &method in &cfg.methods {
        if method.is_multi_fidelity() {
            for &(tau, m2) in taus {
                let x_lf = stream.select_rows(&(0..m2).collect::<Vec<_>>());
                let z = evaluate_fields(spec, &x_lf, Fidelity::Lf)?;
                let part = make_linked_partition(&x_hf, &x_lf)?;
                let model = train(method, &y, Some(&z), &x_hf, Some(&x_lf), Some(&part), &rom, exec)?;
                out.push(RunRecord {
                    method,
                    m1,
                    tau: Some(tau),
                    replication: rep,
                    k: model.k(),
                    errors: evaluate(&model, &x_val, &truth, exec)?,
                    cost_cpu_hr: training_cost(ledger, m1, m2 as f64 / m1 as f64)?,
                });
            }
        } else {
            let model = train(method, &y, None, &x_hf, None, None, &rom, exec)?;
            out.push(RunRecord {
                method,
                m1,
                tau: None,
                replication: rep,
                k: model.k(),
                errors: evaluate(&model, &x_val, &truth, exec)?,
                cost_cpu_hr: ledger.single_fidelity(m1),
            });
        }
    }
    Ok(out)
}
