//! Held-out error metrics, their orthogonal decomposition and training cost.
//!
//! All errors are root-mean-square over the `n_v` validation samples:
//! total² = reconstruction² + regression², and the per-mode errors
//! recompose the regression error as a root sum of squares.

pub mod experiment;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{DesignMatrix, SnapshotMatrix};
use crate::error::{check_dim, Error, Result};
use crate::par::Exec;
use crate::pod::{project, LatentSet, PodBasis};
use crate::rom::RomModel;

pub use experiment::{run_experiment, CellSummary, ExperimentConfig, ExperimentReport, RunRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub e_total: f64,
    pub e_rc: f64,
    pub e_rg: f64,
    pub per_mode: Vec<f64>,
    pub n_v: usize,
}

impl ErrorReport {
    /// `|E² - (E_RC² + E_RG²)| / E²`; zero when every error is zero.
    pub fn decomposition_residual(&self) -> f64 {
        let lhs = self.e_total * self.e_total;
        let gap = (lhs - self.e_rc * self.e_rc - self.e_rg * self.e_rg).abs();
        if lhs == 0.0 {
            gap
        } else {
            gap / lhs
        }
    }

    /// Relative mismatch between `E_RG²` and the sum of squared per-mode errors.
    pub fn composition_residual(&self) -> f64 {
        let lhs = self.e_rg * self.e_rg;
        let gap = (lhs - self.per_mode.iter().map(|e| e * e).sum::<f64>()).abs();
        if lhs == 0.0 {
            gap
        } else {
            gap / lhs
        }
    }
}

fn check_nonempty(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Data("empty validation set".into()));
    }
    Ok(())
}

fn check_truth(basis: &PodBasis, truth: &SnapshotMatrix) -> Result<()> {
    check_nonempty(truth.n_samples())?;
    check_dim("truth field length", basis.field_dim(), truth.field_dim())
}

fn check_latent(basis: &PodBasis, truth: &SnapshotMatrix, latent: &LatentSet) -> Result<()> {
    check_dim("predicted latent dimension", basis.k(), latent.k())?;
    check_dim("predicted latent count", truth.n_samples(), latent.n_samples())
}

/// RMS over columns of the column norms of `m`.
fn rms_columns(m: &DMatrix<f64>) -> f64 {
    (m.norm_squared() / m.ncols() as f64).sqrt()
}

pub fn prediction_error(truth: &SnapshotMatrix, predicted: &SnapshotMatrix) -> Result<f64> {
    check_nonempty(truth.n_samples())?;
    check_dim("predicted field length", truth.field_dim(), predicted.field_dim())?;
    check_dim("predicted sample count", truth.n_samples(), predicted.n_samples())?;
    Ok(rms_columns(&(truth.values() - predicted.values())))
}

/// Error left after projecting the centered truth onto the basis.
pub fn reconstruction_error(basis: &PodBasis, truth: &SnapshotMatrix) -> Result<f64> {
    check_truth(basis, truth)?;
    let mut c = truth.values().clone();
    for mut col in c.column_iter_mut() {
        col -= basis.mean_field();
    }
    let coords = basis.modes().transpose() * &c;
    Ok(rms_columns(&(c - basis.modes() * coords)))
}

fn latent_residual(basis: &PodBasis, truth: &SnapshotMatrix, latent: &LatentSet) -> Result<DMatrix<f64>> {
    check_truth(basis, truth)?;
    check_latent(basis, truth, latent)?;
    Ok(project(basis, truth)?.coords - &latent.coords)
}

/// Error of the predicted latent coordinates, measured in the latent space
/// (equal to the field-space error because the modes are orthonormal).
pub fn regression_error(basis: &PodBasis, truth: &SnapshotMatrix, latent_pred: &LatentSet) -> Result<f64> {
    Ok(rms_columns(&latent_residual(basis, truth, latent_pred)?))
}

pub fn per_mode_errors(basis: &PodBasis, truth: &SnapshotMatrix, latent_pred: &LatentSet) -> Result<Vec<f64>> {
    let r = latent_residual(basis, truth, latent_pred)?;
    let n = r.ncols() as f64;
    Ok(r.row_iter().map(|row| (row.norm_squared() / n).sqrt()).collect())
}

/// Full decomposition for a basis, the truth fields and predicted latents.
pub fn error_report(basis: &PodBasis, truth: &SnapshotMatrix, latent_pred: &LatentSet) -> Result<ErrorReport> {
    check_truth(basis, truth)?;
    check_latent(basis, truth, latent_pred)?;
    let predicted = basis.modes() * &latent_pred.coords;
    let mut fields = predicted;
    for mut col in fields.column_iter_mut() {
        col += basis.mean_field();
    }
    let e_total = rms_columns(&(truth.values() - fields));
    Ok(ErrorReport {
        e_total,
        e_rc: reconstruction_error(basis, truth)?,
        e_rg: regression_error(basis, truth, latent_pred)?,
        per_mode: per_mode_errors(basis, truth, latent_pred)?,
        n_v: truth.n_samples(),
    })
}

/// Predict every design with `model` and decompose the error against `truth`.
pub fn evaluate(model: &RomModel, designs: &DesignMatrix, truth: &SnapshotMatrix, exec: Exec) -> Result<ErrorReport> {
    check_nonempty(designs.len())?;
    check_dim("validation sample count", designs.len(), truth.n_samples())?;
    let (_, latent, _) = model.predict_batch(designs, exec)?;
    error_report(&model.basis, truth, &latent)
}

/// Per-sample simulation cost of each fidelity, in CPU-hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub cost_hf: f64,
    pub cost_lf: f64,
    /// Charge the LF runs at linked designs too (a linked design runs both models).
    pub charge_linked_lf: bool,
}

impl CostLedger {
    pub fn new(cost_hf: f64, cost_lf: f64) -> Result<Self> {
        if !(cost_hf >= 0.0 && cost_lf >= 0.0 && cost_hf.is_finite() && cost_lf.is_finite()) {
            return Err(Error::invalid(format!("costs must be finite and non-negative, got {cost_hf}, {cost_lf}")));
        }
        Ok(CostLedger {
            cost_hf,
            cost_lf,
            charge_linked_lf: true,
        })
    }

    /// Cost of `m1` HF and `m2` LF samples (the first `m1` LF designs are linked).
    pub fn total(&self, m1: usize, m2: usize) -> f64 {
        let linked = if self.charge_linked_lf { m1.min(m2) } else { 0 };
        m1 as f64 * self.cost_hf + (m2.saturating_sub(m1) + linked) as f64 * self.cost_lf
    }

    pub fn single_fidelity(&self, m1: usize) -> f64 {
        m1 as f64 * self.cost_hf
    }
}

/// Training-data cost for `m1` HF samples and `tau · m1` LF samples.
pub fn training_cost(ledger: &CostLedger, m1: usize, tau: f64) -> Result<f64> {
    if !(tau >= 1.0) {
        return Err(Error::invalid(format!("τ must be at least 1, got {tau}")));
    }
    let m1f = m1 as f64;
    let lf = if ledger.charge_linked_lf { m1f * tau } else { m1f * (tau - 1.0) };
    Ok(m1f * ledger.cost_hf + lf * ledger.cost_lf)
}
