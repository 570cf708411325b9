//! Analytic multi-fidelity field problems.
//!
//! The HF field at mesh node `s` for design `x` is
//! `y(s, x) = Σ_r c_r(x) sin(rπs)` with ridge coefficients
//! `c_r(x) = (a_rᵀx)² + a_rᵀx`. The LF field drops the trailing
//! `lf_mode_drop` modes, scales the remaining coefficients by
//! `1 + lf_bias_r`, and is evaluated on a coarser uniform mesh.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Bounds, DesignMatrix, Fidelity, SnapshotMatrix};
use crate::error::{check_dim, Error, Result};

fn default_mesh_hf() -> usize {
    400
}
fn default_mesh_lf() -> usize {
    120
}
fn default_drop() -> usize {
    1
}
fn default_cost_hf() -> f64 {
    0.329
}
fn default_cost_lf() -> f64 {
    0.05
}
fn default_lo() -> f64 {
    -1.0
}
fn default_hi() -> f64 {
    1.0
}

/// Compact, serializable description from which a [`SyntheticProblemSpec`]
/// is generated deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    pub d: usize,
    pub k_true: usize,
    #[serde(default = "default_mesh_hf")]
    pub mesh_hf: usize,
    #[serde(default = "default_mesh_lf")]
    pub mesh_lf: usize,
    /// Per-mode LF coefficient distortion; defaults to `0.1 * r` (r from 1).
    #[serde(default)]
    pub lf_bias: Option<Vec<f64>>,
    #[serde(default = "default_drop")]
    pub lf_mode_drop: usize,
    #[serde(default = "default_cost_hf")]
    pub cost_hf: f64,
    #[serde(default = "default_cost_lf")]
    pub cost_lf: f64,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    /// Seed for the ridge directions.
    #[serde(default)]
    pub seed: u64,
}

impl ProblemParams {
    pub fn new(d: usize, k_true: usize) -> Self {
        ProblemParams {
            d,
            k_true,
            mesh_hf: default_mesh_hf(),
            mesh_lf: default_mesh_lf(),
            lf_bias: None,
            lf_mode_drop: default_drop(),
            cost_hf: default_cost_hf(),
            cost_lf: default_cost_lf(),
            lo: default_lo(),
            hi: default_hi(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProblemSpec {
    pub d: usize,
    pub k_true: usize,
    /// `k_true` orthonormal vectors of length `d`.
    pub ridge_directions: Vec<Vec<f64>>,
    pub mesh_hf: usize,
    pub mesh_lf: usize,
    pub lf_bias: Vec<f64>,
    pub lf_mode_drop: usize,
    pub cost_hf: f64,
    pub cost_lf: f64,
    pub bounds: Bounds,
}

impl SyntheticProblemSpec {
    /// Validate and assemble a problem with explicit ridge directions.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ridge_directions: Vec<Vec<f64>>,
        mesh_hf: usize,
        mesh_lf: usize,
        lf_bias: Vec<f64>,
        lf_mode_drop: usize,
        cost_hf: f64,
        cost_lf: f64,
        bounds: Bounds,
    ) -> Result<Self> {
        let k_true = ridge_directions.len();
        let d = bounds.dim();
        if k_true == 0 {
            return Err(Error::invalid("k_true must be >= 1"));
        }
        if k_true > d {
            return Err(Error::invalid(format!(
                "k_true = {k_true} orthonormal ridge directions do not fit in d = {d}"
            )));
        }
        for (r, a) in ridge_directions.iter().enumerate() {
            check_dim("ridge direction length", d, a.len())?;
            for (s, b) in ridge_directions.iter().enumerate().skip(r) {
                let dot: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
                let want = if r == s { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-10 {
                    return Err(Error::invalid(format!(
                        "ridge directions {r} and {s} are not orthonormal (dot = {dot})"
                    )));
                }
            }
        }
        if lf_mode_drop >= k_true {
            return Err(Error::invalid(format!(
                "lf_mode_drop = {lf_mode_drop} must be < k_true = {k_true}"
            )));
        }
        if !(mesh_hf > mesh_lf && mesh_lf >= k_true) {
            return Err(Error::invalid(format!(
                "need mesh_hf > mesh_lf >= k_true (got {mesh_hf}, {mesh_lf}, {k_true})"
            )));
        }
        if mesh_lf < 2 {
            return Err(Error::invalid("meshes need at least two nodes"));
        }
        check_dim("lf_bias length", k_true, lf_bias.len())?;
        if lf_bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("lf_bias must be finite"));
        }
        if !(cost_hf >= 0.0 && cost_lf >= 0.0) {
            return Err(Error::invalid("costs must be >= 0"));
        }
        Ok(SyntheticProblemSpec {
            d,
            k_true,
            ridge_directions,
            mesh_hf,
            mesh_lf,
            lf_bias,
            lf_mode_drop,
            cost_hf,
            cost_lf,
            bounds,
        })
    }

    /// Build a problem from its compact parameters. Ridge directions are the
    /// Q factor of a seeded Gaussian `d × k_true` matrix.
    pub fn generate(p: &ProblemParams) -> Result<Self> {
        if p.k_true == 0 || p.d == 0 {
            return Err(Error::invalid("d and k_true must be >= 1"));
        }
        if p.k_true > p.d {
            return Err(Error::invalid(format!(
                "k_true = {} orthonormal ridge directions do not fit in d = {}",
                p.k_true, p.d
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let g = DMatrix::<f64>::from_fn(p.d, p.k_true, |_, _| StandardNormal.sample(&mut rng));
        let q = g.qr().q();
        let dirs = (0..p.k_true)
            .map(|r| q.column(r).iter().copied().collect())
            .collect();
        let bias = p
            .lf_bias
            .clone()
            .unwrap_or_else(|| (1..=p.k_true).map(|r| 0.1 * r as f64).collect());
        Self::new(
            dirs,
            p.mesh_hf,
            p.mesh_lf,
            bias,
            p.lf_mode_drop,
            p.cost_hf,
            p.cost_lf,
            Bounds::cube(p.d, p.lo, p.hi)?,
        )
    }

    /// Ridge coefficients `c_r(x)` for one design.
    pub fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        self.ridge_directions
            .iter()
            .map(|a| {
                let t: f64 = a.iter().zip(x).map(|(u, v)| u * v).sum();
                t * t + t
            })
            .collect()
    }

    pub fn mesh_size(&self, fidelity: Fidelity) -> usize {
        match fidelity {
            Fidelity::Hf => self.mesh_hf,
            Fidelity::Lf => self.mesh_lf,
        }
    }

    pub fn cost(&self, fidelity: Fidelity) -> f64 {
        match fidelity {
            Fidelity::Hf => self.cost_hf,
            Fidelity::Lf => self.cost_lf,
        }
    }
}

/// Uniform mesh of `n` nodes on `[0, 1]`.
pub fn uniform_mesh(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|j| j as f64 / (n - 1) as f64).collect()
}

/// Mode shape `sin(rπs)`, `r` counted from 1.
pub fn mode_shape(r: usize, s: f64) -> f64 {
    (r as f64 * PI * s).sin()
}

/// Evaluate the synthetic field for each design row at one fidelity.
pub fn evaluate_fields(
    spec: &SyntheticProblemSpec,
    designs: &DesignMatrix,
    fidelity: Fidelity,
) -> Result<SnapshotMatrix> {
    check_dim("design dimension", spec.d, designs.dim())?;
    let mesh = uniform_mesh(spec.mesh_size(fidelity));
    let n_modes = match fidelity {
        Fidelity::Hf => spec.k_true,
        Fidelity::Lf => spec.k_true - spec.lf_mode_drop,
    };
    let shapes: Vec<Vec<f64>> = (1..=n_modes)
        .map(|r| mesh.iter().map(|&s| mode_shape(r, s)).collect())
        .collect();
    let mut values = DMatrix::zeros(mesh.len(), designs.len());
    for j in 0..designs.len() {
        let c = spec.coefficients(&designs.row(j));
        let mut col = values.column_mut(j);
        for (r, shape) in shapes.iter().enumerate() {
            let coef = match fidelity {
                Fidelity::Hf => c[r],
                Fidelity::Lf => (1.0 + spec.lf_bias[r]) * c[r],
            };
            for (v, phi) in col.iter_mut().zip(shape) {
                *v += coef * phi;
            }
        }
    }
    SnapshotMatrix::new(values, fidelity)?.with_cost(spec.cost(fidelity))
}
