//! Designs, snapshot matrices, linked multi-fidelity bookkeeping and the
//! synthetic analytic benchmark problems.

mod doe;
pub mod format;
mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use doe::{sample_doe, sample_uniform, SobolStream};
pub use synthetic::{evaluate_fields, mode_shape, uniform_mesh, ProblemParams, SyntheticProblemSpec};

/// Axis-aligned input box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::invalid(format!(
                "bounds need matching non-empty lo/hi (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() || l >= h {
                return Err(Error::invalid(format!(
                    "bounds for dimension {i} are not well ordered: [{l}, {h}]"
                )));
            }
        }
        Ok(Bounds { lo, hi })
    }

    /// The same interval `[lo, hi]` in every one of `d` dimensions.
    pub fn cube(d: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Map a point of the unit cube into the box.
    pub fn scale_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, ui)| (self.lo[i] + ui * self.width(i)).min(self.hi[i]))
            .collect()
    }
}

/// `m` designs of dimension `d`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    bounds: Option<Bounds>,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid("design matrix needs m >= 1 and d >= 1"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "design matrix has a non-finite entry at row {}",
                pos % values.nrows()
            )));
        }
        Ok(DesignMatrix {
            values,
            bounds: None,
        })
    }

    /// Attach a box; every design must lie inside it.
    pub fn with_bounds(mut self, bounds: Bounds) -> Result<Self> {
        crate::error::check_dim("design bounds", self.dim(), bounds.dim())?;
        for i in 0..self.len() {
            let row = self.row(i);
            if !bounds.contains(&row) {
                return Err(Error::invalid(format!("design row {i} lies outside its bounds")));
            }
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("design rows have different lengths"));
        }
        Self::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn bounds(&self) -> Option<&Bounds> {
        self.bounds.as_ref()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn row_vector(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    /// Rows at `indices`, in that order. Bounds are carried over.
    pub fn select_rows(&self, indices: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: self.values.select_rows(indices),
            bounds: self.bounds.clone(),
        }
    }

    /// Per-dimension `[min, max]` over the rows, widened where degenerate.
    pub fn bounding_box(&self) -> Bounds {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in 0..self.len() {
            for j in 0..d {
                lo[j] = lo[j].min(self.values[(i, j)]);
                hi[j] = hi[j].max(self.values[(i, j)]);
            }
        }
        for j in 0..d {
            if hi[j] <= lo[j] {
                lo[j] -= 0.5;
                hi[j] += 0.5;
            }
        }
        Bounds { lo, hi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Hf,
    Lf,
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fidelity::Hf => "hf",
            Fidelity::Lf => "lf",
        })
    }
}

impl FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hf" | "high" => Ok(Fidelity::Hf),
            "lf" | "low" => Ok(Fidelity::Lf),
            other => Err(Error::invalid(format!("unknown fidelity '{other}'"))),
        }
    }
}

/// Field solutions at one fidelity level, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    values: DMatrix<f64>,
    pub fidelity: Fidelity,
    /// CPU-hours per sample.
    pub cost_per_sample: f64,
}

impl SnapshotMatrix {
    pub fn new(values: DMatrix<f64>, fidelity: Fidelity) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::invalid("snapshot matrix needs field_dim >= 1"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "snapshot matrix has a non-finite entry in sample {}",
                pos / values.nrows()
            )));
        }
        Ok(SnapshotMatrix {
            values,
            fidelity,
            cost_per_sample: 0.0,
        })
    }

    pub fn with_cost(mut self, cost_per_sample: f64) -> Result<Self> {
        if !(cost_per_sample >= 0.0 && cost_per_sample.is_finite()) {
            return Err(Error::invalid("cost per sample must be finite and >= 0"));
        }
        self.cost_per_sample = cost_per_sample;
        Ok(self)
    }

    pub fn field_dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn sample(&self, j: usize) -> DVector<f64> {
        self.values.column(j).into_owned()
    }

    pub fn select_samples(&self, indices: &[usize]) -> SnapshotMatrix {
        SnapshotMatrix {
            values: self.values.select_columns(indices),
            fidelity: self.fidelity,
            cost_per_sample: self.cost_per_sample,
        }
    }
}

/// Which LF samples share their design with an HF sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedPartition {
    pub n_linked: usize,
    pub n_total_lf: usize,
    /// `linked_indices[i]` is the LF position of HF design `i`.
    pub linked_indices: Vec<usize>,
}

impl LinkedPartition {
    /// LF positions not shared with any HF design, ascending.
    pub fn unlinked_indices(&self) -> Vec<usize> {
        let mut linked = vec![false; self.n_total_lf];
        for &i in &self.linked_indices {
            linked[i] = true;
        }
        (0..self.n_total_lf).filter(|&i| !linked[i]).collect()
    }

    /// Ratio `m2 / m1`.
    pub fn tau(&self) -> f64 {
        self.n_total_lf as f64 / self.n_linked as f64
    }
}

fn row_key(m: &DMatrix<f64>, i: usize) -> Vec<u64> {
    // +0.0 and -0.0 compare equal as designs
    m.row(i)
        .iter()
        .map(|v| if *v == 0.0 { 0 } else { v.to_bits() })
        .collect()
}

/// Locate every HF design among the LF designs by exact value.
pub fn make_linked_partition(hf: &DesignMatrix, lf: &DesignMatrix) -> Result<LinkedPartition> {
    crate::error::check_dim("design dimension", hf.dim(), lf.dim())?;
    let (m1, m2) = (hf.len(), lf.len());
    if m2 <= m1 {
        return Err(Error::invalid(format!(
            "need more LF than HF designs (m2 = {m2}, m1 = {m1})"
        )));
    }
    let mut positions: HashMap<Vec<u64>, Vec<usize>> = HashMap::with_capacity(m2);
    for j in 0..m2 {
        positions.entry(row_key(lf.values(), j)).or_default().push(j);
    }
    let mut used = vec![false; m2];
    let mut linked = Vec::with_capacity(m1);
    for i in 0..m1 {
        let hits = positions
            .get(&row_key(hf.values(), i))
            .ok_or_else(|| Error::Data(format!("HF design row {i} is absent from the LF designs")))?;
        if hits.len() > 1 {
            return Err(Error::Data(format!(
                "HF design row {i} appears {} times among the LF designs",
                hits.len()
            )));
        }
        let j = hits[0];
        if used[j] {
            return Err(Error::Data(format!(
                "HF design row {i} duplicates an earlier HF design (LF row {j})"
            )));
        }
        used[j] = true;
        linked.push(j);
    }
    Ok(LinkedPartition {
        n_linked: m1,
        n_total_lf: m2,
        linked_indices: linked,
    })
}
