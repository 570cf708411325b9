use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sobol::params::JoeKuoD6;
use sobol::Sobol;

use super::{Bounds, DesignMatrix};
use crate::error::{Error, Result};

fn joe_kuo() -> &'static JoeKuoD6 {
    static PARAMS: OnceLock<JoeKuoD6> = OnceLock::new();
    PARAMS.get_or_init(JoeKuoD6::standard)
}

/// Sobol points in `[0, 1)^d`, scrambled by a seeded random digital shift.
///
/// A digital shift XORs every coordinate with a fixed random bit pattern, so
/// the net structure (and its discrepancy bounds) is preserved.
pub struct SobolStream {
    inner: Sobol<u64>,
    shift: Vec<u64>,
}

impl SobolStream {
    pub fn new(d: usize, seed: u64) -> Result<Self> {
        let params = joe_kuo();
        if d == 0 || d > params.max_dims {
            return Err(Error::invalid(format!(
                "Sobol sampler supports 1..={} dimensions, got {d}",
                params.max_dims
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..d).map(|_| rng.random::<u64>()).collect();
        Ok(SobolStream {
            inner: Sobol::<u64>::new(d, params),
            shift,
        })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }
}

impl Iterator for SobolStream {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let raw = self.inner.next()?;
        Some(
            raw.iter()
                .zip(&self.shift)
                .map(|(v, s)| ((v ^ s) >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
                .collect(),
        )
    }
}

/// `m` quasi-random designs from a scrambled Sobol sequence scaled into
/// `bounds`. Identical arguments give bit-identical output; the first `m`
/// points for a seed are a prefix of the first `m' > m` points.
pub fn sample_doe(bounds: &Bounds, m: usize, seed: u64) -> Result<DesignMatrix> {
    let bounds = Bounds::new(bounds.lo.clone(), bounds.hi.clone())?;
    if m == 0 {
        return Err(Error::invalid("sample_doe needs m >= 1"));
    }
    let d = bounds.dim();
    let mut values = DMatrix::zeros(m, d);
    for (i, u) in SobolStream::new(d, seed)?.take(m).enumerate() {
        for (j, x) in bounds.scale_unit(&u).into_iter().enumerate() {
            values[(i, j)] = x;
        }
    }
    DesignMatrix::new(values)?.with_bounds(bounds)
}

/// `m` independent uniform pseudo-random designs in `bounds`.
pub fn sample_uniform(bounds: &Bounds, m: usize, seed: u64) -> Result<DesignMatrix> {
    let bounds = Bounds::new(bounds.lo.clone(), bounds.hi.clone())?;
    if m == 0 {
        return Err(Error::invalid("sample_uniform needs m >= 1"));
    }
    let d = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = DMatrix::zeros(m, d);
    for i in 0..m {
        for j in 0..d {
            values[(i, j)] = bounds.lo[j] + rng.random::<f64>() * bounds.width(j);
        }
    }
    DesignMatrix::new(values)?.with_bounds(bounds)
}
