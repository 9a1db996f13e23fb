//! Random instances: Gaussian component matrices and initial iterates on the
//! sphere of radius `√d`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numeric::{self, CompensatedSum};
use crate::rng::{self, STREAM_COMPONENTS, STREAM_INIT};
use crate::{Error, Result};

/// Resampling budget for the (measure-zero) all-zero Gaussian draw.
pub const MAX_SPHERE_RESAMPLES: u32 = 8;

/// The `k × d` matrix whose rows are the hidden components `a_i`, stored row-major.
///
/// Together with the half-order `m` it defines the tensor `Σ_i a_i^{⊗2m}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentMatrix {
    entries: Vec<f64>,
    row_norms: Vec<f64>,
    k: usize,
    d: usize,
    m: usize,
    seed: u64,
}

/// Rows accumulated plainly before folding into the compensated sums of `Aᵀ f`.
const TRANSPOSE_BLOCK: usize = 32;

impl ComponentMatrix {
    fn assemble(entries: Vec<f64>, k: usize, d: usize, m: usize, seed: u64) -> Self {
        let row_norms = entries.chunks_exact(d).map(numeric::norm).collect();
        Self {
            entries,
            row_norms,
            k,
            d,
            m,
            seed,
        }
    }

    /// Builds a matrix from explicit row-major entries (seed is recorded as 0).
    pub fn from_row_major(k: usize, d: usize, m: usize, entries: Vec<f64>) -> Result<Self> {
        check_dims(k, d, m)?;
        Error::check_len(k * d, entries.len())?;
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument {
                field: "entries",
                reason: "component matrix entries must be finite".into(),
            });
        }
        Ok(Self::assemble(entries, k, d, m, 0))
    }

    pub fn from_rows(rows: &[Vec<f64>], m: usize) -> Result<Self> {
        let k = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        check_dims(k, d, m)?;
        let mut entries = Vec::with_capacity(k * d);
        for row in rows {
            Error::check_len(d, row.len())?;
            entries.extend_from_slice(row);
        }
        Self::from_row_major(k, d, m, entries)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Tensor half-order; the tensor has order `2m`.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.d..(i + 1) * self.d]
    }

    /// `‖a_i‖₂` for every row.
    pub fn row_norms(&self) -> &[f64] {
        &self.row_norms
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.entries.chunks_exact(self.d)
    }

    /// Returns a copy with a different half-order.
    pub fn with_order(mut self, m: usize) -> Result<Self> {
        check_dims(self.k, self.d, m)?;
        self.m = m;
        Ok(self)
    }

    /// `A x` (length `k`).
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.d, x.len())?;
        Ok(self.rows().map(|row| numeric::dot(row, x)).collect())
    }

    /// `Aᵀ f` (length `d`). Rows are summed in index order, plainly within
    /// blocks of 32 and with compensation across blocks.
    pub fn apply_transpose(&self, f: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.k, f.len())?;
        let mut acc = vec![CompensatedSum::new(); self.d];
        let mut partial = vec![0.0; self.d];
        let block_rows = self.entries.chunks(TRANSPOSE_BLOCK * self.d);
        for (block, weights) in block_rows.zip(f.chunks(TRANSPOSE_BLOCK)) {
            partial.iter_mut().for_each(|p| *p = 0.0);
            for (row, &w) in block.chunks_exact(self.d).zip(weights) {
                for (p, &r) in partial.iter_mut().zip(row) {
                    *p += w * r;
                }
            }
            for (a, &p) in acc.iter_mut().zip(&partial) {
                a.add(p);
            }
        }
        Ok(acc.iter().map(CompensatedSum::value).collect())
    }
}

fn check_dims(k: usize, d: usize, m: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidDimension {
            what: "k",
            value: k,
        });
    }
    if d == 0 {
        return Err(Error::InvalidDimension {
            what: "d",
            value: d,
        });
    }
    if m < 2 {
        return Err(Error::InvalidDimension {
            what: "m",
            value: m,
        });
    }
    Ok(())
}

/// Draws `A` with i.i.d. `N(0, 1/d)` entries, row-major, from the component stream of `seed`.
pub fn sample_components(k: usize, d: usize, m: usize, seed: u64) -> Result<ComponentMatrix> {
    check_dims(k, d, m)?;
    let mut rng = rng::stream(seed, STREAM_COMPONENTS);
    let scale = 1.0 / (d as f64).sqrt();
    let entries = (0..k * d)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect();
    Ok(ComponentMatrix::assemble(entries, k, d, m, seed))
}

/// Initial iterate `x₀`, uniform on the sphere of radius `√d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialVector {
    pub values: Vec<f64>,
    pub seed: u64,
    /// Number of discarded all-zero draws (practically always 0).
    pub resamples: u32,
}

impl InitialVector {
    /// Wraps an explicit vector, rescaling it onto the sphere of radius `√d`.
    pub fn from_direction(direction: &[f64]) -> Result<Self> {
        if direction.is_empty() {
            return Err(Error::InvalidDimension {
                what: "d",
                value: 0,
            });
        }
        let values = rescale_to_sphere(direction).ok_or(Error::InvalidArgument {
            field: "x0",
            reason: "initial direction must be finite and nonzero".into(),
        })?;
        Ok(Self {
            values,
            seed: 0,
            resamples: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.values.len()
    }
}

/// Samples `x₀` from the init stream of `seed`: a standard Gaussian vector rescaled to norm `√d`.
pub fn sample_sphere_init(d: usize, seed: u64) -> Result<InitialVector> {
    if d == 0 {
        return Err(Error::InvalidDimension {
            what: "d",
            value: d,
        });
    }
    let mut rng = rng::stream(seed, STREAM_INIT);
    for resamples in 0..=MAX_SPHERE_RESAMPLES {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(values) = rescale_to_sphere(&g) {
            return Ok(InitialVector {
                values,
                seed,
                resamples,
            });
        }
    }
    Err(Error::DegenerateSample {
        attempts: MAX_SPHERE_RESAMPLES + 1,
    })
}

/// `√d · v / ‖v‖`, or `None` if `v` is zero or not finite.
pub(crate) fn rescale_to_sphere(v: &[f64]) -> Option<Vec<f64>> {
    let n = numeric::norm(v);
    if !(n.is_finite() && n > 0.0) {
        return None;
    }
    let s = (v.len() as f64).sqrt() / n;
    Some(v.iter().map(|x| x * s).collect())
}
