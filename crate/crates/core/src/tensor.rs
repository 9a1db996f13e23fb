//! Contractions of `T = Σ_i a_i^{⊗2m}` with a vector, the objective
//! `S(x) = Σ_i ⟨a_i, x⟩^{2m}` and its gradient.

use crate::model::ComponentMatrix;
use crate::numeric::{self, CompensatedSum};
use crate::{Error, Result};

/// Largest explicit tensor the oracle will materialize.
pub const MAX_EXPLICIT_ENTRIES: usize = 1_000_000;

/// `T(I, x, …, x) = Aᵀ (Ax)^{∘(2m−1)}` without forming the tensor.
pub fn contract_implicit(a: &ComponentMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let y = a.apply(x)?;
    let f: Vec<f64> = y.iter().map(|&v| numeric::odd_power(v, a.m())).collect();
    a.apply_transpose(&f)
}

/// `S(x) = ‖Ax‖_{2m}^{2m}`.
pub fn objective(a: &ComponentMatrix, x: &[f64]) -> Result<f64> {
    let y = a.apply(x)?;
    Ok(objective_from_projections(&y, a.m()))
}

/// `Σ_i y_i^{2m}` for already computed projections `y = Ax`.
pub fn objective_from_projections(y: &[f64], m: usize) -> f64 {
    numeric::sum(y.iter().map(|&v| numeric::even_power(v, m)))
}

/// `∇S(x) = 2m · Aᵀ (Ax)^{∘(2m−1)}`.
pub fn gradient(a: &ComponentMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let scale = (2 * a.m()) as f64;
    Ok(contract_implicit(a, x)?
        .into_iter()
        .map(|v| scale * v)
        .collect())
}

/// Dense symmetric tensor `Σ_j a_j^{⊗2m}`; only used as a verification oracle.
#[derive(Clone, Debug)]
pub struct ExplicitTensor {
    order: usize,
    dim: usize,
    entries: Vec<f64>,
}

fn explicit_len(dim: usize, order: usize) -> Result<usize> {
    let entries = (dim as u128).pow(order as u32);
    if entries > MAX_EXPLICIT_ENTRIES as u128 {
        return Err(Error::TensorTooLarge {
            entries,
            limit: MAX_EXPLICIT_ENTRIES,
        });
    }
    Ok(entries as usize)
}

impl ExplicitTensor {
    /// Materializes the tensor; the first index varies slowest.
    pub fn from_components(a: &ComponentMatrix) -> Result<Self> {
        let order = 2 * a.m();
        let dim = a.d();
        let len = explicit_len(dim, order)?;
        let mut entries = vec![CompensatedSum::new(); len];
        let mut index = vec![0usize; order];
        for row in a.rows() {
            index.iter_mut().for_each(|i| *i = 0);
            for entry in entries.iter_mut() {
                entry.add(index.iter().map(|&i| row[i]).product());
                advance(&mut index, dim);
            }
        }
        Ok(Self {
            order,
            dim,
            entries: entries.iter().map(CompensatedSum::value).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry at a multi-index of length `order`.
    pub fn get(&self, index: &[usize]) -> f64 {
        debug_assert_eq!(index.len(), self.order);
        let flat = index.iter().fold(0, |acc, &i| acc * self.dim + i);
        self.entries[flat]
    }
}

/// Row-major odometer increment (last index fastest).
fn advance(index: &mut [usize], dim: usize) {
    for slot in index.iter_mut().rev() {
        *slot += 1;
        if *slot < dim {
            return;
        }
        *slot = 0;
    }
}

/// Direct `(2m−1)`-fold summation `out(i₁) = Σ T(i₁, i₂, …) x(i₂)⋯x(i_{2m})`.
pub fn contract_explicit(t: &ExplicitTensor, x: &[f64]) -> Result<Vec<f64>> {
    Error::check_len(t.dim, x.len())?;
    explicit_len(t.dim, t.order)?;
    let block = t.entries.len() / t.dim;
    let mut out = Vec::with_capacity(t.dim);
    let mut tail = vec![0usize; t.order - 1];
    for i in 0..t.dim {
        let mut acc = CompensatedSum::new();
        tail.iter_mut().for_each(|s| *s = 0);
        for &entry in &t.entries[i * block..(i + 1) * block] {
            acc.add(entry * tail.iter().map(|&j| x[j]).product::<f64>());
            advance(&mut tail, t.dim);
        }
        out.push(acc.value());
    }
    Ok(out)
}

/// Outcome of [`oracle_check`].
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub cases: usize,
    pub max_relative_error: f64,
    /// `(d, k, m)` of the worst case.
    pub worst: (usize, usize, usize),
}

/// Compares [`contract_implicit`] against [`contract_explicit`] over every
/// `(d, k, m)` in the given ranges, `pairs` random `(A, x)` per triple.
pub fn oracle_check(
    dims: &[usize],
    ks: &[usize],
    orders: &[usize],
    pairs: usize,
    base_seed: u64,
) -> Result<OracleReport> {
    use crate::model::{sample_components, sample_sphere_init};
    use crate::rng::derive_seed;

    let mut report = OracleReport {
        cases: 0,
        max_relative_error: 0.0,
        worst: (0, 0, 0),
    };
    for &d in dims {
        for &k in ks {
            for &m in orders {
                for p in 0..pairs {
                    let seed = derive_seed(base_seed, &[d as u64, k as u64, m as u64, p as u64]);
                    let a = sample_components(k, d, m, seed)?;
                    let x = sample_sphere_init(d, seed)?;
                    let t = ExplicitTensor::from_components(&a)?;
                    let err = numeric::relative_error(
                        &contract_implicit(&a, &x.values)?,
                        &contract_explicit(&t, &x.values)?,
                    );
                    report.cases += 1;
                    if err.is_nan() || err > report.max_relative_error {
                        report.max_relative_error = err;
                        report.worst = (d, k, m);
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_components, sample_sphere_init};

    fn unit(d: usize, i: usize, scale: f64) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = scale;
        v
    }

    #[test]
    fn single_unit_component() {
        let a = ComponentMatrix::from_rows(&[unit(4, 0, 1.0)], 2).unwrap();
        assert_eq!(
            contract_implicit(&a, &unit(4, 0, 2.0)).unwrap(),
            unit(4, 0, 8.0)
        );
        assert_eq!(contract_implicit(&a, &[0.0; 4]).unwrap(), vec![0.0; 4]);
        assert_eq!(gradient(&a, &unit(4, 0, 1.0)).unwrap(), unit(4, 0, 4.0));
        assert_eq!(gradient(&a, &[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn rank_one_explicit() {
        let a = ComponentMatrix::from_rows(&[unit(3, 1, 1.0)], 2).unwrap();
        let t = ExplicitTensor::from_components(&a).unwrap();
        assert_eq!(
            contract_explicit(&t, &unit(3, 1, 1.0)).unwrap(),
            unit(3, 1, 1.0)
        );
        assert_eq!(contract_explicit(&t, &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn objective_on_basis() {
        let d = 5;
        let rows: Vec<_> = (0..d).map(|i| unit(d, i, 1.0)).collect();
        let a = ComponentMatrix::from_rows(&rows, 2).unwrap();
        let x = unit(d, 0, (d as f64).sqrt());
        assert!((objective(&a, &x).unwrap() - (d * d) as f64).abs() < 1e-12);
        assert_eq!(objective(&a, &[0.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn implicit_matches_explicit_small() {
        let a = sample_components(5, 3, 2, 17).unwrap();
        let x = sample_sphere_init(3, 4).unwrap().values;
        let t = ExplicitTensor::from_components(&a).unwrap();
        let err = numeric::relative_error(
            &contract_implicit(&a, &x).unwrap(),
            &contract_explicit(&t, &x).unwrap(),
        );
        assert!(err <= 1e-12, "err = {err}");
    }

    #[test]
    fn explicit_tensor_is_symmetric() {
        let a = sample_components(4, 3, 2, 5).unwrap();
        let t = ExplicitTensor::from_components(&a).unwrap();
        let idx = [0, 2, 1, 2];
        let perms = [[2, 0, 1, 2], [2, 2, 1, 0], [1, 2, 0, 2]];
        for p in perms {
            let (x, y) = (t.get(&idx), t.get(&p));
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn explicit_guard() {
        let a = sample_components(1, 32, 2, 0).unwrap();
        assert!(matches!(
            ExplicitTensor::from_components(&a),
            Err(Error::TensorTooLarge { .. })
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let a = sample_components(3, 4, 2, 0).unwrap();
        assert!(matches!(
            objective(&a, &[1.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(gradient(&a, &[1.0; 5]).is_err());
        let t = ExplicitTensor::from_components(&a).unwrap();
        assert!(contract_explicit(&t, &[1.0; 3]).is_err());
    }
}
