//! The power-iteration engine.
//!
//! One step is
//!
//! ```text
//! y_t = A x̃_{t−1},   f_t = y_t^{∘(2m−1)},   x_t = Aᵀ f_t,   x̃_t = √d · x_t / ‖x_t‖
//! ```
//!
//! i.e. `x_t = ∇S(x̃_{t−1}) / 2m` followed by projection back onto the sphere of
//! radius `√d`. There is no step size or damping.
//!
//! Two per-step metrics are recorded. The raw metric `max_i |⟨a_i, x̃⟩| / √d`
//! is the quantity bounded in the trapping analysis; it equals `‖a_i‖` at
//! perfect alignment and, for `k ≫ d`, is already close to 1 at a random
//! point. The recovery event therefore uses the scale-free alignment
//! `max_i |⟨a_i, x̃⟩| / (√d ‖a_i‖)`, which is exactly 1 on a component.

use serde::{Deserialize, Serialize};

use crate::model::{ComponentMatrix, InitialVector};
use crate::numeric;
use crate::tensor;
use crate::{Error, Result};

/// Default recovery threshold on the alignment `max_i |⟨a_i, x̃⟩| / (√d ‖a_i‖)`.
pub const DEFAULT_TAU: f64 = 0.95;

/// Norm below which `x_t` cannot be normalized.
pub const MIN_NORMALIZABLE: f64 = 1e-300;

/// Best-aligned component of an iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// `max_i |⟨a_i, x̃⟩| / √d`.
    pub value: f64,
    /// Zero-based component index (smallest index on ties).
    pub index: usize,
    /// Sign of `⟨a_index, x̃⟩` (`+1` for zero).
    pub sign: i8,
}

impl Recovery {
    /// Reads the metric off precomputed projections `z = A x̃`.
    pub fn from_projections(z: &[f64], d: usize) -> Self {
        let mut best = Recovery {
            value: 0.0,
            index: 0,
            sign: 1,
        };
        let mut best_abs = f64::NEG_INFINITY;
        for (i, &v) in z.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = Recovery {
                    value: 0.0,
                    index: i,
                    sign: if v < 0.0 { -1 } else { 1 },
                };
            }
        }
        best.value = best_abs.max(0.0) / (d as f64).sqrt();
        best
    }

    /// Alignment `max_i |z_i| / (√d ‖a_i‖)` from `z = A x̃`; zero rows are skipped.
    pub fn alignment_from_projections(z: &[f64], row_norms: &[f64], d: usize) -> Self {
        let sqrt_d = (d as f64).sqrt();
        let mut best = Recovery {
            value: 0.0,
            index: 0,
            sign: 1,
        };
        for (i, (&v, &n)) in z.iter().zip(row_norms).enumerate() {
            if n == 0.0 {
                continue;
            }
            let c = v.abs() / (sqrt_d * n);
            if c > best.value {
                best = Recovery {
                    value: c,
                    index: i,
                    sign: if v < 0.0 { -1 } else { 1 },
                };
            }
        }
        best
    }
}

/// `max_i |⟨a_i, x̃⟩| / √d` together with its argmax and sign.
pub fn recovery_metric(a: &ComponentMatrix, x_tilde: &[f64]) -> Result<Recovery> {
    Ok(Recovery::from_projections(&a.apply(x_tilde)?, a.d()))
}

/// `max_i |⟨a_i, x̃⟩| / (√d ‖a_i‖)` together with its argmax and sign.
pub fn alignment_metric(a: &ComponentMatrix, x_tilde: &[f64]) -> Result<Recovery> {
    Ok(Recovery::alignment_from_projections(
        &a.apply(x_tilde)?,
        a.row_norms(),
        a.d(),
    ))
}

/// Everything computed in one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// `y_t = A x̃_{t−1}`; kept only for full records.
    pub y: Option<Vec<f64>>,
    /// `f_t = y_t^{∘(2m−1)}`; kept only for full records.
    pub f: Option<Vec<f64>>,
    /// Unnormalized `x_t = Aᵀ f_t`.
    pub x: Vec<f64>,
    pub x_tilde: Vec<f64>,
    /// `S(x̃_t)`.
    pub objective_value: f64,
    /// Raw metric `max_i |⟨a_i, x̃_t⟩| / √d`.
    pub recovery: Recovery,
    /// Alignment `max_i |⟨a_i, x̃_t⟩| / (√d ‖a_i‖)`, which drives the recovery event.
    pub alignment: Recovery,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Recovered,
    MaxSteps,
    NumericalFailure,
}

/// Full record of one run from `x̃_0 = x_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub init: InitialVector,
    pub initial_objective: f64,
    pub initial_recovery: Recovery,
    pub initial_alignment: Recovery,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    /// Set when `termination == Recovered`: the best-aligned component, with sign.
    pub recovered_component: Option<Recovery>,
    pub options: RunOptions,
}

impl Trajectory {
    /// Number of completed steps.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `x̃_t` for `t ∈ 0..=len()`.
    pub fn x_tilde(&self, t: usize) -> &[f64] {
        if t == 0 {
            &self.init.values
        } else {
            &self.steps[t - 1].x_tilde
        }
    }

    /// `S(x̃_t)` for `t ∈ 0..=len()`.
    pub fn objective(&self, t: usize) -> f64 {
        if t == 0 {
            self.initial_objective
        } else {
            self.steps[t - 1].objective_value
        }
    }

    pub fn recovery(&self, t: usize) -> Recovery {
        if t == 0 {
            self.initial_recovery
        } else {
            self.steps[t - 1].recovery
        }
    }

    pub fn alignment(&self, t: usize) -> Recovery {
        if t == 0 {
            self.initial_alignment
        } else {
            self.steps[t - 1].alignment
        }
    }

    /// First step whose alignment reaches `tau`.
    pub fn first_step_reaching(&self, tau: f64) -> Option<usize> {
        self.steps
            .iter()
            .find(|s| s.alignment.value >= tau)
            .map(|s| s.t)
    }

    pub fn has_full_record(&self) -> bool {
        self.steps.iter().all(|s| s.y.is_some() && s.f.is_some())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_steps: usize,
    /// Recovery threshold `τ ∈ (0, 1]`.
    pub tau: f64,
    /// Keep the `k`-dimensional `y_t`, `f_t` of every step.
    pub record_full: bool,
    /// Stop as soon as the alignment reaches `tau`.
    pub stop_on_recovery: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_steps: 1000,
            tau: DEFAULT_TAU,
            record_full: false,
            stop_on_recovery: true,
        }
    }
}

impl RunOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument {
                field: "max_steps",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidArgument {
                field: "tau",
                reason: format!("must lie in (0, 1], got {}", self.tau),
            });
        }
        Ok(())
    }
}

/// One iteration from `x̃_{t−1}`; the returned record keeps `y` and `f`.
pub fn step(a: &ComponentMatrix, x_tilde_prev: &[f64], t: usize) -> Result<StepRecord> {
    Error::check_len(a.d(), x_tilde_prev.len())?;
    let radius = (a.d() as f64).sqrt();
    let norm = numeric::norm(x_tilde_prev);
    if norm.is_nan() || (norm - radius).abs() > 1e-6 * radius {
        return Err(Error::InvalidArgument {
            field: "x_tilde_prev",
            reason: format!("norm {norm} is not √d = {radius}"),
        });
    }
    let y = a.apply(x_tilde_prev)?;
    let (record, _) = step_from_projections(a, y, t)?;
    Ok(record)
}

/// Iteration body given `y_t`; also returns `A x̃_t`, which is `y_{t+1}`.
fn step_from_projections(
    a: &ComponentMatrix,
    y: Vec<f64>,
    t: usize,
) -> Result<(StepRecord, Vec<f64>)> {
    let failure = |reason| Error::NumericalFailure { step: t, reason };
    let f: Vec<f64> = y.iter().map(|&v| numeric::odd_power(v, a.m())).collect();
    if f.iter().any(|v| !v.is_finite()) {
        return Err(failure("non-finite f_t"));
    }
    let x = a.apply_transpose(&f)?;
    let norm = numeric::norm(&x);
    if !norm.is_finite() {
        return Err(failure("non-finite x_t"));
    }
    if norm < MIN_NORMALIZABLE {
        return Err(failure("x_t vanished"));
    }
    let scale = (a.d() as f64).sqrt() / norm;
    let x_tilde: Vec<f64> = x.iter().map(|v| v * scale).collect();
    let next = a.apply(&x_tilde)?;
    let record = StepRecord {
        t,
        objective_value: tensor::objective_from_projections(&next, a.m()),
        recovery: Recovery::from_projections(&next, a.d()),
        alignment: Recovery::alignment_from_projections(&next, a.row_norms(), a.d()),
        y: Some(y),
        f: Some(f),
        x,
        x_tilde,
    };
    Ok((record, next))
}

/// Iterates from `x0` until the alignment reaches `tau` (when
/// `stop_on_recovery`), `max_steps` is hit, or a step fails numerically.
/// Numerical failure is a termination status, not an error.
pub fn run(a: &ComponentMatrix, x0: &InitialVector, options: &RunOptions) -> Result<Trajectory> {
    options.validate()?;
    Error::check_len(a.d(), x0.d())?;
    let mut projections = a.apply(&x0.values)?;
    let mut traj = Trajectory {
        init: x0.clone(),
        initial_objective: tensor::objective_from_projections(&projections, a.m()),
        initial_recovery: Recovery::from_projections(&projections, a.d()),
        initial_alignment: Recovery::alignment_from_projections(&projections, a.row_norms(), a.d()),
        steps: Vec::with_capacity(options.max_steps.min(4096)),
        termination: Termination::MaxSteps,
        recovered_component: None,
        options: *options,
    };
    for t in 1..=options.max_steps {
        let (mut record, next) = match step_from_projections(a, projections, t) {
            Ok(out) => out,
            Err(Error::NumericalFailure { .. }) => {
                traj.termination = Termination::NumericalFailure;
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        if !options.record_full {
            record.y = None;
            record.f = None;
        }
        let alignment = record.alignment;
        traj.steps.push(record);
        projections = next;
        if alignment.value >= options.tau && (options.stop_on_recovery || t == options.max_steps) {
            traj.termination = Termination::Recovered;
            traj.recovered_component = Some(alignment);
            return Ok(traj);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_components, sample_sphere_init};
    use crate::tensor::{contract_explicit, contract_implicit, gradient, ExplicitTensor};

    fn full() -> RunOptions {
        RunOptions {
            record_full: true,
            ..RunOptions::default()
        }
    }

    #[test]
    fn aligned_single_component_is_fixed() {
        let a = ComponentMatrix::from_rows(&[vec![1.0, 0.0, 0.0, 0.0]], 2).unwrap();
        let rec = step(&a, &[2.0, 0.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(rec.x_tilde, vec![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(rec.x, vec![8.0, 0.0, 0.0, 0.0]);
        assert_eq!(rec.recovery.value, 1.0);
    }

    #[test]
    fn step_normalizes_and_matches_oracles() {
        let a = sample_components(5, 3, 2, 8).unwrap();
        let x0 = sample_sphere_init(3, 8).unwrap();
        let rec = step(&a, &x0.values, 1).unwrap();
        let n = numeric::norm(&rec.x_tilde);
        assert!((n - 3f64.sqrt()).abs() <= 1e-10 * 3f64.sqrt());
        let implicit = contract_implicit(&a, &x0.values).unwrap();
        assert_eq!(rec.x, implicit);
        let explicit =
            contract_explicit(&ExplicitTensor::from_components(&a).unwrap(), &x0.values).unwrap();
        assert!(numeric::relative_error(&rec.x, &explicit) <= 1e-12);
        let grad = gradient(&a, &x0.values).unwrap();
        let scaled: Vec<f64> = grad.iter().map(|g| g / 4.0).collect();
        assert!(numeric::relative_error(&rec.x, &scaled) <= 1e-10);
        let y = rec.y.unwrap();
        let f = rec.f.unwrap();
        assert!(y.iter().zip(&f).all(|(y, f)| y * y * y == *f));
    }

    #[test]
    fn step_rejects_off_sphere_input() {
        let a = sample_components(5, 3, 2, 8).unwrap();
        assert!(matches!(
            step(&a, &[1.0, 0.0, 0.0], 1),
            Err(Error::InvalidArgument { .. })
        ));
    }

    #[test]
    fn vanishing_iterate_is_numerical_failure() {
        let a = ComponentMatrix::from_rows(&[vec![1.0, 0.0]], 2).unwrap();
        let x0 = InitialVector::from_direction(&[0.0, 1.0]).unwrap();
        let traj = run(&a, &x0, &RunOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::NumericalFailure);
        assert!(traj.is_empty());
        assert!(matches!(
            step(&a, &x0.values, 1),
            Err(Error::NumericalFailure { step: 1, .. })
        ));
    }

    #[test]
    fn rank_one_recovers_quickly() {
        let a = sample_components(1, 16, 2, 3).unwrap();
        let x0 = sample_sphere_init(16, 3).unwrap();
        let opts = RunOptions {
            tau: 0.9,
            max_steps: 50,
            ..RunOptions::default()
        };
        let traj = run(&a, &x0, &opts).unwrap();
        assert_eq!(traj.termination, Termination::Recovered);
        assert!(traj.len() <= 50);
        assert_eq!(traj.recovered_component.unwrap().index, 0);
        assert!(traj.alignment(traj.len()).value >= 0.9);
        let raw = traj.recovery(traj.len()).value;
        assert!((raw - numeric::norm(a.row(0))).abs() <= 1e-12);
    }

    #[test]
    fn invalid_options() {
        let a = sample_components(2, 3, 2, 1).unwrap();
        let x0 = sample_sphere_init(3, 1).unwrap();
        for opts in [
            RunOptions {
                max_steps: 0,
                ..RunOptions::default()
            },
            RunOptions {
                tau: 0.0,
                ..RunOptions::default()
            },
            RunOptions {
                tau: 1.5,
                ..RunOptions::default()
            },
        ] {
            assert!(matches!(
                run(&a, &x0, &opts),
                Err(Error::InvalidArgument { .. })
            ));
        }
        let wrong = sample_sphere_init(4, 1).unwrap();
        assert!(run(&a, &wrong, &RunOptions::default()).is_err());
    }

    #[test]
    fn trajectory_is_chained_and_normalized() {
        let a = sample_components(60, 10, 2, 21).unwrap();
        let x0 = sample_sphere_init(10, 21).unwrap();
        let opts = RunOptions {
            max_steps: 12,
            stop_on_recovery: false,
            ..full()
        };
        let traj = run(&a, &x0, &opts).unwrap();
        assert_eq!(traj.len(), 12);
        for (i, s) in traj.steps.iter().enumerate() {
            assert_eq!(s.t, i + 1);
            let prev = traj.x_tilde(i);
            let y = a.apply(prev).unwrap();
            assert!(numeric::relative_error(s.y.as_ref().unwrap(), &y) <= 1e-12);
            let n = numeric::norm(&s.x_tilde);
            assert!((n - 10f64.sqrt()).abs() <= 1e-10 * 10f64.sqrt());
            assert!(s.objective_value >= 0.0);
            let direct = tensor::objective(&a, &s.x_tilde).unwrap();
            assert!((direct - s.objective_value).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn sign_equivariance() {
        let a = sample_components(40, 8, 2, 2).unwrap();
        let x0 = sample_sphere_init(8, 2).unwrap();
        let neg = InitialVector {
            values: x0.values.iter().map(|v| -v).collect(),
            ..x0.clone()
        };
        let opts = RunOptions {
            max_steps: 20,
            stop_on_recovery: false,
            ..RunOptions::default()
        };
        let p = run(&a, &x0, &opts).unwrap();
        let n = run(&a, &neg, &opts).unwrap();
        for t in 0..=p.len() {
            let flipped: Vec<f64> = n.x_tilde(t).iter().map(|v| -v).collect();
            assert!(numeric::relative_error(&flipped, p.x_tilde(t)) <= 1e-12);
        }
    }

    #[test]
    fn deterministic_runs() {
        let a = sample_components(40, 8, 3, 2).unwrap();
        let x0 = sample_sphere_init(8, 2).unwrap();
        let opts = RunOptions {
            max_steps: 30,
            ..full()
        };
        assert_eq!(run(&a, &x0, &opts).unwrap(), run(&a, &x0, &opts).unwrap());
    }

    #[test]
    fn metric_on_aligned_and_orthogonal_iterates() {
        let a = sample_components(6, 9, 2, 4).unwrap();
        let n = numeric::norm(a.row(0));
        let x: Vec<f64> = a.row(0).iter().map(|v| 3.0 * v / n).collect();
        let r = recovery_metric(&a, &x).unwrap();
        assert!(r.value >= n - 1e-12);
        if r.index == 0 {
            assert!((r.value - n).abs() <= 1e-12);
        }
        let single = ComponentMatrix::from_rows(&[vec![1.0, 0.0]], 2).unwrap();
        assert_eq!(
            recovery_metric(&single, &[0.0, 2f64.sqrt()]).unwrap().value,
            0.0
        );
    }

    #[test]
    fn alignment_is_scale_free() {
        let a = ComponentMatrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 3.0]], 2).unwrap();
        let r = alignment_metric(&a, &[-(2f64.sqrt()), 0.0]).unwrap();
        assert_eq!((r.index, r.sign), (0, -1));
        assert!((r.value - 1.0).abs() <= 1e-15);
        assert_eq!(
            recovery_metric(&a, &[-(2f64.sqrt()), 0.0]).unwrap().value,
            0.5
        );
    }

    #[test]
    fn ties_pick_smallest_index() {
        let r = Recovery::from_projections(&[1.0, -2.0, 2.0], 4);
        assert_eq!((r.index, r.sign, r.value), (1, -1, 1.0));
    }
}
