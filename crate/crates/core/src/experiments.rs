//! Monte-Carlo harness for the phase diagrams, the objective trajectory and
//! the conditioning diagnostics.
//!
//! Trial `i` of a cell with dimensions `(k, d)` always uses the instance seeded
//! by `derive_seed(base_seed, [k, d, i])`, whatever the cell's `T` and however
//! trials are scheduled. Trials run on the current rayon pool; results are
//! collected by trial index and reduced in that order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::{self, ConditioningDecomposition};
use crate::model::{sample_components, sample_sphere_init, ComponentMatrix, InitialVector};
use crate::numeric;
use crate::power_iter::{self, RunOptions, Termination, Trajectory};
use crate::rng::derive_seed;
use crate::{Error, Result};

pub const DEFAULT_RATIO: f64 = 1.8;
pub const DEFAULT_MEMORY_CAP_FLOATS: u64 = 200_000_000;
/// Largest `T_c` accepted by the objective-trajectory experiment.
pub const MAX_OBJECTIVE_STEPS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "phase_kd")]
    PhaseKd,
    #[serde(rename = "phase_dT")]
    PhaseDt,
    #[serde(rename = "objective_traj")]
    ObjectiveTraj,
    #[serde(rename = "diagnostics")]
    Diagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub k: usize,
    pub d: usize,
    /// Step budget (`T_c` for the objective trajectory).
    #[serde(rename = "T")]
    pub steps: usize,
}

impl GridCell {
    pub fn new(k: usize, d: usize, steps: usize) -> Self {
        Self { k, d, steps }
    }

    /// Cell on the curve `k = ⌈d^ratio⌉`.
    pub fn on_curve(d: usize, ratio: f64, steps: usize) -> Self {
        Self::new(numeric::ceil_pow(d, ratio), d, steps)
    }
}

fn default_tau() -> f64 {
    power_iter::DEFAULT_TAU
}
fn default_m() -> usize {
    2
}
fn default_ratio() -> f64 {
    DEFAULT_RATIO
}
fn default_cap() -> u64 {
    DEFAULT_MEMORY_CAP_FLOATS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub grid: Vec<GridCell>,
    pub trials: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub record_full: bool,
    /// `log k / log d` for `phase_dT` grids.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Cap on `2·k·T·trials` retained floats for `diagnostics`.
    #[serde(default = "default_cap")]
    pub memory_cap_floats: u64,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, grid: Vec<GridCell>, trials: usize, base_seed: u64) -> Self {
        Self {
            kind,
            grid,
            trials,
            tau: default_tau(),
            m: default_m(),
            base_seed,
            record_full: kind == ExperimentKind::Diagnostics,
            ratio: default_ratio(),
            memory_cap_floats: default_cap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::config("grid", "must contain at least one cell"));
        }
        for (i, cell) in self.grid.iter().enumerate() {
            for (name, value) in [("k", cell.k), ("d", cell.d), ("T", cell.steps)] {
                if value == 0 {
                    return Err(Error::config(
                        format!("grid[{i}].{name}"),
                        "must be at least 1",
                    ));
                }
            }
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(
                "tau",
                format!("must lie in (0, 1], got {}", self.tau),
            ));
        }
        if self.m < 2 {
            return Err(Error::config(
                "m",
                format!("must be at least 2, got {}", self.m),
            ));
        }
        match self.kind {
            ExperimentKind::PhaseKd => {}
            ExperimentKind::PhaseDt => {
                if !(self.ratio.is_finite() && self.ratio > 0.0) {
                    return Err(Error::config("ratio", "must be positive"));
                }
                for (i, cell) in self.grid.iter().enumerate() {
                    if !on_ratio_curve(cell, self.ratio) {
                        return Err(Error::config(
                            format!("grid[{i}].k"),
                            format!(
                                "k = {} is off the curve k = ⌈d^{}⌉ = {} for d = {}",
                                cell.k,
                                self.ratio,
                                numeric::ceil_pow(cell.d, self.ratio),
                                cell.d
                            ),
                        ));
                    }
                }
            }
            ExperimentKind::ObjectiveTraj => {
                if self.m != 2 {
                    return Err(Error::config("m", "the 3k + 20td prediction is for m = 2"));
                }
                for (i, cell) in self.grid.iter().enumerate() {
                    if cell.steps > MAX_OBJECTIVE_STEPS {
                        return Err(Error::config(
                            format!("grid[{i}].T"),
                            format!("T_c must be at most {MAX_OBJECTIVE_STEPS}"),
                        ));
                    }
                }
            }
            ExperimentKind::Diagnostics => {
                if !self.record_full {
                    return Err(Error::config(
                        "record_full",
                        "diagnostics need full records",
                    ));
                }
                for (i, cell) in self.grid.iter().enumerate() {
                    let floats = 2 * cell.k as u128 * cell.steps as u128 * self.trials as u128;
                    if floats > self.memory_cap_floats as u128 {
                        return Err(Error::config(
                            format!("grid[{i}]"),
                            format!(
                                "needs {floats} floats, above memory_cap_floats = {}",
                                self.memory_cap_floats
                            ),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn expect_kind(&self, kind: ExperimentKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::config(
                "kind",
                format!("expected {kind:?}, got {:?}", self.kind),
            ));
        }
        self.validate()
    }
}

/// `k = ⌈d^ratio⌉`, or `log k / log d = ratio` to 1e-9 for exact powers.
fn on_ratio_curve(cell: &GridCell, ratio: f64) -> bool {
    if cell.k == numeric::ceil_pow(cell.d, ratio) {
        return true;
    }
    cell.d > 1 && ((cell.k as f64).ln() / (cell.d as f64).ln() - ratio).abs() <= 1e-9
}

/// Seed of trial `trial` for dimensions `(k, d)`.
pub fn trial_seed(base_seed: u64, k: usize, d: usize, trial: usize) -> u64 {
    derive_seed(base_seed, &[k as u64, d as u64, trial as u64])
}

/// The random instance `(A, x₀)` of one trial.
pub fn trial_instance(
    base_seed: u64,
    k: usize,
    d: usize,
    m: usize,
    trial: usize,
) -> Result<(ComponentMatrix, InitialVector)> {
    let seed = trial_seed(base_seed, k, d, trial);
    Ok((
        sample_components(k, d, m, seed)?,
        sample_sphere_init(d, seed)?,
    ))
}

/// Runs `trials` independent trajectories in parallel and maps each one.
pub fn map_trials<T, F>(
    base_seed: u64,
    k: usize,
    d: usize,
    m: usize,
    trials: usize,
    options: &RunOptions,
    map: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &ComponentMatrix, &Trajectory) -> Result<T> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let (a, x0) = trial_instance(base_seed, k, d, m, trial)?;
            let traj = power_iter::run(&a, &x0, options)?;
            map(trial, &a, &traj)
        })
        .collect()
}

/// Success statistics of one `(k, d, T)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub k: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub steps: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean first step reaching `τ` over successful trials.
    pub mean_steps_to_recovery: Option<f64>,
    pub failures_numerical: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellRecord>,
}

impl SweepResult {
    pub fn cell(&self, k: usize, d: usize, steps: usize) -> Option<&CellRecord> {
        self.cells
            .iter()
            .find(|c| c.k == k && c.d == d && c.steps == steps)
    }
}

#[derive(Clone, Copy, Debug)]
struct TrialOutcome {
    first_recovery: Option<usize>,
    /// Steps completed before a numerical failure.
    failed_after: Option<usize>,
}

fn success_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    // cells sharing (k, d) share instances; run each once with the largest T
    let mut groups: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for cell in &config.grid {
        let entry = groups.entry((cell.k, cell.d)).or_insert(0);
        *entry = (*entry).max(cell.steps);
    }
    let mut outcomes: BTreeMap<(usize, usize), Vec<TrialOutcome>> = BTreeMap::new();
    for (&(k, d), &max_steps) in &groups {
        let options = RunOptions {
            max_steps,
            tau: config.tau,
            record_full: false,
            stop_on_recovery: true,
        };
        let list = map_trials(
            config.base_seed,
            k,
            d,
            config.m,
            config.trials,
            &options,
            |_, _, traj| {
                Ok(TrialOutcome {
                    first_recovery: traj.first_step_reaching(config.tau),
                    failed_after: (traj.termination == Termination::NumericalFailure)
                        .then_some(traj.len()),
                })
            },
        )?;
        outcomes.insert((k, d), list);
    }
    let cells = config
        .grid
        .iter()
        .map(|cell| {
            let list = &outcomes[&(cell.k, cell.d)];
            let recovered: Vec<f64> = list
                .iter()
                .filter_map(|o| o.first_recovery.filter(|&s| s <= cell.steps))
                .map(|s| s as f64)
                .collect();
            let failures = list
                .iter()
                .filter(|o| o.failed_after.is_some_and(|s| s < cell.steps))
                .count();
            CellRecord {
                k: cell.k,
                d: cell.d,
                steps: cell.steps,
                trials: config.trials,
                successes: recovered.len(),
                success_rate: recovered.len() as f64 / config.trials as f64,
                mean_steps_to_recovery: (!recovered.is_empty()).then(|| numeric::mean(&recovered)),
                failures_numerical: failures,
            }
        })
        .collect();
    Ok(SweepResult { cells })
}

/// Success probability over a `(k, d)` grid within each cell's `T` steps.
pub fn run_phase_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.expect_kind(ExperimentKind::PhaseKd)?;
    success_sweep(config)
}

/// Success probability after `T` steps along the curve `k = ⌈d^ratio⌉`.
pub fn run_dt_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.expect_kind(ExperimentKind::PhaseDt)?;
    success_sweep(config)
}

/// `3k + 20td`.
pub fn predicted_objective(k: usize, d: usize, t: usize) -> f64 {
    (3 * k + 20 * t * d) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRow {
    pub t: usize,
    pub mean_s: f64,
    pub std_s: f64,
    pub predicted_s: f64,
    /// Fraction of trials with `S` strictly increasing over `0..=t`.
    pub monotone_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveCell {
    pub k: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub steps: usize,
    pub trials: usize,
    /// Trials dropped from the statistics after a numerical failure.
    pub failures_numerical: usize,
    pub rows: Vec<ObjectiveRow>,
    /// `S(x̃_0..=x̃_T)` per completed trial, in trial order.
    pub series: Vec<Vec<f64>>,
}

impl ObjectiveCell {
    /// Mean of `S(x̃_{t+1}) − S(x̃_t)` over completed trials.
    pub fn mean_increment(&self, t: usize) -> f64 {
        let inc: Vec<f64> = self.series.iter().map(|s| s[t + 1] - s[t]).collect();
        numeric::mean(&inc)
    }

    /// Fraction of completed trials with `S` strictly increasing over `0..=upto`.
    pub fn monotone_fraction(&self, upto: usize) -> f64 {
        monotone_fraction(&self.series, upto)
    }
}

fn monotone_fraction(series: &[Vec<f64>], upto: usize) -> f64 {
    if series.is_empty() {
        return f64::NAN;
    }
    let n = series
        .iter()
        .filter(|s| s[..=upto].windows(2).all(|w| w[1] > w[0]))
        .count();
    n as f64 / series.len() as f64
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSweep {
    pub cells: Vec<ObjectiveCell>,
}

/// `S(x̃_t)` statistics for `t ∈ 0..=T_c` against the `3k + 20td` prediction.
/// Runs never stop early on recovery.
pub fn run_objective_traj(config: &ExperimentConfig) -> Result<ObjectiveSweep> {
    config.expect_kind(ExperimentKind::ObjectiveTraj)?;
    let cells = config
        .grid
        .iter()
        .map(|cell| {
            let options = RunOptions {
                max_steps: cell.steps,
                tau: config.tau,
                record_full: false,
                stop_on_recovery: false,
            };
            let per_trial = map_trials(
                config.base_seed,
                cell.k,
                cell.d,
                config.m,
                config.trials,
                &options,
                |_, _, traj| {
                    Ok((traj.len() == cell.steps).then(|| {
                        (0..=cell.steps)
                            .map(|t| traj.objective(t))
                            .collect::<Vec<_>>()
                    }))
                },
            )?;
            let failures = per_trial.iter().filter(|s| s.is_none()).count();
            let series: Vec<Vec<f64>> = per_trial.into_iter().flatten().collect();
            let rows = (0..=cell.steps)
                .map(|t| {
                    let column: Vec<f64> = series.iter().map(|s| s[t]).collect();
                    ObjectiveRow {
                        t,
                        mean_s: numeric::mean(&column),
                        std_s: numeric::sample_std(&column),
                        predicted_s: predicted_objective(cell.k, cell.d, t),
                        monotone_fraction: monotone_fraction(&series, t),
                    }
                })
                .collect();
            Ok(ObjectiveCell {
                k: cell.k,
                d: cell.d,
                steps: cell.steps,
                trials: config.trials,
                failures_numerical: failures,
                rows,
                series,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ObjectiveSweep { cells })
}

/// One `(trial, t)` row of the conditioning diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub trial: usize,
    pub t: usize,
    /// `‖y_t − g_t − v_t‖ / ‖y_t‖`.
    pub residual: f64,
    /// `|Σ_i α_{i,t}² − 1|`.
    pub alpha_sq_err: f64,
    pub alpha1: f64,
    /// `P/Q` of `x̃_{t−1}`; `None` once `Q` vanished.
    pub p_over_q: Option<f64>,
    /// `‖v_t‖² / ‖Π^⊥_{x₀} x̃_{t−1}‖²`; `None` while the denominator vanishes.
    pub vt_ratio: Option<f64>,
    /// `‖f_t‖² / k`.
    pub f_norm_over_k: f64,
}

impl DiagnosticsRow {
    pub fn from_decomposition(
        trial: usize,
        dec: &ConditioningDecomposition,
        traj: &Trajectory,
    ) -> Result<Self> {
        Ok(Self {
            trial,
            t: dec.t,
            residual: dec.residual(),
            alpha_sq_err: dec.alpha_sq_error(),
            alpha1: dec.alpha1(),
            p_over_q: conditioning::trapped_ratio(dec),
            vt_ratio: conditioning::vt_norm_ratio(dec),
            f_norm_over_k: conditioning::f_norm_stat(traj, dec.t)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsCell {
    pub k: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub steps: usize,
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsCell {
    pub fn rows_at(&self, t: usize) -> impl Iterator<Item = &DiagnosticsRow> + '_ {
        self.rows.iter().filter(move |r| r.t == t)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSweep {
    pub cells: Vec<DiagnosticsCell>,
}

/// Per-`(trial, t)` conditioning diagnostics for `t ∈ 1..=T`.
pub fn run_diagnostics(config: &ExperimentConfig) -> Result<DiagnosticsSweep> {
    config.expect_kind(ExperimentKind::Diagnostics)?;
    let cells = config
        .grid
        .iter()
        .map(|cell| {
            let options = RunOptions {
                max_steps: cell.steps,
                tau: config.tau,
                record_full: true,
                stop_on_recovery: false,
            };
            let per_trial = map_trials(
                config.base_seed,
                cell.k,
                cell.d,
                config.m,
                config.trials,
                &options,
                |trial, a, traj| {
                    conditioning::decompose_all(a, traj, traj.len())?
                        .iter()
                        .map(|dec| DiagnosticsRow::from_decomposition(trial, dec, traj))
                        .collect::<Result<Vec<_>>>()
                },
            )?;
            Ok(DiagnosticsCell {
                k: cell.k,
                d: cell.d,
                steps: cell.steps,
                rows: per_trial.into_iter().flatten().collect(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(DiagnosticsSweep { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kind: ExperimentKind, grid: Vec<GridCell>, trials: usize) -> ExperimentConfig {
        ExperimentConfig::new(kind, grid, trials, 7)
    }

    #[test]
    fn validation_names_the_field() {
        let bad = config(ExperimentKind::PhaseKd, vec![], 3);
        assert!(
            matches!(bad.validate(), Err(Error::InvalidConfig { field, .. }) if field == "grid")
        );
        let bad = config(ExperimentKind::PhaseKd, vec![GridCell::new(3, 0, 4)], 3);
        assert!(
            matches!(bad.validate(), Err(Error::InvalidConfig { field, .. }) if field == "grid[0].d")
        );
        let bad = config(ExperimentKind::PhaseKd, vec![GridCell::new(3, 3, 4)], 0);
        assert!(
            matches!(bad.validate(), Err(Error::InvalidConfig { field, .. }) if field == "trials")
        );
        let bad = config(ExperimentKind::PhaseDt, vec![GridCell::new(200, 20, 4)], 3);
        assert!(
            matches!(bad.validate(), Err(Error::InvalidConfig { field, .. }) if field == "grid[0].k")
        );
        let good = config(
            ExperimentKind::PhaseDt,
            vec![GridCell::on_curve(20, 1.8, 4)],
            3,
        );
        assert!(good.validate().is_ok());
        let bad = config(
            ExperimentKind::ObjectiveTraj,
            vec![GridCell::new(30, 5, 11)],
            3,
        );
        assert!(bad.validate().is_err());
        let mut bad = config(
            ExperimentKind::Diagnostics,
            vec![GridCell::new(30, 5, 3)],
            3,
        );
        bad.record_full = false;
        assert!(
            matches!(bad.validate(), Err(Error::InvalidConfig { field, .. }) if field == "record_full")
        );
        let mut bad = config(
            ExperimentKind::Diagnostics,
            vec![GridCell::new(1000, 5, 10)],
            10,
        );
        bad.memory_cap_floats = 1000;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn kind_must_match_runner() {
        let c = config(ExperimentKind::PhaseKd, vec![GridCell::new(4, 4, 5)], 2);
        assert!(
            matches!(run_dt_sweep(&c), Err(Error::InvalidConfig { field, .. }) if field == "kind")
        );
    }

    #[test]
    fn sweep_is_deterministic_and_consistent() {
        let c = config(
            ExperimentKind::PhaseKd,
            vec![
                GridCell::new(8, 8, 100),
                GridCell::new(8, 8, 3),
                GridCell::new(40, 6, 50),
            ],
            6,
        );
        let r = run_phase_sweep(&c).unwrap();
        assert_eq!(r, run_phase_sweep(&c).unwrap());
        for cell in &r.cells {
            assert!(cell.successes <= cell.trials);
            assert_eq!(
                cell.success_rate,
                cell.successes as f64 / cell.trials as f64
            );
        }
        assert!(r.cell(8, 8, 3).unwrap().successes <= r.cell(8, 8, 100).unwrap().successes);
    }

    #[test]
    fn shared_instances_match_standalone_runs() {
        let c = config(
            ExperimentKind::PhaseKd,
            vec![GridCell::new(10, 6, 4), GridCell::new(10, 6, 60)],
            5,
        );
        let r = run_phase_sweep(&c).unwrap();
        let alone = config(ExperimentKind::PhaseKd, vec![GridCell::new(10, 6, 4)], 5);
        assert_eq!(run_phase_sweep(&alone).unwrap().cells[0], r.cells[0]);
    }

    #[test]
    fn objective_rows() {
        let c = config(
            ExperimentKind::ObjectiveTraj,
            vec![GridCell::new(200, 12, 3)],
            8,
        );
        let s = run_objective_traj(&c).unwrap();
        let cell = &s.cells[0];
        assert_eq!(cell.rows.len(), 4);
        assert_eq!(cell.series.len(), 8);
        assert_eq!(cell.rows[2].predicted_s, 3.0 * 200.0 + 40.0 * 12.0);
        assert_eq!(cell.rows[0].monotone_fraction, 1.0);
        for w in cell.rows.windows(2) {
            assert!(w[1].monotone_fraction <= w[0].monotone_fraction);
        }
    }

    #[test]
    fn rank_one_objective_plateaus() {
        let c = config(
            ExperimentKind::ObjectiveTraj,
            vec![GridCell::new(1, 9, 4)],
            3,
        );
        let s = run_objective_traj(&c).unwrap();
        for (trial, series) in s.cells[0].series.iter().enumerate() {
            let (a, _) = trial_instance(7, 1, 9, 2, trial).unwrap();
            let plateau = numeric::norm_sq(a.row(0)).powi(2) * 81.0;
            for &v in &series[1..] {
                assert!((v - plateau).abs() <= 1e-12 * plateau);
            }
        }
    }

    #[test]
    fn diagnostics_rows() {
        let c = config(
            ExperimentKind::Diagnostics,
            vec![GridCell::new(300, 20, 5)],
            3,
        );
        let s = run_diagnostics(&c).unwrap();
        let cell = &s.cells[0];
        assert_eq!(cell.rows.len(), 15);
        for row in &cell.rows {
            assert!(row.residual <= 1e-8);
            assert!(row.alpha_sq_err <= 1e-8);
        }
        assert!(cell
            .rows_at(1)
            .all(|r| r.vt_ratio.is_none() && (r.alpha1 - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn trial_seeds_ignore_step_budget() {
        assert_eq!(trial_seed(1, 5, 6, 2), trial_seed(1, 5, 6, 2));
        assert_ne!(trial_seed(1, 5, 6, 2), trial_seed(1, 5, 6, 3));
        assert_ne!(trial_seed(1, 5, 6, 2), trial_seed(1, 6, 5, 2));
    }
}
