//! CSV/JSON emission, config loading and run manifests.
//!
//! CSVs are written by hand: fixed column order, `\n` line endings, floats in
//! Rust's shortest round-trip `Display` form, absent values as empty fields.
//! Identical inputs therefore give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::experiments::{
    CellRecord, DiagnosticsCell, DiagnosticsRow, ExperimentConfig, ObjectiveRow, SweepResult,
};
use crate::power_iter::{Termination, Trajectory};
use crate::{Error, Result};

pub const SWEEP_HEADER: &str =
    "k,d,T,trials,successes,success_rate,mean_steps_to_recovery,numerical_failures";
pub const OBJECTIVE_HEADER: &str = "t,mean_S,std_S,predicted_S,monotone_fraction";
pub const DIAGNOSTICS_HEADER: &str =
    "trial,t,residual,alpha_sq_err,alpha1,P_over_Q,vt_ratio,f_norm_over_k";

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for c in &result.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.k,
            c.d,
            c.steps,
            c.trials,
            c.successes,
            c.success_rate,
            opt(c.mean_steps_to_recovery),
            c.failures_numerical
        );
    }
    out
}

pub fn objective_csv(rows: &[ObjectiveRow]) -> String {
    let mut out = String::new();
    out.push_str(OBJECTIVE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.t, r.mean_s, r.std_s, r.predicted_s, r.monotone_fraction
        );
    }
    out
}

pub fn diagnostics_csv(rows: &[DiagnosticsRow]) -> String {
    let mut out = String::new();
    out.push_str(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.trial,
            r.t,
            r.residual,
            r.alpha_sq_err,
            r.alpha1,
            opt(r.p_over_q),
            opt(r.vt_ratio),
            r.f_norm_over_k
        );
    }
    out
}

/// Splits a CSV body after checking the header; yields `(line_number, fields)`.
fn records<'a>(
    text: &'a str,
    header: &str,
    source: &Path,
) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)> + 'a> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        other => {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                reason: format!(
                    "expected header `{header}`, found `{}`",
                    other.unwrap_or("")
                ),
            })
        }
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 2, l.split(',').collect())))
}

struct Fields<'a> {
    fields: Vec<&'a str>,
    line: usize,
    source: &'a Path,
}

impl<'a> Fields<'a> {
    fn new(fields: Vec<&'a str>, expected: usize, line: usize, source: &'a Path) -> Result<Self> {
        let f = Self {
            fields,
            line,
            source,
        };
        if f.fields.len() != expected {
            return Err(f.error(format!(
                "expected {expected} fields, got {}",
                f.fields.len()
            )));
        }
        Ok(f)
    }

    fn error(&self, reason: String) -> Error {
        Error::Parse {
            path: self.source.to_path_buf(),
            reason: format!("line {}: {reason}", self.line),
        }
    }

    fn get<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        self.fields[i].parse().map_err(|_| {
            self.error(format!(
                "cannot parse field {} (`{}`)",
                i + 1,
                self.fields[i]
            ))
        })
    }

    fn get_opt(&self, i: usize) -> Result<Option<f64>> {
        if self.fields[i].is_empty() {
            Ok(None)
        } else {
            self.get(i).map(Some)
        }
    }
}

pub fn parse_sweep_csv(text: &str, source: &Path) -> Result<SweepResult> {
    let cells = records(text, SWEEP_HEADER, source)?
        .map(|(line, fields)| {
            let f = Fields::new(fields, 8, line, source)?;
            Ok(CellRecord {
                k: f.get(0)?,
                d: f.get(1)?,
                steps: f.get(2)?,
                trials: f.get(3)?,
                successes: f.get(4)?,
                success_rate: f.get(5)?,
                mean_steps_to_recovery: f.get_opt(6)?,
                failures_numerical: f.get(7)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult { cells })
}

pub fn parse_objective_csv(text: &str, source: &Path) -> Result<Vec<ObjectiveRow>> {
    records(text, OBJECTIVE_HEADER, source)?
        .map(|(line, fields)| {
            let f = Fields::new(fields, 5, line, source)?;
            Ok(ObjectiveRow {
                t: f.get(0)?,
                mean_s: f.get(1)?,
                std_s: f.get(2)?,
                predicted_s: f.get(3)?,
                monotone_fraction: f.get(4)?,
            })
        })
        .collect()
}

pub fn parse_diagnostics_csv(text: &str, source: &Path) -> Result<Vec<DiagnosticsRow>> {
    records(text, DIAGNOSTICS_HEADER, source)?
        .map(|(line, fields)| {
            let f = Fields::new(fields, 8, line, source)?;
            Ok(DiagnosticsRow {
                trial: f.get(0)?,
                t: f.get(1)?,
                residual: f.get(2)?,
                alpha_sq_err: f.get(3)?,
                alpha1: f.get(4)?,
                p_over_q: f.get_opt(5)?,
                vt_ratio: f.get_opt(6)?,
                f_norm_over_k: f.get(7)?,
            })
        })
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<()> {
    write_text(path, &sweep_csv(result))
}

pub fn read_sweep_csv(path: &Path) -> Result<SweepResult> {
    parse_sweep_csv(&read_text(path)?, path)
}

pub fn write_objective_csv(rows: &[ObjectiveRow], path: &Path) -> Result<()> {
    write_text(path, &objective_csv(rows))
}

pub fn read_objective_csv(path: &Path) -> Result<Vec<ObjectiveRow>> {
    parse_objective_csv(&read_text(path)?, path)
}

pub fn write_diagnostics_csv(cell: &DiagnosticsCell, path: &Path) -> Result<()> {
    write_text(path, &diagnostics_csv(&cell.rows))
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    parse_diagnostics_csv(&read_text(path)?, path)
}

/// Serialized view of a [`Trajectory`]; component indices are 1-based.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryJson {
    pub k: usize,
    pub d: usize,
    pub m: usize,
    pub seed: u64,
    pub tau: f64,
    pub max_steps: usize,
    pub termination: Termination,
    /// 1-based index of the recovered component.
    pub component: Option<usize>,
    pub sign: Option<i8>,
    pub steps_taken: usize,
    pub steps: Vec<StepJson>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct StepJson {
    pub t: usize,
    pub objective: f64,
    pub recovery: f64,
    pub alignment: f64,
    /// 1-based index of the best-aligned component.
    pub best_component: usize,
    pub x_tilde: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f: Option<Vec<f64>>,
}

impl TrajectoryJson {
    /// `k`, `m` and `seed` describe the component matrix the trajectory ran on.
    pub fn new(traj: &Trajectory, k: usize, m: usize, seed: u64) -> Self {
        let initial = StepJson {
            t: 0,
            objective: traj.initial_objective,
            recovery: traj.initial_recovery.value,
            alignment: traj.initial_alignment.value,
            best_component: traj.initial_alignment.index + 1,
            x_tilde: traj.init.values.clone(),
            y: None,
            f: None,
        };
        let steps = std::iter::once(initial)
            .chain(traj.steps.iter().map(|s| StepJson {
                t: s.t,
                objective: s.objective_value,
                recovery: s.recovery.value,
                alignment: s.alignment.value,
                best_component: s.alignment.index + 1,
                x_tilde: s.x_tilde.clone(),
                y: s.y.clone(),
                f: s.f.clone(),
            }))
            .collect();
        Self {
            k,
            d: traj.init.d(),
            m,
            seed,
            tau: traj.options.tau,
            max_steps: traj.options.max_steps,
            termination: traj.termination,
            component: traj.recovered_component.map(|r| r.index + 1),
            sign: traj.recovered_component.map(|r| r.sign),
            steps_taken: traj.len(),
            steps,
        }
    }
}

pub fn trajectory_json(traj: &Trajectory, k: usize, m: usize, seed: u64) -> String {
    let mut s = serde_json::to_string_pretty(&TrajectoryJson::new(traj, k, m, seed))
        .expect("trajectory serializes");
    s.push('\n');
    s
}

pub fn write_trajectory_json(
    traj: &Trajectory,
    k: usize,
    m: usize,
    seed: u64,
    path: &Path,
) -> Result<()> {
    write_text(path, &trajectory_json(traj, k, m, seed))
}

/// Parses an experiment config; unknown fields are rejected.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let field = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
            .unwrap_or("<json>")
            .to_string();
        Error::config(field, msg)
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&read_text(path)?)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub config_echo: ExperimentConfig,
    pub artifact_version: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub output_paths: Vec<PathBuf>,
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    write_text(path, &s)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{predicted_objective, ExperimentKind, GridCell};

    fn here() -> &'static Path {
        Path::new("<test>")
    }

    #[test]
    fn empty_sweep_is_header_only() {
        assert_eq!(
            sweep_csv(&SweepResult::default()),
            format!("{SWEEP_HEADER}\n")
        );
        assert_eq!(
            parse_sweep_csv(&sweep_csv(&SweepResult::default()), here()).unwrap(),
            SweepResult::default()
        );
    }

    #[test]
    fn predicted_column_value() {
        let row = ObjectiveRow {
            t: 2,
            mean_s: 7012.5,
            std_s: 80.25,
            predicted_s: predicted_objective(1000, 100, 2),
            monotone_fraction: 1.0,
        };
        let text = objective_csv(&[row]);
        assert_eq!(text, format!("{OBJECTIVE_HEADER}\n2,7012.5,80.25,7000,1\n"));
    }

    #[test]
    fn absent_values_are_empty_fields() {
        let r = SweepResult {
            cells: vec![CellRecord {
                k: 4,
                d: 3,
                steps: 10,
                trials: 3,
                successes: 0,
                success_rate: 0.0,
                mean_steps_to_recovery: None,
                failures_numerical: 1,
            }],
        };
        let text = sweep_csv(&r);
        assert_eq!(text.lines().nth(1).unwrap(), "4,3,10,3,0,0,,1");
        assert_eq!(parse_sweep_csv(&text, here()).unwrap(), r);
    }

    #[test]
    fn header_is_checked() {
        let err = parse_sweep_csv("k,d\n1,2\n", here()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = parse_objective_csv(&format!("{OBJECTIVE_HEADER}\n1,2\n"), here()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let text = r#"{"kind":"phase_kd","grid":[{"k":4,"d":4,"T":5}],"trials":2,"tua":0.9}"#;
        match parse_config(text) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "tua"),
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"{"kind":"phase_kd","grid":[{"k":4,"d":4,"T":5,"x":1}],"trials":2}"#;
        assert!(parse_config(text).is_err());
    }

    #[test]
    fn config_echo_round_trips() {
        let text =
            r#"{"kind":"phase_dT","grid":[{"k":220,"d":20,"T":8}],"trials":2,"base_seed":3}"#;
        let c = parse_config(text).unwrap();
        assert_eq!(c.kind, ExperimentKind::PhaseDt);
        assert_eq!(c.grid, vec![GridCell::new(220, 20, 8)]);
        assert_eq!(c.tau, 0.95);
        let echoed = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config(&echoed).unwrap(), c);
    }
}
