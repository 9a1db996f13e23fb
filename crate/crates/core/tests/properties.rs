use std::path::Path;

use proptest::prelude::*;
use tpi::experiments::{CellRecord, ObjectiveRow, SweepResult};
use tpi::io::{objective_csv, parse_objective_csv, parse_sweep_csv, sweep_csv};
use tpi::numeric::{dot, relative_error};
use tpi::power_iter::{run, RunOptions};
use tpi::tensor::{contract_explicit, contract_implicit, gradient, objective, ExplicitTensor};
use tpi::{sample_components, sample_sphere_init, InitialVector};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn implicit_matches_explicit(d in 1usize..=4, k in 1usize..=8, m in 2usize..=3, seed in any::<u64>()) {
        let a = sample_components(k, d, m, seed).unwrap();
        let x = sample_sphere_init(d, seed ^ 1).unwrap().values;
        let t = ExplicitTensor::from_components(&a).unwrap();
        let err = relative_error(&contract_implicit(&a, &x).unwrap(), &contract_explicit(&t, &x).unwrap());
        prop_assert!(err <= 1e-10, "err {err}");
    }

    #[test]
    fn objective_is_contraction_against_x(d in 1usize..=12, k in 1usize..=40, m in 2usize..=3, seed in any::<u64>()) {
        let a = sample_components(k, d, m, seed).unwrap();
        let x = sample_sphere_init(d, seed ^ 2).unwrap().values;
        let s = objective(&a, &x).unwrap();
        let c = contract_implicit(&a, &x).unwrap();
        prop_assert!(rel(dot(&c, &x), s) <= 1e-10);
        let g = gradient(&a, &x).unwrap();
        prop_assert!(relative_error(&g.iter().map(|v| v / (2 * m) as f64).collect::<Vec<_>>(), &c) <= 1e-12);
    }

    #[test]
    fn sign_and_scale_laws(d in 1usize..=12, k in 1usize..=40, m in 2usize..=3, seed in any::<u64>(), big in any::<bool>()) {
        let a = sample_components(k, d, m, seed).unwrap();
        let x = sample_sphere_init(d, seed ^ 3).unwrap().values;
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let c = contract_implicit(&a, &x).unwrap();
        let c_neg = contract_implicit(&a, &neg).unwrap();
        prop_assert!(c.iter().zip(&c_neg).all(|(p, q)| *p == -*q));
        prop_assert_eq!(objective(&a, &x).unwrap(), objective(&a, &neg).unwrap());

        let scale = if big { 2.0 } else { 0.5 };
        let scaled: Vec<f64> = x.iter().map(|v| scale * v).collect();
        let expect = scale.powi(2 * m as i32) * objective(&a, &x).unwrap();
        prop_assert!(rel(objective(&a, &scaled).unwrap(), expect) <= 1e-10);
    }

    #[test]
    fn iteration_is_sign_equivariant(d in 2usize..=10, k in 1usize..=30, seed in any::<u64>()) {
        let a = sample_components(k, d, 2, seed).unwrap();
        let x0 = sample_sphere_init(d, seed ^ 4).unwrap();
        let neg = InitialVector::from_direction(&x0.values.iter().map(|v| -v).collect::<Vec<_>>()).unwrap();
        let opts = RunOptions { max_steps: 6, stop_on_recovery: false, ..Default::default() };
        let p = run(&a, &x0, &opts).unwrap();
        let q = run(&a, &neg, &opts).unwrap();
        prop_assert_eq!(p.len(), q.len());
        for t in 1..=p.len() {
            let flipped: Vec<f64> = q.x_tilde(t).iter().map(|v| -v).collect();
            prop_assert!(relative_error(&flipped, p.x_tilde(t)) <= 1e-12);
            let norm_sq = dot(p.x_tilde(t), p.x_tilde(t));
            prop_assert!(rel(norm_sq, d as f64) <= 1e-10);
        }
    }

    #[test]
    fn sweep_csv_round_trips(
        cells in prop::collection::vec(
            (1usize..5000, 1usize..300, 1usize..1000, 1usize..200, any::<u16>(), prop::option::of(0.0f64..1000.0), 0usize..5),
            0..6,
        )
    ) {
        let result = SweepResult {
            cells: cells
                .into_iter()
                .map(|(k, d, steps, trials, s, mean_steps, fails)| {
                    let successes = s as usize % (trials + 1);
                    CellRecord {
                        k,
                        d,
                        steps,
                        trials,
                        successes,
                        success_rate: successes as f64 / trials as f64,
                        mean_steps_to_recovery: mean_steps,
                        failures_numerical: fails,
                    }
                })
                .collect(),
        };
        let text = sweep_csv(&result);
        prop_assert_eq!(parse_sweep_csv(&text, Path::new("mem")).unwrap(), result);
    }

    #[test]
    fn objective_csv_round_trips(
        rows in prop::collection::vec((any::<f64>(), 0.0f64..1e6, 0.0f64..=1.0), 1..8)
            .prop_filter("finite", |rows| rows.iter().all(|r| r.0.is_finite()))
    ) {
        let rows: Vec<ObjectiveRow> = rows
            .into_iter()
            .enumerate()
            .map(|(t, (mean_s, std_s, frac))| ObjectiveRow {
                t,
                mean_s,
                std_s,
                predicted_s: (3000 + 2000 * t) as f64,
                monotone_fraction: frac,
            })
            .collect();
        let text = objective_csv(&rows);
        prop_assert_eq!(parse_objective_csv(&text, Path::new("mem")).unwrap(), rows);
    }
}

#[test]
fn step_equals_gradient_over_two_m() {
    let a = sample_components(80, 12, 3, 5).unwrap();
    let x0 = sample_sphere_init(12, 6).unwrap();
    let opts = RunOptions {
        max_steps: 3,
        record_full: true,
        stop_on_recovery: false,
        ..Default::default()
    };
    let traj = run(&a, &x0, &opts).unwrap();
    for t in 1..=traj.len() {
        let g: Vec<f64> = gradient(&a, traj.x_tilde(t - 1))
            .unwrap()
            .iter()
            .map(|v| v / 6.0)
            .collect();
        assert!(relative_error(&traj.steps[t - 1].x, &g) <= 1e-10);
    }
}
