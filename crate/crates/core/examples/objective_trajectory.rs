//! Mean S(x̃_t) against 3k + 20td in the overcomplete regime.
//!
//! cargo run --release --example objective_trajectory -- [d] [trials]

use tpi::experiments::{run_objective_traj, ExperimentConfig, ExperimentKind, GridCell};
use tpi::io::objective_csv;
use tpi::numeric::ceil_pow;

fn main() -> tpi::Result<()> {
    let mut args = std::env::args().skip(1);
    let d = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let trials = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let k = ceil_pow(d, 1.75);

    let config = ExperimentConfig::new(
        ExperimentKind::ObjectiveTraj,
        vec![GridCell::new(k, d, 5)],
        trials,
        0,
    );
    let sweep = run_objective_traj(&config)?;
    let cell = &sweep.cells[0];
    println!("k={k} d={d} trials={}", cell.trials);
    for row in &cell.rows {
        println!(
            "t={}  mean S={:<10.1} predicted={:<8} ratio={:.4}  monotone so far={:.2}",
            row.t,
            row.mean_s,
            row.predicted_s,
            row.mean_s / row.predicted_s,
            row.monotone_fraction
        );
    }
    for t in 0..cell.steps {
        println!(
            "increment {t}->{}: {:.2} d",
            t + 1,
            cell.mean_increment(t) / d as f64
        );
    }
    print!("\n{}", objective_csv(&cell.rows));
    Ok(())
}
