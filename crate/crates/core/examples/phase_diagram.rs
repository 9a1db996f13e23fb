//! Success rate over a small (k, d) grid, written as CSV.
//!
//! cargo run --release --example phase_diagram -- [trials] [out.csv]

use std::path::PathBuf;

use tpi::experiments::{run_phase_sweep, ExperimentConfig, ExperimentKind, GridCell};
use tpi::io::{sweep_csv, write_sweep_csv};

fn main() -> tpi::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let out = args.next().map(PathBuf::from);

    let mut grid = Vec::new();
    for d in [8, 12, 16] {
        for exp in [1.0, 1.5, 2.0, 2.5] {
            let k = tpi::numeric::ceil_pow(d, exp);
            grid.push(GridCell::new(k, d, 300));
        }
    }
    let config = ExperimentConfig::new(ExperimentKind::PhaseKd, grid, trials, 0);
    let result = run_phase_sweep(&config)?;
    for c in &result.cells {
        let ratio = (c.k as f64).ln() / (c.d as f64).ln();
        println!(
            "d={:<3} k={:<5} log k/log d={ratio:.2}  success {:.2}",
            c.d, c.k, c.success_rate
        );
    }
    match out {
        Some(path) => write_sweep_csv(&result, &path)?,
        None => print!("\n{}", sweep_csv(&result)),
    }
    Ok(())
}
