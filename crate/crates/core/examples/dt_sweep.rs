//! Success within T steps along k = ⌈d^1.8⌉.
//!
//! cargo run --release --example dt_sweep -- [trials]

use tpi::experiments::{run_dt_sweep, ExperimentConfig, ExperimentKind, GridCell};

fn main() -> tpi::Result<()> {
    let trials = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(50);
    let dims = [12, 16, 20, 28];
    let steps = [2, 8, 32, 128, 512];
    let grid = dims
        .iter()
        .flat_map(|&d| steps.iter().map(move |&t| GridCell::on_curve(d, 1.8, t)))
        .collect();
    let config = ExperimentConfig::new(ExperimentKind::PhaseDt, grid, trials, 0);
    let result = run_dt_sweep(&config)?;

    print!("{:>4} {:>6}", "d", "k");
    for t in steps {
        print!(" {:>6}", format!("T={t}"));
    }
    println!();
    for &d in &dims {
        let k = tpi::numeric::ceil_pow(d, 1.8);
        print!("{d:>4} {k:>6}");
        for t in steps {
            print!(
                " {:>6.2}",
                result.cell(k, d, t).map_or(f64::NAN, |c| c.success_rate)
            );
        }
        println!();
    }
    Ok(())
}
