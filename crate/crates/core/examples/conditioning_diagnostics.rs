//! The exact expansion y_t = g_t + v_t and the trapped-iterate statistics.
//!
//! cargo run --release --example conditioning_diagnostics -- [d] [trials]

use tpi::experiments::{run_diagnostics, ExperimentConfig, ExperimentKind, GridCell};
use tpi::numeric::{ceil_pow, mean, median};

fn main() -> tpi::Result<()> {
    let mut args = std::env::args().skip(1);
    let d = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let trials = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let k = ceil_pow(d, 1.75);
    let steps = 8;

    let config = ExperimentConfig::new(
        ExperimentKind::Diagnostics,
        vec![GridCell::new(k, d, steps)],
        trials,
        0,
    );
    let sweep = run_diagnostics(&config)?;
    let cell = &sweep.cells[0];
    println!("k={k} d={d} trials={trials}");
    println!("  t  max residual  mean alpha1  median P/Q  median vt_ratio  median |f|^2/k");
    for t in 1..=steps {
        let rows: Vec<_> = cell.rows_at(t).collect();
        let residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
        let alpha1 = mean(&rows.iter().map(|r| r.alpha1).collect::<Vec<_>>());
        let pq: Vec<f64> = rows.iter().filter_map(|r| r.p_over_q).collect();
        let vt: Vec<f64> = rows.iter().filter_map(|r| r.vt_ratio).collect();
        let f = median(&rows.iter().map(|r| r.f_norm_over_k).collect::<Vec<_>>());
        let or_dash = |v: &[f64]| {
            if v.is_empty() {
                "-".into()
            } else {
                format!("{:.3}", median(v))
            }
        };
        println!(
            "{t:>3}  {residual:<12.2e}  {alpha1:<11.4}  {:<10}  {:<15}  {f:.2}",
            or_dash(&pq),
            or_dash(&vt)
        );
    }
    Ok(())
}
