//! A single trajectory in the easy regime and in the trapped regime.
//!
//! cargo run --example rank_one_recovery

use tpi::power_iter::{run, RunOptions};
use tpi::{sample_components, sample_sphere_init};

fn show(k: usize, d: usize, seed: u64) -> tpi::Result<()> {
    let a = sample_components(k, d, 2, seed)?;
    let x0 = sample_sphere_init(d, seed)?;
    let traj = run(
        &a,
        &x0,
        &RunOptions {
            max_steps: 200,
            ..Default::default()
        },
    )?;
    println!("k={k} d={d} seed={seed}");
    println!("  t  S(x_t)         raw    cosine  best");
    for t in 0..=traj.len().min(8) {
        let al = traj.alignment(t);
        println!(
            "{t:>3}  {:<13.4} {:.4}  {:.4}  {}",
            traj.objective(t),
            traj.recovery(t).value,
            al.value,
            al.index + 1
        );
    }
    match traj.recovered_component {
        Some(r) => println!(
            "  recovered component {} (sign {:+}) after {} steps\n",
            r.index + 1,
            r.sign,
            traj.len()
        ),
        None => println!("  {:?} after {} steps\n", traj.termination, traj.len()),
    }
    Ok(())
}

fn main() -> tpi::Result<()> {
    show(1, 16, 7)?;
    show(16, 16, 1)?;
    show(1024, 16, 1)
}
