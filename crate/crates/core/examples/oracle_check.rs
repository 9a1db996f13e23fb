//! Implicit contraction against the dense tensor on every small instance.
//!
//! cargo run --example oracle_check

use tpi::tensor::{contract_explicit, contract_implicit, oracle_check, ExplicitTensor};
use tpi::ComponentMatrix;

fn main() -> tpi::Result<()> {
    // Two orthogonal components: T(x, x, x, ·) has the closed form x_j³ here.
    let a = ComponentMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2)?;
    let t = ExplicitTensor::from_components(&a)?;
    let x = [0.5, -2.0];
    println!("implicit {:?}", contract_implicit(&a, &x)?);
    println!("explicit {:?}", contract_explicit(&t, &x)?);

    let ks: Vec<usize> = (1..=8).collect();
    let report = oracle_check(&[2, 3, 4], &ks, &[2, 3], 20, 0)?;
    println!(
        "{} cases, max relative error {:.3e} at (d, k, m) = {:?}",
        report.cases, report.max_relative_error, report.worst
    );
    Ok(())
}
