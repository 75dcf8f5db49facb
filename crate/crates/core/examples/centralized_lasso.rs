//! Solves the pooled lasso problem and compares it to the ground truth.

use dzoa::centralized::{erm_reference, lasso_optimality_violation, solve_lasso_centralized};
use dzoa::problem::{synthesize_data, ErmProblem};

fn main() -> dzoa::Result<()> {
    let (raw, omega) = synthesize_data(5, 20, 10, 0.1f64.sqrt(), 3)?;
    let (x, y) = raw.stacked();
    for eta in [0.1, 1.0, 10.0] {
        let beta = solve_lasso_centralized(&x, &y, eta, 1e-10)?;
        let nnz = beta.iter().filter(|b| b.abs() > 1e-9).count();
        println!(
            "eta {eta:>4}: nonzeros {nnz:>2}  |beta - omega| = {:.4}  kkt violation {:.1e}",
            (&beta - &omega).norm(),
            lasso_optimality_violation(&x, &y, eta, &beta)
        );
    }

    // the network problem weights each agent by its own sample count
    let data = raw.normalize()?;
    let problem = ErmProblem::lasso(1.0, 1.0, 5)?;
    let reference = erm_reference(&problem, &data, 1e-10)?;
    println!("network reference on normalized data: {:.3?}", reference.as_slice());
    Ok(())
}
