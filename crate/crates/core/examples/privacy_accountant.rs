//! Calibrates the step-size factor to a privacy target, prints the per-agent
//! accounting and checks the Gaussian bound by simulation.

use dzoa::harness::{self, ExperimentConfig};
use dzoa::privacy;

fn main() -> dzoa::Result<()> {
    let cfg = ExperimentConfig::default();
    for (eps, delta) in [(0.15, 1e-3), (0.95, 1e-6)] {
        println!("{}\n", harness::accountant_for(&cfg, eps, delta)?);
    }

    let sigma = privacy::sigma_for(0.5, 1e-3, 1.0, 4.0, 2.0, 20)?;
    let delta2 = privacy::l2_sensitivity(1.0, 4.0, 2.0, 20)?;
    let check = privacy::empirical_privacy_check(sigma, delta2, 0.5, 1e-3, 200_000, 1)?;
    println!(
        "sigma {:.4e}: exceedance {:.2e} +- {:.1e}, allowed {:.1e}",
        sigma, check.exceedance, check.stderr, check.allowed
    );
    match privacy::empirical_privacy_check(sigma / 10.0, delta2, 0.5, 1e-3, 200_000, 1) {
        Err(e) => println!("sigma / 10: {e}"),
        Ok(r) => println!("sigma / 10 unexpectedly passed: {r:?}"),
    }
    Ok(())
}
