//! One run on the default network, next to exact ADMM on the same data.

use dzoa::dzoa::{run, run_perturbed_exact};
use dzoa::harness::{prepare_instance, ExperimentConfig, SOLVER_TOL};

fn main() -> dzoa::Result<()> {
    let cfg = ExperimentConfig::default();
    let graph = cfg.build_graph()?;
    let problem = cfg.build_problem()?;
    let inst = prepare_instance(&cfg, 1)?;

    let run_cfg = cfg.run_config(0.5, 1e-3, inst.seed, &inst.reference);
    let zo = run(&problem, &inst.data, &graph, &run_cfg)?;
    let exact = run_perturbed_exact(&problem, &inst.data, &graph, &run_cfg, &[0.0; 5], SOLVER_TOL)?;

    println!("alpha0 per agent {:.4?}", zo.alpha0);
    println!("{:>4} {:>12} {:>12} {:>12}", "m", "zo error", "exact error", "residual");
    for (a, b) in zo.records.iter().zip(&exact.records) {
        if a.m == 1 || a.m % 25 == 0 {
            println!(
                "{:>4} {:>12.5} {:>12.5} {:>12.3e}",
                a.m,
                a.normalized_error.unwrap(),
                b.normalized_error.unwrap(),
                a.consensus_residual
            );
        }
    }
    Ok(())
}
