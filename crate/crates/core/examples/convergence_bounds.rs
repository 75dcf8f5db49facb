//! Optimality gap of the averaged updates against the outer bound as the
//! number of rounds grows.

use dzoa::centralized::{gap_vs_m_experiment, GapPrivacy};
use dzoa::harness::{prepare_instance, ExperimentConfig, SOLVER_TOL};

fn main() -> dzoa::Result<()> {
    let cfg = ExperimentConfig::default();
    let graph = cfg.build_graph()?;
    let problem = cfg.build_problem()?;
    let inst = prepare_instance(&cfg, 0)?;
    let template = cfg.run_config(0.5, 1e-3, 0, &inst.reference);
    let privacy = GapPrivacy {
        delta: 1e-3,
        estimator_constant: cfg.zo.estimator_constant,
    };
    let table = gap_vs_m_experiment(
        &problem,
        &inst.data,
        &graph,
        &template,
        &[25, 50, 100, 200],
        &[0, 1, 2],
        privacy,
        SOLVER_TOL,
    )?;
    println!("|q0 - q|_G^2 = {:.3}  privacy floor = {:.3}", table.q_distance_sq, table.privacy_floor);
    println!("{:>5} {:>12} {:>10} {:>12}", "M", "mean gap", "stderr", "bound");
    for s in table.summary() {
        println!(
            "{:>5} {:>12.5} {:>10.5} {:>12.5}",
            s.outer_iters, s.mean_gap, s.stderr, s.bound
        );
    }
    Ok(())
}
