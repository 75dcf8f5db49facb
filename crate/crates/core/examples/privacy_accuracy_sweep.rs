//! Final error of D-ZOA and of explicitly perturbed ADMM over the privacy
//! grid. Pass a seed count as the first argument; the default is 4.

use dzoa::harness::{sweep, ExperimentConfig};

fn main() -> dzoa::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.run.num_seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let dir = tempfile_dir();
    cfg.run.out_dir = dir.clone();
    println!("{:>9} {:>5} {:>7} {:>8} {:>10} {:>9}", "method", "eps", "delta", "eps_bar", "error", "stderr");
    for r in sweep(&cfg)? {
        println!(
            "{:>9} {:>5} {:>7} {:>8.4} {:>10.5} {:>9.5}",
            r.method.name(),
            r.epsilon,
            r.delta,
            r.epsilon_bar,
            r.mean_final_error,
            r.stderr_final_error
        );
    }
    println!("sweep.csv written to {}", dir.display());
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    std::env::temp_dir().join("dzoa-sweep")
}
