//! Minimizes a nonsmooth function from values only and prints the inner
//! trace.

use dzoa::zeroth_order::{inner_loop, FnOracle, ZoConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dzoa::Result<()> {
    let target = [0.5, -0.3, 0.0, 0.2];
    // ‖β − b‖² + 0.1‖β‖₁
    let oracle = FnOracle::new(4, |b: &[f64]| {
        b.iter()
            .zip(target)
            .map(|(x, t)| (x - t).powi(2) + 0.1 * x.abs())
            .sum()
    });
    let cfg = ZoConfig {
        u1: 0.01,
        inner_iters: 400,
        samples: 20,
        alpha0: 1.0,
        radius: 1.0,
        lipschitz: 1.0,
        dim: 4,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let out = inner_loop(&oracle, &cfg, &mut rng)?;
    for row in out.trace.iter().step_by(50) {
        println!("t = {:>3}  |g| = {:.4}  f = {:.5}", row.t, row.grad_norm, row.value);
    }
    println!("final   {:.4?}", out.final_iterate.as_slice());
    println!("average {:.4?}", out.running_average.as_slice());
    println!("optimum [0.45, -0.25, 0, 0.15]");
    Ok(())
}
