//! Centralized reference solutions, the normalized error metric, and the
//! outer- and inner-loop convergence bounds with the experiment that checks
//! the outer one.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dzoa::{self, exact_primal_oracle, RunConfig};
use crate::error::{check_len, Error, Result};
use crate::privacy;
use crate::problem::{Dataset, ErmProblem};
use crate::prox::{fista, DEFAULT_MAX_ITER};
use crate::topology::{symmetric_eigenvalues, ConsensusMatrices, Graph};
use crate::zeroth_order::ZoConfig;

/// `argmin ‖Xβ − y‖² + η‖β‖₁` by accelerated proximal gradient.
pub fn solve_lasso_centralized(x: &DMatrix<f64>, y: &DVector<f64>, eta: f64, tol: f64) -> Result<DVector<f64>> {
    check_len("response", x.nrows(), y.len())?;
    if !(eta >= 0.0) {
        return Err(Error::DomainError(format!("eta must be non-negative, got {eta}")));
    }
    let gram = x.transpose() * x;
    let xty = x.transpose() * y;
    let top = symmetric_eigenvalues(&gram)?.iter().cloned().fold(0.0, f64::max);
    let lipschitz = (2.0f64 * top).max(f64::MIN_POSITIVE.sqrt());
    let sol = fista(
        |b| (&gram * b - &xty) * 2.0,
        lipschitz,
        eta,
        DVector::zeros(x.ncols()),
        tol * 0.1,
        DEFAULT_MAX_ITER,
    )?;
    Ok(sol.beta)
}

/// Largest violation of the lasso optimality conditions at `beta`:
/// `|2xᵢᵀ(Xβ − y)| ≤ η` where `βᵢ = 0`, and `2xᵢᵀ(Xβ − y) = −η·sign(βᵢ)`
/// elsewhere.
pub fn lasso_optimality_violation(x: &DMatrix<f64>, y: &DVector<f64>, eta: f64, beta: &DVector<f64>) -> f64 {
    let g = x.transpose() * (x * beta - y) * 2.0;
    beta.iter()
        .zip(g.iter())
        .map(|(&b, &gi)| {
            if b == 0.0 {
                (gi.abs() - eta).max(0.0)
            } else {
                (gi + eta * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizer of the network objective `Σ_k f_k(β)` over a common `β`:
/// the lasso on the stacked data with agent `k`'s rows scaled by `1/√N_k`.
pub fn erm_reference(problem: &ErmProblem, dataset: &Dataset, tol: f64) -> Result<DVector<f64>> {
    let total = dataset.total_samples();
    let p = dataset.num_features();
    let mut x = DMatrix::zeros(total, p);
    let mut y = DVector::zeros(total);
    let mut row = 0;
    for block in dataset.blocks() {
        let scale = 1.0 / (block.num_samples() as f64).sqrt();
        let n = block.num_samples();
        x.rows_mut(row, n).copy_from(&(&block.x * scale));
        y.rows_mut(row, n).copy_from(&(&block.y * scale));
        row += n;
    }
    solve_lasso_centralized(&x, &y, problem.eta, tol)
}

/// `Σ_k ‖β_k − β^c‖² / ‖β^c‖²`.
pub fn normalized_error(betas: &[DVector<f64>], beta_c: &DVector<f64>) -> Result<f64> {
    let denom = beta_c.norm_squared();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    let mut num = 0.0;
    for b in betas {
        check_len("local estimate", beta_c.len(), b.len())?;
        num += (b - beta_c).norm_squared();
    }
    Ok(num / denom)
}

/// Inputs of the outer-loop bound for one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    /// `‖q^{(0)} − q‖²_G`.
    pub q_distance_sq: f64,
    pub outer_iters: usize,
    pub c1: f64,
    pub dim: usize,
    pub rho: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub lambda_max_l_plus: f64,
    pub lambda_min_l_minus: f64,
    pub nk: f64,
    pub n_k: usize,
}

impl BoundInputs {
    /// Constant term that remains as `M → ∞`.
    pub fn privacy_floor(&self) -> f64 {
        let n = self.nk * self.n_k as f64;
        2.1 * self.c1.powi(2) * self.dim as f64 * self.rho * (1.25 / self.delta).ln() * self.lambda_max_l_plus.powi(2)
            / (2.0 * self.rho.powi(2) * n * n * self.epsilon.powi(2) * self.lambda_min_l_minus)
    }
}

/// `‖q^{(0)} − q‖²_G / M` plus the privacy floor.
pub fn theorem3_bound(b: &BoundInputs) -> f64 {
    b.q_distance_sq / b.outer_iters as f64 + b.privacy_floor()
}

/// Largest per-agent bound; the network-wide statement.
pub fn theorem3_worst_case(agents: &[BoundInputs]) -> f64 {
    agents.iter().map(theorem3_bound).fold(f64::NEG_INFINITY, f64::max)
}

/// Expected suboptimality bound of the inner loop's running average after
/// `T` steps, with constant `c = 0.5`.
pub fn inner_bound(cfg: &ZoConfig, inner_iters: usize) -> Result<f64> {
    cfg.validate()?;
    if inner_iters == 0 {
        return Err(Error::DomainError("T must be at least 1".into()));
    }
    let p = cfg.dim as f64;
    let t = inner_iters as f64;
    let alpha = cfg.alpha0.max(1.0 / cfg.alpha0);
    Ok(0.5 * (cfg.radius * cfg.lipschitz * p.sqrt() / t.sqrt())
        * (alpha * (2.0 * p).ln().sqrt() + cfg.u1 * (2.0 * t).ln() / t.sqrt()))
}

/// `‖q^{(0)} − q‖²_G` with `G = diag(ρI, ρL₊/2)`.
pub fn q_g_distance_sq(
    rho: f64,
    l_plus: &DMatrix<f64>,
    r0: &DVector<f64>,
    r: &DVector<f64>,
    w0: &DVector<f64>,
    w_star: &DVector<f64>,
) -> Result<f64> {
    check_len("r", r0.len(), r.len())?;
    check_len("w", l_plus.nrows(), w0.len())?;
    check_len("w*", l_plus.nrows(), w_star.len())?;
    let dw = w0 - w_star;
    Ok(rho * (r0 - r).norm_squared() + 0.5 * rho * dw.dot(&(l_plus * &dw)))
}

/// `β` repeated once per agent.
pub fn replicate(beta: &DVector<f64>, agents: usize) -> DVector<f64> {
    let p = beta.len();
    DVector::from_fn(agents * p, |i, _| beta[i % p])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRow {
    pub outer_iters: usize,
    pub seed: u64,
    /// `f(ŵ^{(M)}) − f(w*)` with `ŵ^{(M)}` the average of the exact updates.
    pub gap: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapTable {
    pub q_distance_sq: f64,
    pub privacy_floor: f64,
    pub rows: Vec<GapRow>,
}

/// Per-horizon summary of a [`GapTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapSummary {
    pub outer_iters: usize,
    pub mean_gap: f64,
    pub stderr: f64,
    /// Largest bound over seeds at this horizon.
    pub bound: f64,
}

impl GapTable {
    pub fn summary(&self) -> Vec<GapSummary> {
        let mut ms: Vec<usize> = self.rows.iter().map(|r| r.outer_iters).collect();
        ms.dedup();
        ms.into_iter()
            .map(|m| {
                let at: Vec<&GapRow> = self.rows.iter().filter(|r| r.outer_iters == m).collect();
                let gaps: Vec<f64> = at.iter().map(|r| r.gap).collect();
                let (mean_gap, stderr) = mean_stderr(&gaps);
                GapSummary {
                    outer_iters: m,
                    mean_gap,
                    stderr,
                    bound: at.iter().map(|r| r.bound).fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect()
    }
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Privacy parameters used to evaluate the outer bound of a gap experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapPrivacy {
    pub delta: f64,
    pub estimator_constant: f64,
}

/// Runs the algorithm once per seed to the largest horizon, re-solves every
/// recorded subproblem exactly, and reports the gap of the averaged exact
/// updates at each horizon against the outer bound. Rounds depend only on
/// earlier rounds, so a prefix of the longest run is the run of that length.
#[allow(clippy::too_many_arguments)]
pub fn gap_vs_m_experiment(
    problem: &ErmProblem,
    dataset: &Dataset,
    graph: &Graph,
    template: &RunConfig,
    horizons: &[usize],
    seeds: &[u64],
    privacy_params: GapPrivacy,
    tol: f64,
) -> Result<GapTable> {
    if horizons.is_empty() || horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(Error::DomainError("horizons must be positive and strictly ascending".into()));
    }
    let k_agents = graph.num_agents();
    let p = dataset.num_features();
    let w_star = erm_reference(problem, dataset, tol)?;
    let f_star = problem.network_objective(dataset, &vec![w_star.clone(); k_agents])?;
    let mats = ConsensusMatrices::build(graph, p)?;
    let zeros_r = DVector::zeros(k_agents * p);
    let q_distance_sq = q_g_distance_sq(
        template.rho,
        &mats.l_plus,
        &zeros_r,
        &zeros_r,
        &DVector::zeros(k_agents * p),
        &replicate(&w_star, k_agents),
    )?;

    let max_m = *horizons.last().unwrap();
    let sizes = dataset.samples_per_agent();
    let per_agent_inputs = |m: usize, zo: &[ZoConfig]| -> Result<Vec<BoundInputs>> {
        (0..k_agents)
            .map(|k| {
                let nk = template.convention.nk(graph, k);
                Ok(BoundInputs {
                    q_distance_sq,
                    outer_iters: m,
                    c1: problem.c1,
                    dim: p,
                    rho: template.rho,
                    delta: privacy_params.delta,
                    epsilon: privacy::epsilon_intrinsic(
                        &zo[k],
                        privacy_params.delta,
                        problem.c1,
                        template.rho,
                        nk,
                        sizes[k],
                        privacy_params.estimator_constant,
                        w_star.norm(),
                    )?,
                    lambda_max_l_plus: mats.lambda_max_l_plus,
                    lambda_min_l_minus: mats.lambda_min_nonzero_l_minus,
                    nk,
                    n_k: sizes[k],
                })
            })
            .collect()
    };

    let per_seed = seeds
        .par_iter()
        .map(|&seed| -> Result<(Vec<GapRow>, f64)> {
            let cfg = RunConfig {
                outer_iters: max_m,
                seed,
                record_contexts: true,
                trace_inner: false,
                ..template.clone()
            };
            let trace = dzoa::run(problem, dataset, graph, &cfg).map_err(|e| e.in_run(format!("gap seed {seed}")))?;
            let zo: Vec<ZoConfig> = (0..k_agents)
                .map(|k| {
                    cfg.inner
                        .config_for(problem, cfg.rho, cfg.convention.nk(graph, k), sizes[k], p)
                })
                .collect::<Result<_>>()?;
            let mut sums = vec![DVector::zeros(p); k_agents];
            let mut rows = Vec::with_capacity(horizons.len());
            let mut next = 0;
            for (i, contexts) in trace.contexts.iter().enumerate() {
                for (k, ctx) in contexts.iter().enumerate() {
                    sums[k] += exact_primal_oracle(problem, dataset.block(k), ctx, tol)?;
                }
                let m = i + 1;
                if m == horizons[next] {
                    let avg: Vec<DVector<f64>> = sums.iter().map(|s| s / m as f64).collect();
                    let gap = problem.network_objective(dataset, &avg)? - f_star;
                    let bound = theorem3_worst_case(&per_agent_inputs(m, &zo)?);
                    rows.push(GapRow {
                        outer_iters: m,
                        seed,
                        gap,
                        bound,
                    });
                    next += 1;
                    if next == horizons.len() {
                        break;
                    }
                }
            }
            let floor = per_agent_inputs(max_m, &zo)?
                .iter()
                .map(|b| b.privacy_floor())
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((rows, floor))
        })
        .collect::<Result<Vec<_>>>()?;

    let privacy_floor = per_seed.iter().map(|(_, f)| *f).fold(f64::NEG_INFINITY, f64::max);
    let mut rows: Vec<GapRow> = per_seed.into_iter().flat_map(|(r, _)| r).collect();
    rows.sort_by_key(|r| (r.outer_iters, seeds.iter().position(|&s| s == r.seed)));
    Ok(GapTable {
        q_distance_sq,
        privacy_floor,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::soft_threshold;
    use crate::problem::synthesize_data;
    use approx::assert_relative_eq;

    #[test]
    fn huge_eta_gives_zero() {
        let (data, _) = synthesize_data(1, 10, 3, 0.1, 4).unwrap();
        let (x, y) = data.stacked();
        let eta = 2.0 * (x.transpose() * &y).amax() * 1.01;
        let b = solve_lasso_centralized(&x, &y, eta, 1e-10).unwrap();
        assert_eq!(b, DVector::zeros(3));
    }

    #[test]
    fn identity_design_closed_form() {
        let x = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![2.0, -0.3, -1.5]);
        let b = solve_lasso_centralized(&x, &y, 1.0, 1e-12).unwrap();
        for i in 0..3 {
            assert!((b[i] - soft_threshold(y[i], 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn solution_meets_optimality_conditions() {
        let (data, _) = synthesize_data(2, 15, 5, 0.2, 6).unwrap();
        let (x, y) = data.stacked();
        let b = solve_lasso_centralized(&x, &y, 3.0, 1e-8).unwrap();
        assert!(lasso_optimality_violation(&x, &y, 3.0, &b) <= 1e-8);
    }

    #[test]
    fn normalized_error_examples() {
        let c = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(normalized_error(&[c.clone(), c.clone()], &c).unwrap(), 0.0);
        assert_relative_eq!(normalized_error(&[&c * 2.0], &c).unwrap(), 1.0);
        assert!(matches!(normalized_error(&[c.clone()], &DVector::zeros(2)), Err(Error::ZeroReference)));
    }

    #[test]
    fn reference_minimizes_network_objective() {
        let (data, _) = synthesize_data(3, 12, 3, 0.3, 9).unwrap();
        let data = data.normalize().unwrap();
        let problem = ErmProblem::lasso(1.0, 1.0, 3).unwrap();
        let b = erm_reference(&problem, &data, 1e-11).unwrap();
        let f = |v: &DVector<f64>| problem.network_objective(&data, &vec![v.clone(); 3]).unwrap();
        let best = f(&b);
        for i in 0..3 {
            for d in [-1e-4, 1e-4] {
                let mut v = b.clone();
                v[i] += d;
                assert!(f(&v) >= best - 1e-12);
            }
        }
    }

    fn base_inputs() -> BoundInputs {
        BoundInputs {
            q_distance_sq: 3.0,
            outer_iters: 10,
            c1: 1.0,
            dim: 10,
            rho: 4.0,
            delta: 1e-3,
            epsilon: 0.5,
            lambda_max_l_plus: 2.0,
            lambda_min_l_minus: 2.0,
            nk: 1.0,
            n_k: 20,
        }
    }

    #[test]
    fn bound_scalings() {
        let b = base_inputs();
        let far = BoundInputs { outer_iters: 1_000_000_000, ..b };
        assert_relative_eq!(theorem3_bound(&far), b.privacy_floor(), max_relative = 1e-8);
        let half = BoundInputs { epsilon: 0.25, ..b };
        assert_relative_eq!(half.privacy_floor(), 4.0 * b.privacy_floor(), max_relative = 1e-14);
    }

    #[test]
    fn inner_bound_scalings() {
        let cfg = ZoConfig {
            u1: 0.0001,
            inner_iters: 100,
            samples: 30,
            alpha0: 1.0,
            radius: 1.0,
            lipschitz: 1.0,
            dim: 10,
        };
        let a = inner_bound(&cfg, 100).unwrap();
        let b = inner_bound(&cfg, 400).unwrap();
        assert_relative_eq!(a / b, 2.0, max_relative = 1e-3);
        let inv = ZoConfig { alpha0: 0.5, ..cfg.clone() };
        let two = ZoConfig { alpha0: 2.0, ..cfg };
        assert_relative_eq!(inner_bound(&inv, 50).unwrap(), inner_bound(&two, 50).unwrap());
    }

    #[test]
    fn consensus_distance_on_two_nodes() {
        let g = Graph::path(2).unwrap();
        let mats = ConsensusMatrices::build(&g, 1).unwrap();
        let w = replicate(&DVector::from_vec(vec![1.5]), 2);
        let z = DVector::zeros(2);
        // L₊ applied to a consensus vector is 2·deg·β per block
        let d = q_g_distance_sq(4.0, &mats.l_plus, &z, &z, &z, &w).unwrap();
        assert_relative_eq!(d, 0.5 * 4.0 * (2.0 * 1.5 * 1.5 * 2.0), max_relative = 1e-14);
    }

    #[test]
    fn mean_stderr_values() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(m, 2.5);
        assert_relative_eq!(s, (5.0f64 / 3.0 / 4.0).sqrt());
    }
}
