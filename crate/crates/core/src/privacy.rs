//! Intrinsic differential-privacy accounting for the zeroth-order primal
//! update: sensitivity, Gaussian noise calibration, the inner-loop variance
//! bound, the implied per-iteration ε and its composition over outer
//! iterations.
//!
//! All logarithms are natural.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::zeroth_order::ZoConfig;

/// Default estimator constant for Gaussian direction sampling.
pub const DEFAULT_ESTIMATOR_CONSTANT: f64 = 0.5;
pub const MAX_DELTA: f64 = 0.01;
/// Fewest Monte-Carlo trials accepted by [`empirical_privacy_check`].
pub const MIN_TRIALS: usize = 100_000;

/// Validated `(ε, δ)` pair: `ε ∈ (0, 1]`, `δ ∈ (0, 0.01]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        check_delta(delta)?;
        Ok(PrivacyParams { epsilon, delta })
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(Error::DomainError(format!("epsilon must lie in (0, 1], got {epsilon}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= MAX_DELTA {
        Ok(())
    } else {
        Err(Error::DomainError(format!("delta must lie in (0, {MAX_DELTA}], got {delta}")))
    }
}

fn check_positive(pairs: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in pairs {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::DomainError(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// `s1 = Σ_{t=1}^{T} 1/t`.
pub fn harmonic_sum(t_max: usize) -> f64 {
    (1..=t_max).rev().map(|t| 1.0 / t as f64).sum()
}

/// `s2 = Σ_{t=1}^{T} t^{-3/2}`.
pub fn harmonic_sum_three_halves(t_max: usize) -> f64 {
    (1..=t_max).rev().map(|t| (t as f64).powf(-1.5)).sum()
}

/// `s1 (1 + ln P) + s2`, the schedule factor shared by the variance bound,
/// the intrinsic ε and the α0 calibration.
pub fn schedule_factor(inner_iters: usize, dim: usize) -> f64 {
    harmonic_sum(inner_iters) * (1.0 + (dim as f64).ln()) + harmonic_sum_three_halves(inner_iters)
}

/// l2 sensitivity of the exact primal update: `c1 / (ρ nk N_k)`.
pub fn l2_sensitivity(c1: f64, rho: f64, nk: f64, n_k: usize) -> Result<f64> {
    check_positive(&[("c1", c1), ("rho", rho), ("nk", nk), ("N_k", n_k as f64)])?;
    Ok(c1 / (rho * nk * n_k as f64))
}

/// Gaussian noise scale that makes one release `(ε, δ)`-private:
/// `c1 √(2.1 ln(1.25/δ)) / (ρ nk N_k ε)`.
pub fn sigma_for(epsilon: f64, delta: f64, c1: f64, rho: f64, nk: f64, n_k: usize) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    let sens = l2_sensitivity(c1, rho, nk, n_k)?;
    Ok(sens * (2.1 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// Upper bound on the per-coordinate variance of the inner-loop output:
/// `c α0² R² / (J P ln 2P) · (s1 (1 + ln P) + s2) − 4‖β^c‖² / (T J P)`.
pub fn variance_upper_bound(cfg: &ZoConfig, c: f64, beta_c_norm: f64) -> Result<f64> {
    cfg.validate()?;
    check_positive(&[("c", c)])?;
    if cfg.inner_iters == 0 {
        return Err(Error::DomainError("T must be at least 1".into()));
    }
    let p = cfg.dim as f64;
    let j = cfg.samples as f64;
    let t = cfg.inner_iters as f64;
    let lead = c * cfg.alpha0.powi(2) * cfg.radius.powi(2) / (j * p * (2.0 * p).ln())
        * schedule_factor(cfg.inner_iters, cfg.dim);
    let bound = lead - 4.0 * beta_c_norm.powi(2) / (t * j * p);
    if bound > 0.0 {
        Ok(bound)
    } else {
        Err(Error::NegativeBound(bound))
    }
}

/// The ε implied by matching the calibrated σ to the variance bound.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_intrinsic(
    cfg: &ZoConfig,
    delta: f64,
    c1: f64,
    rho: f64,
    nk: f64,
    n_k: usize,
    c: f64,
    beta_c_norm: f64,
) -> Result<f64> {
    check_delta(delta)?;
    cfg.validate()?;
    check_positive(&[("c", c)])?;
    if cfg.inner_iters == 0 {
        return Err(Error::DomainError("T must be at least 1".into()));
    }
    let sens = l2_sensitivity(c1, rho, nk, n_k)?;
    let p = cfg.dim as f64;
    let bracket = c * cfg.radius.powi(2) * cfg.alpha0.powi(2) / (2.0 * p).ln()
        * schedule_factor(cfg.inner_iters, cfg.dim)
        - 4.0 * beta_c_norm.powi(2) / cfg.inner_iters as f64;
    if !(bracket > 0.0) {
        return Err(Error::NegativeBound(bracket));
    }
    Ok(sens * (2.1 * cfg.samples as f64 * p * (1.25 / delta).ln()).sqrt() / bracket.sqrt())
}

/// Step-size factor `α0` for which [`epsilon_intrinsic`] equals `epsilon`,
/// with every other inner-loop parameter taken from `cfg`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_alpha0(
    cfg: &ZoConfig,
    epsilon: f64,
    delta: f64,
    c1: f64,
    rho: f64,
    nk: f64,
    n_k: usize,
    c: f64,
    beta_c_norm: f64,
) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    check_positive(&[("c", c), ("R", cfg.radius)])?;
    if cfg.inner_iters == 0 || cfg.samples == 0 || cfg.dim == 0 {
        return Err(Error::DomainError("T, J and P must be at least 1".into()));
    }
    let sens = l2_sensitivity(c1, rho, nk, n_k)?;
    let p = cfg.dim as f64;
    let target = sens * sens * 2.1 * cfg.samples as f64 * p * (1.25 / delta).ln() / (epsilon * epsilon)
        + 4.0 * beta_c_norm.powi(2) / cfg.inner_iters as f64;
    let a2 = (2.0 * p).ln() / (c * cfg.radius.powi(2)) * target / schedule_factor(cfg.inner_iters, cfg.dim);
    if a2 > 0.0 && a2.is_finite() {
        Ok(a2.sqrt())
    } else {
        Err(Error::Infeasible(format!("alpha0^2 = {a2:e}")))
    }
}

/// Total privacy after `M` adaptive releases:
/// `ε √(M ln(1/δ) / (1.05 ln(1.25/δ)))`.
pub fn total_epsilon(epsilon: f64, delta: f64, outer_iters: usize) -> Result<f64> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    if outer_iters == 0 {
        return Err(Error::DomainError("M must be at least 1".into()));
    }
    let m = outer_iters as f64;
    Ok(epsilon * (m * (1.0 / delta).ln() / (1.05 * (1.25 / delta).ln())).sqrt())
}

/// Result of the Monte-Carlo check of the scalar Gaussian mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrivacyCheckReport {
    pub trials: usize,
    /// Estimated `Pr[privacy loss > ε]`.
    pub exceedance: f64,
    pub stderr: f64,
    /// `δ + 3 · stderr`.
    pub allowed: f64,
}

const CHECK_SHARDS: usize = 16;

/// Samples `ξ ~ N(0, σ²)` and estimates how often the privacy loss
/// `|2ξΔ + Δ²| / (2σ²)` between two outputs shifted by `Δ` exceeds `ε`.
///
/// Fails with [`Error::CheckFailed`] when the estimate exceeds
/// `δ + 3·stderr`.
pub fn empirical_privacy_check(
    sigma: f64,
    delta2: f64,
    epsilon: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<PrivacyCheckReport> {
    let report = privacy_exceedance(sigma, delta2, epsilon, delta, trials, seed)?;
    if report.exceedance > report.allowed {
        Err(Error::CheckFailed {
            exceedance: report.exceedance,
            allowed: report.allowed,
        })
    } else {
        Ok(report)
    }
}

/// Same estimate as [`empirical_privacy_check`] without the pass/fail verdict.
pub fn privacy_exceedance(
    sigma: f64,
    delta2: f64,
    epsilon: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<PrivacyCheckReport> {
    check_positive(&[("sigma", sigma), ("epsilon", epsilon), ("delta", delta)])?;
    if !(delta2 >= 0.0) {
        return Err(Error::DomainError("sensitivity must be non-negative".into()));
    }
    if trials < MIN_TRIALS {
        return Err(Error::DomainError(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let per = trials.div_ceil(CHECK_SHARDS);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let counts: Vec<(usize, usize)> = (0..CHECK_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let n = per.min(trials.saturating_sub(shard * per));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard as u64 + 1);
            let mut hits = 0;
            for _ in 0..n {
                let xi = sigma * rng.sample::<f64, _>(StandardNormal);
                let loss = (2.0 * xi * delta2 + delta2 * delta2).abs() * inv;
                if loss > epsilon {
                    hits += 1;
                }
            }
            (hits, n)
        })
        .collect();
    let hits: usize = counts.iter().map(|c| c.0).sum();
    let n: usize = counts.iter().map(|c| c.1).sum();
    let p = hits as f64 / n as f64;
    let stderr = (p * (1.0 - p) / n as f64).sqrt();
    Ok(PrivacyCheckReport {
        trials: n,
        exceedance: p,
        stderr,
        allowed: delta + 3.0 * stderr,
    })
}

/// Per-agent accounting inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentAccountingInput {
    pub nk: f64,
    pub n_k: usize,
    pub zo: ZoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentPrivacy {
    pub agent: usize,
    pub nk: f64,
    pub n_k: usize,
    pub alpha0: f64,
    pub sensitivity: f64,
    pub variance_bound: f64,
    /// Noise scale implied by the variance bound, `√variance_bound`.
    pub sigma: f64,
    pub epsilon: f64,
}

/// Accountant output for a whole network; every privacy claim carries the
/// parameters it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccountantReport {
    pub delta: f64,
    pub c1: f64,
    pub rho: f64,
    pub estimator_constant: f64,
    pub beta_c_norm: f64,
    pub outer_iters: usize,
    pub agents: Vec<AgentPrivacy>,
    /// Largest per-agent ε, the network-wide per-iteration guarantee.
    pub worst_epsilon: f64,
    /// Composition of `worst_epsilon` over all outer iterations; absent
    /// when `worst_epsilon` is outside `(0, 1]`.
    pub total_epsilon: Option<f64>,
}

impl AccountantReport {
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        inputs: &[AgentAccountingInput],
        c1: f64,
        rho: f64,
        delta: f64,
        outer_iters: usize,
        c: f64,
        beta_c_norm: f64,
    ) -> Result<Self> {
        check_delta(delta)?;
        let mut agents = Vec::with_capacity(inputs.len());
        for (k, inp) in inputs.iter().enumerate() {
            let variance_bound = variance_upper_bound(&inp.zo, c, beta_c_norm)?;
            agents.push(AgentPrivacy {
                agent: k + 1,
                nk: inp.nk,
                n_k: inp.n_k,
                alpha0: inp.zo.alpha0,
                sensitivity: l2_sensitivity(c1, rho, inp.nk, inp.n_k)?,
                variance_bound,
                sigma: variance_bound.sqrt(),
                epsilon: epsilon_intrinsic(&inp.zo, delta, c1, rho, inp.nk, inp.n_k, c, beta_c_norm)?,
            });
        }
        let worst_epsilon = agents.iter().map(|a| a.epsilon).fold(0.0, f64::max);
        let total = total_epsilon(worst_epsilon, delta, outer_iters).ok();
        if total.is_none() {
            log::warn!("per-iteration epsilon {worst_epsilon} is outside (0, 1]; no composed guarantee");
        }
        Ok(AccountantReport {
            delta,
            c1,
            rho,
            estimator_constant: c,
            beta_c_norm,
            outer_iters,
            agents,
            worst_epsilon,
            total_epsilon: total,
        })
    }
}

impl fmt::Display for AccountantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "delta = {:e}  c1 = {}  rho = {}  c = {}  |beta_c| = {:.6}  M = {}",
            self.delta, self.c1, self.rho, self.estimator_constant, self.beta_c_norm, self.outer_iters
        )?;
        writeln!(
            f,
            "{:>5} {:>4} {:>5} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "agent", "nk", "N_k", "alpha0", "Delta_2", "var_bound", "sigma", "epsilon"
        )?;
        for a in &self.agents {
            writeln!(
                f,
                "{:>5} {:>4} {:>5} {:>12.6} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6}",
                a.agent, a.nk, a.n_k, a.alpha0, a.sensitivity, a.variance_bound, a.sigma, a.epsilon
            )?;
        }
        writeln!(f, "worst-case epsilon per iteration: {:.6}", self.worst_epsilon)?;
        match self.total_epsilon {
            Some(t) => write!(f, "total epsilon over {} iterations: {:.6}", self.outer_iters, t),
            None => write!(f, "total epsilon: undefined (per-iteration epsilon outside (0, 1])"),
        }
    }
}
