//! The distributed outer loop: neighbor exchange, dual ascent on the
//! disagreement with neighbors, and a zeroth-order primal update per agent.
//! Exact primal updates (local and stacked) are provided as references.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centralized::normalized_error;
use crate::error::{check_len, Error, Result};
use crate::privacy;
use crate::problem::{AgentData, Dataset, ErmProblem, LocalAugmentedContext, LocalObjective};
use crate::prox::{fista, DEFAULT_MAX_ITER};
use crate::topology::{ConsensusMatrices, Graph};
use crate::zeroth_order::{inner_loop, InnerLoopOutput, InnerTraceRow, ZoConfig};

/// How agent `k` counts its neighborhood in the primal subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NeighborConvention {
    /// `nk` is the graph degree and the coupling sum runs over neighbors
    /// other than `k`. Agrees with the stacked recursion.
    #[default]
    GraphDegree,
    /// `nk = |N_k|` including `k`, and the coupling sum also runs over `N_k`.
    SelfInclusive,
}

impl NeighborConvention {
    pub fn nk(self, graph: &Graph, k: usize) -> f64 {
        match self {
            NeighborConvention::GraphDegree => graph.degree(k) as f64,
            NeighborConvention::SelfInclusive => graph.neighborhood(k).len() as f64,
        }
    }

    /// Agents whose previous estimates enter the coupling sum of agent `k`.
    pub fn peers(self, graph: &Graph, k: usize) -> Vec<usize> {
        match self {
            NeighborConvention::GraphDegree => graph.neighbors(k).collect(),
            NeighborConvention::SelfInclusive => graph.neighborhood(k).to_vec(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NeighborConvention::GraphDegree => "graph-degree",
            NeighborConvention::SelfInclusive => "self-inclusive",
        }
    }
}

/// Estimates received in the current round, keyed by sender, including the
/// agent's own.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Inbox {
    entries: Vec<(usize, DVector<f64>)>,
}

impl Inbox {
    pub fn get(&self, sender: usize) -> Option<&DVector<f64>> {
        self.entries.iter().find(|(s, _)| *s == sender).map(|(_, b)| b)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn senders(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(s, _)| *s)
    }

    pub fn insert(&mut self, sender: usize, beta: DVector<f64>) {
        match self.entries.iter_mut().find(|(s, _)| *s == sender) {
            Some(slot) => slot.1 = beta,
            None => self.entries.push((sender, beta)),
        }
    }

    fn require(&self, agent: usize, sender: usize) -> Result<&DVector<f64>> {
        self.get(sender).ok_or(Error::IncompleteInbox { agent, missing: sender })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
    pub inbox: Inbox,
}

impl AgentState {
    pub fn zero(p: usize) -> Self {
        AgentState {
            beta: DVector::zeros(p),
            gamma: DVector::zeros(p),
            inbox: Inbox::default(),
        }
    }
}

/// Delivers every agent's `β` to each neighbor. Returns the number of
/// messages sent, which is twice the number of edges.
pub fn exchange(states: &mut [AgentState], graph: &Graph) -> usize {
    let betas: Vec<DVector<f64>> = states.iter().map(|s| s.beta.clone()).collect();
    let mut messages = 0;
    for (k, state) in states.iter_mut().enumerate() {
        let mut inbox = Inbox::default();
        for &l in graph.neighborhood(k) {
            inbox.insert(l, betas[l].clone());
            if l != k {
                messages += 1;
            }
        }
        state.inbox = inbox;
    }
    messages
}

/// `γ_k + ρ Σ_{l ∈ N_k} (β_k − β_l)` from the agent's inbox.
pub fn dual_update(k: usize, state: &AgentState, graph: &Graph, rho: f64) -> Result<DVector<f64>> {
    let mut gamma = state.gamma.clone();
    for &l in graph.neighborhood(k) {
        let b = state.inbox.require(k, l)?;
        check_len("neighbor beta", gamma.len(), b.len())?;
        gamma += (&state.beta - b) * rho;
    }
    Ok(gamma)
}

/// Assembles the primal subproblem data of agent `k` from its state.
pub fn build_context(
    k: usize,
    state: &AgentState,
    graph: &Graph,
    rho: f64,
    convention: NeighborConvention,
) -> Result<LocalAugmentedContext> {
    let peers = convention.peers(graph, k);
    let mut neighbors = Vec::with_capacity(peers.len());
    for l in peers {
        neighbors.push(state.inbox.require(k, l)?.clone());
    }
    Ok(LocalAugmentedContext {
        gamma: state.gamma.clone(),
        beta_prev_self: state.beta.clone(),
        beta_prev_neighbors: neighbors,
        rho,
        nk: convention.nk(graph, k),
    })
}

/// Zeroth-order primal update: the inner loop run on agent `k`'s augmented
/// objective. Only function values of the local objective are used.
pub fn primal_update<R: rand::Rng + ?Sized>(
    problem: &ErmProblem,
    block: &AgentData,
    ctx: &LocalAugmentedContext,
    zo: &ZoConfig,
    rng: &mut R,
) -> Result<InnerLoopOutput> {
    let objective = LocalObjective::new(problem, block, ctx)?;
    inner_loop(&objective, zo, rng)
}

/// Exact minimizer of agent `k`'s augmented objective, to gradient-mapping
/// residual `tol · max(1, ‖∇(0)‖)` where `∇(0)` is the smooth gradient at
/// the origin. Reference only; the distributed algorithm never calls it.
pub fn exact_primal_oracle(
    problem: &ErmProblem,
    block: &AgentData,
    ctx: &LocalAugmentedContext,
    tol: f64,
) -> Result<DVector<f64>> {
    let objective = LocalObjective::new(problem, block, ctx)?;
    solve_objective(&objective, tol)
}

fn solve_objective(objective: &LocalObjective, tol: f64) -> Result<DVector<f64>> {
    let start = DVector::zeros(objective.dim());
    // large duals would otherwise push an absolute target below rounding
    let scale = objective.smooth_gradient(&start).norm().max(1.0);
    let sol = fista(
        |b| objective.smooth_gradient(b),
        objective.smoothness(),
        objective.l1_weight(),
        start,
        tol * scale,
        DEFAULT_MAX_ITER,
    )?;
    Ok(sol.beta)
}

/// One exact round in the local form: every agent solves its subproblem
/// from `(β^{m−1}, γ^{m−1})`, estimates are exchanged, and duals are
/// updated with the new estimates.
pub fn local_exact_step(
    problem: &ErmProblem,
    dataset: &Dataset,
    graph: &Graph,
    rho: f64,
    convention: NeighborConvention,
    states: &[AgentState],
    tol: f64,
) -> Result<Vec<AgentState>> {
    let mut prev = states.to_vec();
    exchange(&mut prev, graph);
    let mut next = Vec::with_capacity(prev.len());
    for (k, state) in prev.iter().enumerate() {
        let ctx = build_context(k, state, graph, rho, convention)?;
        let beta = exact_primal_oracle(problem, dataset.block(k), &ctx, tol)?;
        next.push(AgentState {
            beta,
            gamma: state.gamma.clone(),
            inbox: Inbox::default(),
        });
    }
    exchange(&mut next, graph);
    let gammas = (0..next.len())
        .map(|k| dual_update(k, &next[k], graph, rho))
        .collect::<Result<Vec<_>>>()?;
    for (s, g) in next.iter_mut().zip(gammas) {
        s.gamma = g;
    }
    Ok(next)
}

/// The stacked recursion: block `k` of `w` minimizes
/// `f_k(β) + ρ H_kk ‖β‖² + βᵀ(γ − ρ L₊ w_prev)_k`, then `γ ← γ + ρ L₋ w`.
pub fn matrix_form_step(
    w_prev: &DVector<f64>,
    gamma_prev: &DVector<f64>,
    matrices: &ConsensusMatrices,
    problem: &ErmProblem,
    dataset: &Dataset,
    rho: f64,
    tol: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let p = matrices.block_size;
    let n = matrices.num_agents() * p;
    check_len("stacked state", n, w_prev.len())?;
    check_len("stacked dual", n, gamma_prev.len())?;
    check_len("agents", matrices.num_agents(), dataset.num_agents())?;
    let linear = gamma_prev - (&matrices.l_plus * w_prev) * rho;
    let mut w = DVector::zeros(n);
    for k in 0..matrices.num_agents() {
        let penalty = rho * matrices.h[(k * p, k * p)];
        let obj = LocalObjective::from_parts(problem, dataset.block(k), penalty, matrices.block(&linear, k));
        w.rows_mut(k * p, p).copy_from(&solve_objective(&obj, tol)?);
    }
    let gamma = gamma_prev + (&matrices.l_minus * &w) * rho;
    Ok((w, gamma))
}

/// `Σ_k Σ_{l ∈ N_k} ‖β_k − β_l‖²`.
pub fn consensus_residual(graph: &Graph, betas: &[DVector<f64>]) -> f64 {
    (0..graph.num_agents())
        .map(|k| graph.neighbors(k).map(|l| (&betas[k] - &betas[l]).norm_squared()).sum::<f64>())
        .sum()
}

/// Seed of the inner-loop stream of `agent` at outer iteration `m`.
pub fn stream_seed(master: u64, agent: usize, m: usize) -> u64 {
    let mut z = master
        ^ (agent as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (m as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Choice of the inner-loop step-size factor `α0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum StepPolicy {
    Fixed { alpha0: f64 },
    /// Per agent, the `α0` whose intrinsic privacy equals `(epsilon, delta)`.
    Calibrated {
        epsilon: f64,
        delta: f64,
        estimator_constant: f64,
        beta_c_norm: f64,
    },
}

/// Inner-loop settings shared by all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerPlan {
    pub u1: f64,
    pub inner_iters: usize,
    pub samples: usize,
    pub radius: f64,
    pub lipschitz: f64,
    pub step: StepPolicy,
}

impl InnerPlan {
    /// Inner-loop configuration of agent `k`.
    pub fn config_for(
        &self,
        problem: &ErmProblem,
        rho: f64,
        nk: f64,
        n_k: usize,
        dim: usize,
    ) -> Result<ZoConfig> {
        let mut zo = ZoConfig {
            u1: self.u1,
            inner_iters: self.inner_iters,
            samples: self.samples,
            alpha0: 1.0,
            radius: self.radius,
            lipschitz: self.lipschitz,
            dim,
        };
        zo.alpha0 = match self.step {
            StepPolicy::Fixed { alpha0 } => alpha0,
            StepPolicy::Calibrated {
                epsilon,
                delta,
                estimator_constant,
                beta_c_norm,
            } => privacy::calibrate_alpha0(
                &zo,
                epsilon,
                delta,
                problem.c1,
                rho,
                nk,
                n_k,
                estimator_constant,
                beta_c_norm,
            )?,
        };
        zo.validate()?;
        Ok(zo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rho: f64,
    pub outer_iters: usize,
    pub seed: u64,
    pub inner: InnerPlan,
    pub convention: NeighborConvention,
    /// Centralized solution for the normalized error column.
    pub reference: Option<DVector<f64>>,
    /// Keep every agent's subproblem data for later exact re-solves.
    pub record_contexts: bool,
    pub trace_inner: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub m: usize,
    pub betas: Vec<DVector<f64>>,
    pub gammas: Vec<DVector<f64>>,
    pub consensus_residual: f64,
    pub normalized_error: Option<f64>,
    /// `Σ_k f_k(β_k)`.
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerRecord {
    pub m: usize,
    pub agent: usize,
    pub row: InnerTraceRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterTrace {
    pub convention: NeighborConvention,
    pub alpha0: Vec<f64>,
    /// Messages sent per exchange round.
    pub messages_per_round: usize,
    pub records: Vec<IterationRecord>,
    /// `contexts[m][k]` when recording was requested.
    pub contexts: Vec<Vec<LocalAugmentedContext>>,
    pub inner: Vec<InnerRecord>,
}

impl OuterTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn final_normalized_error(&self) -> Option<f64> {
        self.last().and_then(|r| r.normalized_error)
    }
}

fn validate_run(dataset: &Dataset, graph: &Graph, cfg: &RunConfig) -> Result<()> {
    check_len("agents in dataset", graph.num_agents(), dataset.num_agents())?;
    if cfg.outer_iters == 0 {
        return Err(Error::DomainError("M must be at least 1".into()));
    }
    if !(cfg.rho > 0.0) || !cfg.rho.is_finite() {
        return Err(Error::DomainError(format!("rho must be positive, got {}", cfg.rho)));
    }
    if let Some(r) = &cfg.reference {
        check_len("reference", dataset.num_features(), r.len())?;
    }
    Ok(())
}

fn record(
    m: usize,
    states: &[AgentState],
    problem: &ErmProblem,
    dataset: &Dataset,
    graph: &Graph,
    reference: Option<&DVector<f64>>,
) -> Result<IterationRecord> {
    let betas: Vec<_> = states.iter().map(|s| s.beta.clone()).collect();
    let normalized_error = reference.map(|r| normalized_error(&betas, r)).transpose()?;
    Ok(IterationRecord {
        m,
        consensus_residual: consensus_residual(graph, &betas),
        normalized_error,
        objective: problem.network_objective(dataset, &betas)?,
        gammas: states.iter().map(|s| s.gamma.clone()).collect(),
        betas,
    })
}

/// Runs the distributed algorithm from `β = γ = 0`. Each round shares the
/// previous estimates, updates the duals with them, then solves every
/// agent's primal subproblem with the zeroth-order inner loop.
pub fn run(problem: &ErmProblem, dataset: &Dataset, graph: &Graph, cfg: &RunConfig) -> Result<OuterTrace> {
    validate_run(dataset, graph, cfg)?;
    let p = dataset.num_features();
    let k_agents = graph.num_agents();
    let sizes = dataset.samples_per_agent();
    let zos = (0..k_agents)
        .map(|k| cfg.inner.config_for(problem, cfg.rho, cfg.convention.nk(graph, k), sizes[k], p))
        .collect::<Result<Vec<_>>>()?;
    let mut states = vec![AgentState::zero(p); k_agents];
    let mut trace = OuterTrace {
        convention: cfg.convention,
        alpha0: zos.iter().map(|z| z.alpha0).collect(),
        messages_per_round: 0,
        records: Vec::with_capacity(cfg.outer_iters),
        contexts: Vec::new(),
        inner: Vec::new(),
    };
    for m in 1..=cfg.outer_iters {
        trace.messages_per_round = exchange(&mut states, graph);
        for k in 0..k_agents {
            states[k].gamma = dual_update(k, &states[k], graph, cfg.rho)?;
        }
        let contexts = (0..k_agents)
            .map(|k| build_context(k, &states[k], graph, cfg.rho, cfg.convention))
            .collect::<Result<Vec<_>>>()?;
        let outputs = contexts
            .par_iter()
            .enumerate()
            .map(|(k, ctx)| {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, k, m));
                primal_update(problem, dataset.block(k), ctx, &zos[k], &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, out) in outputs.into_iter().enumerate() {
            if cfg.trace_inner {
                trace
                    .inner
                    .extend(out.trace.iter().map(|&row| InnerRecord { m, agent: k, row }));
            }
            states[k].beta = out.final_iterate;
        }
        if cfg.record_contexts {
            trace.contexts.push(contexts);
        }
        trace
            .records
            .push(record(m, &states, problem, dataset, graph, cfg.reference.as_ref())?);
    }
    Ok(trace)
}

/// Decentralized ADMM with exact primal updates, agent `k`'s perturbed by
/// `N(0, σ_k² I)` before it is shared. All-zero `sigmas` give exact ADMM.
pub fn run_perturbed_exact(
    problem: &ErmProblem,
    dataset: &Dataset,
    graph: &Graph,
    cfg: &RunConfig,
    sigmas: &[f64],
    tol: f64,
) -> Result<OuterTrace> {
    use rand_distr::{Distribution, StandardNormal};
    validate_run(dataset, graph, cfg)?;
    check_len("noise scales", graph.num_agents(), sigmas.len())?;
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::DomainError(format!("noise scale must be non-negative, got {s}")));
    }
    let p = dataset.num_features();
    let k_agents = graph.num_agents();
    let mut states = vec![AgentState::zero(p); k_agents];
    let mut trace = OuterTrace {
        convention: cfg.convention,
        alpha0: Vec::new(),
        messages_per_round: 0,
        records: Vec::with_capacity(cfg.outer_iters),
        contexts: Vec::new(),
        inner: Vec::new(),
    };
    for m in 1..=cfg.outer_iters {
        trace.messages_per_round = exchange(&mut states, graph);
        for k in 0..k_agents {
            states[k].gamma = dual_update(k, &states[k], graph, cfg.rho)?;
        }
        let contexts = (0..k_agents)
            .map(|k| build_context(k, &states[k], graph, cfg.rho, cfg.convention))
            .collect::<Result<Vec<_>>>()?;
        for (k, ctx) in contexts.iter().enumerate() {
            let mut beta = exact_primal_oracle(problem, dataset.block(k), ctx, tol)?;
            if sigmas[k] > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, k, m));
                beta.iter_mut()
                    .for_each(|b| *b += sigmas[k] * Distribution::<f64>::sample(&StandardNormal, &mut rng));
            }
            states[k].beta = beta;
        }
        if cfg.record_contexts {
            trace.contexts.push(contexts);
        }
        trace
            .records
            .push(record(m, &states, problem, dataset, graph, cfg.reference.as_ref())?);
    }
    Ok(trace)
}
