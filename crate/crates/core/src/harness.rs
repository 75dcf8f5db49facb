//! Experiment orchestration: configuration, per-seed instances, multi-run
//! experiments, privacy–accuracy sweeps and their CSV/JSON outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centralized::{erm_reference, mean_stderr};
use crate::dzoa::{self, InnerPlan, NeighborConvention, OuterTrace, RunConfig, StepPolicy};
use crate::error::{Error, Result};
use crate::privacy::{self, AccountantReport, AgentAccountingInput};
use crate::problem::{check_gradient_bound, synthesize_data, Dataset, ErmProblem, GradientBoundDiagnostic};
use crate::topology::Graph;
use crate::zeroth_order::ZoConfig;

pub const TRACE_HEADER: &str = "# dzoa-trace v1";
pub const INNER_TRACE_HEADER: &str = "# dzoa-inner-trace v1";
/// Tolerance of every exact solve done by the harness.
pub const SOLVER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub agents: usize,
    /// 1-based undirected edges.
    pub edges: Vec<[usize; 2]>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            agents: 5,
            edges: vec![[1, 2], [2, 3], [3, 4], [4, 5], [5, 1], [1, 3]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub samples_per_agent: usize,
    pub features: usize,
    pub noise_std: f64,
    pub eta: f64,
    pub rho: f64,
    pub c1: f64,
    /// Load this dataset instead of synthesizing one per seed.
    pub dataset: Option<PathBuf>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            samples_per_agent: 20,
            features: 10,
            noise_std: 0.1f64.sqrt(),
            eta: 1.0,
            rho: 4.0,
            c1: 1.0,
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoSettings {
    pub u1: f64,
    pub inner_iters: usize,
    pub samples: usize,
    /// Fixed step-size factor; calibrated to each `(ε, δ)` when absent.
    pub alpha0: Option<f64>,
    pub radius: f64,
    pub lipschitz: f64,
    pub estimator_constant: f64,
}

impl Default for ZoSettings {
    fn default() -> Self {
        ZoSettings {
            u1: 1.0,
            inner_iters: 100,
            samples: 30,
            alpha0: None,
            radius: 1.0,
            lipschitz: 1.0,
            estimator_constant: privacy::DEFAULT_ESTIMATOR_CONSTANT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyGrid {
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
}

impl Default for PrivacyGrid {
    fn default() -> Self {
        PrivacyGrid {
            epsilons: vec![0.15, 0.95],
            deltas: vec![1e-3, 1e-6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub outer_iters: usize,
    pub base_seed: u64,
    pub num_seeds: usize,
    pub out_dir: PathBuf,
    pub trace_inner: bool,
    pub convention: NeighborConvention,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            outer_iters: 200,
            base_seed: 0,
            num_seeds: 20,
            out_dir: PathBuf::from("out"),
            trace_inner: false,
            convention: NeighborConvention::GraphDegree,
        }
    }
}

/// Full experiment description; every section has working defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphConfig,
    pub problem: ProblemConfig,
    pub zo: ZoSettings,
    pub privacy: PrivacyGrid,
    pub run: RunSettings,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.build_graph()?;
        self.build_problem()?;
        let p = &self.problem;
        if p.samples_per_agent == 0 || p.features == 0 {
            return Err(Error::Config("samples_per_agent and features must be positive".into()));
        }
        if !(p.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be non-negative, got {}", p.noise_std)));
        }
        if !(p.rho > 0.0) {
            return Err(Error::Config(format!("rho must be positive, got {}", p.rho)));
        }
        self.zo_config(1.0, p.features).validate()?;
        if self.run.outer_iters == 0 || self.run.num_seeds == 0 {
            return Err(Error::Config("outer_iters and num_seeds must be positive".into()));
        }
        if self.privacy.epsilons.is_empty() || self.privacy.deltas.is_empty() {
            return Err(Error::Config("privacy grids must be nonempty".into()));
        }
        for &e in &self.privacy.epsilons {
            for &d in &self.privacy.deltas {
                privacy::PrivacyParams::new(e, d)?;
            }
        }
        Ok(())
    }

    pub fn build_graph(&self) -> Result<Graph> {
        let edges: Vec<(usize, usize)> = self.graph.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::from_one_based(self.graph.agents, &edges)
    }

    pub fn build_problem(&self) -> Result<ErmProblem> {
        ErmProblem::lasso(self.problem.eta, self.problem.c1, self.graph.agents)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.run.num_seeds as u64).map(|i| self.run.base_seed + i).collect()
    }

    fn zo_config(&self, alpha0: f64, dim: usize) -> ZoConfig {
        ZoConfig {
            u1: self.zo.u1,
            inner_iters: self.zo.inner_iters,
            samples: self.zo.samples,
            alpha0: self.zo.alpha0.unwrap_or(alpha0),
            radius: self.zo.radius,
            lipschitz: self.zo.lipschitz,
            dim,
        }
    }

    /// Inner-loop plan of a D-ZOA run at privacy target `(ε, δ)`.
    pub fn inner_plan(&self, epsilon: f64, delta: f64, beta_c_norm: f64) -> InnerPlan {
        InnerPlan {
            u1: self.zo.u1,
            inner_iters: self.zo.inner_iters,
            samples: self.zo.samples,
            radius: self.zo.radius,
            lipschitz: self.zo.lipschitz,
            step: match self.zo.alpha0 {
                Some(alpha0) => StepPolicy::Fixed { alpha0 },
                None => StepPolicy::Calibrated {
                    epsilon,
                    delta,
                    estimator_constant: self.zo.estimator_constant,
                    beta_c_norm,
                },
            },
        }
    }

    pub fn run_config(&self, epsilon: f64, delta: f64, seed: u64, reference: &DVector<f64>) -> RunConfig {
        RunConfig {
            rho: self.problem.rho,
            outer_iters: self.run.outer_iters,
            seed,
            inner: self.inner_plan(epsilon, delta, reference.norm()),
            convention: self.run.convention,
            reference: Some(reference.clone()),
            record_contexts: false,
            trace_inner: self.run.trace_inner,
        }
    }
}

/// One problem instance: normalized data and its centralized solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub seed: u64,
    pub data: Dataset,
    pub reference: DVector<f64>,
    /// Sampled check of the per-sample gradient bound `c1` in the unit ball.
    pub gradient_bound: GradientBoundDiagnostic,
}

/// Loads or synthesizes the dataset of `seed`, normalizes it and solves the
/// centralized problem. The centralized solution is a simulation-only
/// convenience; it is used for α0 calibration and error reporting.
pub fn prepare_instance(cfg: &ExperimentConfig, seed: u64) -> Result<Instance> {
    let problem = cfg.build_problem()?;
    let data = match &cfg.problem.dataset {
        Some(path) => Dataset::load_csv(path)?,
        None => {
            synthesize_data(
                cfg.graph.agents,
                cfg.problem.samples_per_agent,
                cfg.problem.features,
                cfg.problem.noise_std,
                seed,
            )?
            .0
        }
    }
    .normalize()?;
    if data.num_agents() != cfg.graph.agents {
        return Err(Error::Config(format!(
            "dataset has {} agents, graph has {}",
            data.num_agents(),
            cfg.graph.agents
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let gradient_bound = check_gradient_bound(&problem, &data, 1.0, 64, &mut rng);
    let reference = erm_reference(&problem, &data, SOLVER_TOL)?;
    Ok(Instance {
        seed,
        data,
        reference,
        gradient_bound,
    })
}

/// Per-agent `α0` whose intrinsic privacy equals `(ε, δ)`.
pub fn calibrate_alpha0(
    cfg: &ExperimentConfig,
    graph: &Graph,
    data: &Dataset,
    epsilon: f64,
    delta: f64,
    beta_c_norm: f64,
) -> Result<Vec<f64>> {
    let sizes = data.samples_per_agent();
    (0..graph.num_agents())
        .map(|k| {
            privacy::calibrate_alpha0(
                &cfg.zo_config(1.0, data.num_features()),
                epsilon,
                delta,
                cfg.problem.c1,
                cfg.problem.rho,
                cfg.run.convention.nk(graph, k),
                sizes[k],
                cfg.zo.estimator_constant,
                beta_c_norm,
            )
        })
        .collect()
}

/// Per-agent Gaussian noise scales of the explicit-perturbation baseline.
pub fn baseline_sigmas(cfg: &ExperimentConfig, graph: &Graph, data: &Dataset, epsilon: f64, delta: f64) -> Result<Vec<f64>> {
    let sizes = data.samples_per_agent();
    (0..graph.num_agents())
        .map(|k| {
            privacy::sigma_for(
                epsilon,
                delta,
                cfg.problem.c1,
                cfg.problem.rho,
                cfg.run.convention.nk(graph, k),
                sizes[k],
            )
        })
        .collect()
}

/// ADMM with exact primal updates plus explicit Gaussian perturbation of
/// every shared estimate, at noise scales `sigmas`.
pub fn noisy_admm_baseline(
    cfg: &ExperimentConfig,
    graph: &Graph,
    instance: &Instance,
    sigmas: &[f64],
    seed: u64,
) -> Result<OuterTrace> {
    let problem = cfg.build_problem()?;
    let mut run_cfg = cfg.run_config(1.0, privacy::MAX_DELTA, seed, &instance.reference);
    run_cfg.trace_inner = false;
    dzoa::run_perturbed_exact(&problem, &instance.data, graph, &run_cfg, sigmas, SOLVER_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dzoa,
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dzoa => "dzoa",
            Method::Baseline => "baseline",
        }
    }
}

/// Everything recorded about one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub method: Method,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub convention: &'static str,
    pub messages_per_round: usize,
    pub beta_c: Vec<f64>,
    pub alpha0: Vec<f64>,
    pub baseline_sigmas: Vec<f64>,
    /// Privacy claim of a D-ZOA run with every parameter it depends on.
    pub accountant: Option<AccountantReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub meta: RunMetadata,
    pub trace: OuterTrace,
}

impl RunOutcome {
    pub fn initial_error(&self) -> f64 {
        self.trace.records.first().and_then(|r| r.normalized_error).unwrap_or(f64::NAN)
    }

    pub fn final_error(&self) -> f64 {
        self.trace.final_normalized_error().unwrap_or(f64::NAN)
    }
}

pub fn run_id(method: Method, epsilon: f64, delta: f64, seed: u64) -> String {
    format!("{}_eps{}_delta{}_seed{}", method.name(), epsilon, delta, seed)
}

/// Runs one method at one privacy target on one instance.
pub fn run_single(
    cfg: &ExperimentConfig,
    graph: &Graph,
    instance: &Instance,
    method: Method,
    epsilon: f64,
    delta: f64,
) -> Result<RunOutcome> {
    let id = run_id(method, epsilon, delta, instance.seed);
    let inner = || -> Result<RunOutcome> {
        let problem = cfg.build_problem()?;
        let beta_c_norm = instance.reference.norm();
        let mut meta = RunMetadata {
            run_id: id.clone(),
            method,
            epsilon,
            delta,
            seed: instance.seed,
            convention: cfg.run.convention.name(),
            messages_per_round: 0,
            beta_c: instance.reference.iter().copied().collect(),
            alpha0: Vec::new(),
            baseline_sigmas: Vec::new(),
            accountant: None,
        };
        let trace = match method {
            Method::Dzoa => {
                let run_cfg = cfg.run_config(epsilon, delta, instance.seed, &instance.reference);
                let trace = dzoa::run(&problem, &instance.data, graph, &run_cfg)?;
                let sizes = instance.data.samples_per_agent();
                let inputs: Vec<AgentAccountingInput> = (0..graph.num_agents())
                    .map(|k| AgentAccountingInput {
                        nk: cfg.run.convention.nk(graph, k),
                        n_k: sizes[k],
                        zo: cfg.zo_config(trace.alpha0[k], instance.data.num_features()),
                    })
                    .collect();
                meta.accountant = Some(AccountantReport::compute(
                    &inputs,
                    cfg.problem.c1,
                    cfg.problem.rho,
                    delta,
                    cfg.run.outer_iters,
                    cfg.zo.estimator_constant,
                    beta_c_norm,
                )?);
                meta.alpha0 = trace.alpha0.clone();
                trace
            }
            Method::Baseline => {
                let sigmas = baseline_sigmas(cfg, graph, &instance.data, epsilon, delta)?;
                let trace = noisy_admm_baseline(cfg, graph, instance, &sigmas, instance.seed)?;
                meta.baseline_sigmas = sigmas;
                trace
            }
        };
        meta.messages_per_round = trace.messages_per_round;
        Ok(RunOutcome { meta, trace })
    };
    inner().map_err(|e| e.in_run(id.clone()))
}

/// Writes the per-iteration trace of one run.
pub fn write_trace_csv<W: Write>(out: W, outcome: &RunOutcome) -> Result<()> {
    let mut out = out;
    writeln!(out, "{TRACE_HEADER}")?;
    let p = outcome.meta.beta_c.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["m", "agent", "method", "epsilon", "delta", "seed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..p).map(|i| format!("beta_{i}")));
    header.extend((0..p).map(|i| format!("gamma_{i}")));
    header.extend(["consensus_residual", "normalized_error", "objective"].iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for rec in &outcome.trace.records {
        for k in 0..rec.betas.len() {
            let mut row = vec![
                rec.m.to_string(),
                (k + 1).to_string(),
                outcome.meta.method.name().to_string(),
                outcome.meta.epsilon.to_string(),
                outcome.meta.delta.to_string(),
                outcome.meta.seed.to_string(),
            ];
            row.extend(rec.betas[k].iter().map(|v| v.to_string()));
            row.extend(rec.gammas[k].iter().map(|v| v.to_string()));
            row.push(rec.consensus_residual.to_string());
            row.push(rec.normalized_error.map(|v| v.to_string()).unwrap_or_default());
            row.push(rec.objective.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_inner_trace_csv<W: Write>(out: W, trace: &OuterTrace) -> Result<()> {
    let mut out = out;
    writeln!(out, "{INNER_TRACE_HEADER}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["m", "agent", "t", "grad_norm", "value"])?;
    for r in &trace.inner {
        w.write_record([
            r.m.to_string(),
            (r.agent + 1).to_string(),
            r.row.t.to_string(),
            r.row.grad_norm.to_string(),
            r.row.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Row of `aggregate.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub run_id: String,
    pub method: Method,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    /// Per-iteration ε composed over all outer iterations.
    pub epsilon_total: f64,
    pub initial_error: f64,
    pub final_error: f64,
    pub final_consensus_residual: f64,
    pub final_objective: f64,
}

impl AggregateRow {
    fn from_outcome(o: &RunOutcome, outer_iters: usize) -> Result<Self> {
        let last = o.trace.last().ok_or_else(|| Error::Config("empty trace".into()))?;
        Ok(AggregateRow {
            run_id: o.meta.run_id.clone(),
            method: o.meta.method,
            epsilon: o.meta.epsilon,
            delta: o.meta.delta,
            seed: o.meta.seed,
            epsilon_total: privacy::total_epsilon(o.meta.epsilon, o.meta.delta, outer_iters)?,
            initial_error: o.initial_error(),
            final_error: o.final_error(),
            final_consensus_residual: last.consensus_residual,
            final_objective: last.objective,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub rows: Vec<AggregateRow>,
}

fn write_run_files(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    let id = &outcome.meta.run_id;
    write_trace_csv(fs::File::create(dir.join(format!("{id}.csv")))?, outcome)?;
    fs::write(
        dir.join(format!("{id}.json")),
        serde_json::to_string_pretty(&outcome.meta)? + "\n",
    )?;
    if !outcome.trace.inner.is_empty() {
        write_inner_trace_csv(fs::File::create(dir.join(format!("{id}_inner.csv")))?, &outcome.trace)?;
    }
    Ok(())
}

fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>> {
    cfg.seeds()
        .par_iter()
        .map(|&s| prepare_instance(cfg, s).map_err(|e| e.in_run(format!("instance seed {s}"))))
        .collect()
}

fn run_grid(cfg: &ExperimentConfig, methods: &[Method], write_runs: bool) -> Result<(Vec<RunOutcome>, PathBuf)> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let instances = instances(cfg)?;
    let mut jobs = Vec::new();
    for &method in methods {
        for &epsilon in &cfg.privacy.epsilons {
            for &delta in &cfg.privacy.deltas {
                for inst in &instances {
                    jobs.push((method, epsilon, delta, inst));
                }
            }
        }
    }
    let runs_dir = cfg.run.out_dir.join("runs");
    if write_runs {
        fs::create_dir_all(&runs_dir)?;
    }
    let outcomes = jobs
        .par_iter()
        .map(|&(method, epsilon, delta, inst)| {
            let o = run_single(cfg, &graph, inst, method, epsilon, delta)?;
            if write_runs {
                write_run_files(&runs_dir, &o).map_err(|e| e.in_run(o.meta.run_id.clone()))?;
            }
            log::info!("{} final error {:.6}", o.meta.run_id, o.final_error());
            Ok(o)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((outcomes, runs_dir))
}

/// D-ZOA for every `(ε, δ, seed)`. Writes one trace CSV and one metadata
/// JSON per run under `out_dir/runs`, then `out_dir/aggregate.csv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (outcomes, _) = run_grid(cfg, &[Method::Dzoa], true)?;
    let rows = outcomes
        .iter()
        .map(|o| AggregateRow::from_outcome(o, cfg.run.outer_iters))
        .collect::<Result<Vec<_>>>()?;
    fs::write(cfg.run.out_dir.join("config.toml"), cfg.to_toml_string())?;
    write_aggregate(&cfg.run.out_dir.join("aggregate.csv"), &rows)?;
    Ok(ExperimentReport {
        out_dir: cfg.run.out_dir.clone(),
        rows,
    })
}

/// Row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: Method,
    pub epsilon: f64,
    pub delta: f64,
    pub epsilon_bar: f64,
    pub runs: usize,
    pub mean_final_error: f64,
    pub stderr_final_error: f64,
}

/// D-ZOA and the explicit-noise baseline over the privacy grid, summarized
/// per `(method, ε, δ)` in `out_dir/sweep.csv`.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let (outcomes, _) = run_grid(cfg, &[Method::Dzoa, Method::Baseline], false)?;
    let mut rows = Vec::new();
    for method in [Method::Dzoa, Method::Baseline] {
        for &epsilon in &cfg.privacy.epsilons {
            for &delta in &cfg.privacy.deltas {
                let errs: Vec<f64> = outcomes
                    .iter()
                    .filter(|o| o.meta.method == method && o.meta.epsilon == epsilon && o.meta.delta == delta)
                    .map(|o| o.final_error())
                    .collect();
                let (mean, se) = mean_stderr(&errs);
                rows.push(SweepRow {
                    method,
                    epsilon,
                    delta,
                    epsilon_bar: privacy::total_epsilon(epsilon, delta, cfg.run.outer_iters)?,
                    runs: errs.len(),
                    mean_final_error: mean,
                    stderr_final_error: se,
                });
            }
        }
    }
    fs::create_dir_all(&cfg.run.out_dir)?;
    let mut w = csv::Writer::from_path(cfg.run.out_dir.join("sweep.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Accountant report for the configured network at one privacy target,
/// using the instance of the base seed for `‖β^c‖`.
pub fn accountant_for(cfg: &ExperimentConfig, epsilon: f64, delta: f64) -> Result<AccountantReport> {
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let inst = prepare_instance(cfg, cfg.run.base_seed)?;
    let beta_c_norm = inst.reference.norm();
    let alpha0 = calibrate_alpha0(cfg, &graph, &inst.data, epsilon, delta, beta_c_norm)?;
    let sizes = inst.data.samples_per_agent();
    let inputs: Vec<_> = (0..graph.num_agents())
        .map(|k| AgentAccountingInput {
            nk: cfg.run.convention.nk(&graph, k),
            n_k: sizes[k],
            zo: cfg.zo_config(alpha0[k], inst.data.num_features()),
        })
        .collect();
    AccountantReport::compute(
        &inputs,
        cfg.problem.c1,
        cfg.problem.rho,
        delta,
        cfg.run.outer_iters,
        cfg.zo.estimator_constant,
        beta_c_norm,
    )
}

/// Outer and inner convergence bounds of the configured experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub delta: f64,
    pub q_distance_sq: f64,
    pub lambda_max_l_plus: f64,
    pub lambda_min_l_minus: f64,
    /// Worst case over agents.
    pub outer_bound: f64,
    pub privacy_floor: f64,
    /// Worst case over agents of the inner running-average bound.
    pub inner: f64,
}

pub fn bounds_for(cfg: &ExperimentConfig, epsilon: f64, delta: f64) -> Result<BoundReport> {
    use crate::centralized::{inner_bound, q_g_distance_sq, replicate, theorem3_bound, BoundInputs};
    use crate::topology::ConsensusMatrices;
    cfg.validate()?;
    let graph = cfg.build_graph()?;
    let inst = prepare_instance(cfg, cfg.run.base_seed)?;
    let p = inst.data.num_features();
    let k_agents = graph.num_agents();
    let mats = ConsensusMatrices::build(&graph, p)?;
    let z = DVector::zeros(k_agents * p);
    let q = q_g_distance_sq(cfg.problem.rho, &mats.l_plus, &z, &z, &z, &replicate(&inst.reference, k_agents))?;
    let alpha0 = calibrate_alpha0(cfg, &graph, &inst.data, epsilon, delta, inst.reference.norm())?;
    let sizes = inst.data.samples_per_agent();
    let mut outer_bound = f64::NEG_INFINITY;
    let mut floor = f64::NEG_INFINITY;
    let mut inner = f64::NEG_INFINITY;
    for k in 0..k_agents {
        let b = BoundInputs {
            q_distance_sq: q,
            outer_iters: cfg.run.outer_iters,
            c1: cfg.problem.c1,
            dim: p,
            rho: cfg.problem.rho,
            delta,
            epsilon,
            lambda_max_l_plus: mats.lambda_max_l_plus,
            lambda_min_l_minus: mats.lambda_min_nonzero_l_minus,
            nk: cfg.run.convention.nk(&graph, k),
            n_k: sizes[k],
        };
        outer_bound = outer_bound.max(theorem3_bound(&b));
        floor = floor.max(b.privacy_floor());
        inner = inner.max(inner_bound(&cfg.zo_config(alpha0[k], p), cfg.zo.inner_iters)?);
    }
    Ok(BoundReport {
        epsilon,
        delta,
        q_distance_sq: q,
        lambda_max_l_plus: mats.lambda_max_l_plus,
        lambda_min_l_minus: mats.lambda_min_nonzero_l_minus,
        outer_bound,
        privacy_floor: floor,
        inner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.graph = GraphConfig {
            agents: 3,
            edges: vec![[1, 2], [2, 3]],
        };
        cfg.problem.samples_per_agent = 6;
        cfg.problem.features = 3;
        cfg.zo.inner_iters = 10;
        cfg.zo.samples = 4;
        cfg.run.outer_iters = 3;
        cfg.run.num_seeds = 2;
        cfg.privacy.epsilons = vec![0.5];
        cfg.privacy.deltas = vec![1e-3];
        cfg.run.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.seeds().len(), 20);
        assert_eq!(cfg.build_graph().unwrap().num_edges(), 6);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[problem]\nrho = 2.0\n[zo]\nalpha0 = 0.7\n").unwrap();
        assert_eq!(cfg.problem.rho, 2.0);
        assert_eq!(cfg.problem.eta, 1.0);
        assert_eq!(cfg.zo.alpha0, Some(0.7));
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("[privacy]\nepsilons = [1.5]\n"),
            Err(Error::DomainError(_))
        ));
        assert!(ExperimentConfig::from_toml_str("[problem]\nunknown = 1\n").is_err());
        assert!(matches!(
            ExperimentConfig::from_toml_str("[graph]\nagents = 3\nedges = [[1, 2]]\n"),
            Err(Error::DisconnectedGraph { .. })
        ));
    }

    #[test]
    fn calibration_is_per_agent() {
        let cfg = ExperimentConfig::default();
        let graph = cfg.build_graph().unwrap();
        let inst = prepare_instance(&cfg, 0).unwrap();
        let a = calibrate_alpha0(&cfg, &graph, &inst.data, 0.5, 1e-3, inst.reference.norm()).unwrap();
        // agents 1 and 3 have degree 3, the others degree 2
        assert_eq!(a[0], a[2]);
        assert_eq!(a[1], a[3]);
        assert_eq!(a[1], a[4]);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn experiment_writes_consistent_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2);
        let back = read_aggregate(&dir.path().join("aggregate.csv")).unwrap();
        assert_eq!(back, report.rows);
        let trace = fs::read_to_string(dir.path().join("runs").join(format!("{}.csv", report.rows[0].run_id))).unwrap();
        assert!(trace.starts_with(TRACE_HEADER));
        // header plus one line per (m, agent)
        assert_eq!(trace.lines().count(), 2 + 3 * 3);
    }

    #[test]
    fn sweep_has_one_row_per_method_and_target() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.privacy.epsilons = vec![0.2, 0.8];
        let rows = sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.epsilon_bar, privacy::total_epsilon(r.epsilon, r.delta, 3).unwrap());
        }
    }
}
