//! Regularized least-squares ERM split across agents.
//!
//! Agent `k` holds `(X_k, y_k)` and the local objective
//! `f_k(β) = (1/N_k)‖X_k β − y_k‖² + (η/K)‖β‖₁`, so that the local objectives
//! sum to the network-wide problem.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::zeroth_order::ValueOracle;

/// Row-norm guard used by normalization: every row ends strictly inside the unit ball.
pub const ROW_NORM_GUARD: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl AgentData {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        check_len("response length", x.nrows(), y.len())?;
        Ok(AgentData { x, y })
    }

    pub fn num_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.x.ncols()
    }
}

/// Per-agent data blocks sharing a feature count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    blocks: Vec<AgentData>,
}

impl Dataset {
    pub fn new(blocks: Vec<AgentData>) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Config("dataset needs at least one agent".into()));
        };
        let p = first.num_features();
        if p == 0 {
            return Err(Error::Config("dataset needs at least one feature".into()));
        }
        for b in &blocks {
            check_len("feature count", p, b.num_features())?;
            if b.num_samples() == 0 {
                return Err(Error::Config("every agent needs at least one sample".into()));
            }
        }
        Ok(Dataset { blocks })
    }

    pub fn blocks(&self) -> &[AgentData] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &AgentData {
        &self.blocks[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut AgentData {
        &mut self.blocks[k]
    }

    pub fn num_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_features(&self) -> usize {
        self.blocks[0].num_features()
    }

    pub fn samples_per_agent(&self) -> Vec<usize> {
        self.blocks.iter().map(AgentData::num_samples).collect()
    }

    pub fn total_samples(&self) -> usize {
        self.blocks.iter().map(AgentData::num_samples).sum()
    }

    /// Stacked `(X, y)` in agent order.
    pub fn stacked(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.total_samples();
        let p = self.num_features();
        let mut x = DMatrix::zeros(n, p);
        let mut y = DVector::zeros(n);
        let mut row = 0;
        for b in &self.blocks {
            let nk = b.num_samples();
            x.rows_mut(row, nk).copy_from(&b.x);
            y.rows_mut(row, nk).copy_from(&b.y);
            row += nk;
        }
        (x, y)
    }

    /// Scales columns of the stacked design to unit maximum magnitude, then
    /// shrinks each row whose norm is not below one onto the sphere of radius
    /// `1 − 1e−9`. Responses are left untouched.
    pub fn normalize(&self) -> Result<Dataset> {
        Ok(self.scale_columns()?.scale_rows())
    }

    /// Divides every column of the stacked design by its maximum magnitude.
    pub fn scale_columns(&self) -> Result<Dataset> {
        let p = self.num_features();
        let mut col_max = vec![0.0f64; p];
        for b in &self.blocks {
            for j in 0..p {
                for v in b.x.column(j).iter() {
                    col_max[j] = col_max[j].max(v.abs());
                }
            }
        }
        if let Some(j) = col_max.iter().position(|&m| m == 0.0) {
            return Err(Error::ZeroColumn(j));
        }
        let mut out = self.clone();
        for b in &mut out.blocks {
            for j in 0..p {
                b.x.column_mut(j).scale_mut(1.0 / col_max[j]);
            }
        }
        Ok(out)
    }

    /// Divides each row by `max(1, ‖row‖ / (1 − 1e−9))`.
    pub fn scale_rows(&self) -> Dataset {
        let mut out = self.clone();
        for b in &mut out.blocks {
            for i in 0..b.x.nrows() {
                let shrink = (b.x.row(i).norm() / ROW_NORM_GUARD).max(1.0);
                if shrink > 1.0 {
                    b.x.row_mut(i).scale_mut(1.0 / shrink);
                }
            }
        }
        out
    }

    pub fn max_row_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.x.row_iter().map(|r| r.norm()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    /// Writes the dataset as CSV: a comment header with `K`, `N_k` and `P`,
    /// a column header, then one row per sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let nks: Vec<String> = self.samples_per_agent().iter().map(|n| n.to_string()).collect();
        writeln!(
            out,
            "# dzoa-dataset v1 K={} N_k={} P={}",
            self.num_agents(),
            nks.join(","),
            self.num_features()
        )?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["agent".to_string(), "y".to_string()];
        header.extend((0..self.num_features()).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for (k, b) in self.blocks.iter().enumerate() {
            for i in 0..b.num_samples() {
                let mut rec = vec![(k + 1).to_string(), b.y[i].to_string()];
                rec.extend(b.x.row(i).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Dataset> {
        let mut first = String::new();
        input.read_line(&mut first)?;
        let header = parse_dataset_header(first.trim())?;
        let mut rdr = csv::Reader::from_reader(input);
        let p = header.features;
        let mut rows: Vec<Vec<(f64, Vec<f64>)>> = vec![Vec::new(); header.samples.len()];
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != p + 2 {
                return Err(Error::DimensionMismatch {
                    what: "dataset csv row",
                    expected: p + 2,
                    got: rec.len(),
                });
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad number {s:?}: {e}")))
            };
            let agent: usize = rec[0]
                .trim()
                .parse()
                .map_err(|e| Error::Config(format!("bad agent id: {e}")))?;
            if agent == 0 || agent > rows.len() {
                return Err(Error::Config(format!("agent id {agent} out of range")));
            }
            let y = parse(&rec[1])?;
            let x = (0..p).map(|j| parse(&rec[j + 2])).collect::<Result<Vec<_>>>()?;
            rows[agent - 1].push((y, x));
        }
        let mut blocks = Vec::with_capacity(rows.len());
        for (k, r) in rows.into_iter().enumerate() {
            check_len("samples for agent", header.samples[k], r.len())?;
            let x = DMatrix::from_row_iterator(r.len(), p, r.iter().flat_map(|(_, x)| x.iter().copied()));
            let y = DVector::from_iterator(r.len(), r.iter().map(|(y, _)| *y));
            blocks.push(AgentData::new(x, y)?);
        }
        Dataset::new(blocks)
    }

    pub fn load_csv(path: &Path) -> Result<Dataset> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Dataset::read_csv(f)
    }
}

struct DatasetHeader {
    samples: Vec<usize>,
    features: usize,
}

fn parse_dataset_header(line: &str) -> Result<DatasetHeader> {
    let bad = || Error::Config(format!("bad dataset header: {line:?}"));
    let rest = line.strip_prefix("# dzoa-dataset v1").ok_or_else(bad)?;
    let mut k = None;
    let mut samples = None;
    let mut features = None;
    for field in rest.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(bad)?;
        match key {
            "K" => k = Some(value.parse::<usize>().map_err(|_| bad())?),
            "N_k" => {
                samples = Some(
                    value
                        .split(',')
                        .map(|v| v.parse::<usize>().map_err(|_| bad()))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "P" => features = Some(value.parse::<usize>().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    let (k, samples, features) = (k.ok_or_else(bad)?, samples.ok_or_else(bad)?, features.ok_or_else(bad)?);
    check_len("N_k entries in header", k, samples.len())?;
    Ok(DatasetHeader { samples, features })
}

/// Synthetic linear-regression data: `X` i.i.d. standard normal,
/// `y = Xω + ψ`, `ω ~ N(0, I_P)`, `ψ ~ N(0, noise_std² I_N)`.
///
/// Returns the dataset and the ground-truth `ω`.
pub fn synthesize_data(
    num_agents: usize,
    samples_per_agent: usize,
    num_features: usize,
    noise_std: f64,
    seed: u64,
) -> Result<(Dataset, DVector<f64>)> {
    if num_agents == 0 || samples_per_agent == 0 || num_features == 0 {
        return Err(Error::Config("dataset dimensions must be positive".into()));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Config("noise_std must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DVector::from_fn(num_features, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut blocks = Vec::with_capacity(num_agents);
    for _ in 0..num_agents {
        let x = DMatrix::from_fn(samples_per_agent, num_features, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let noise = DVector::from_fn(samples_per_agent, |_, _| {
            noise_std * rng.sample::<f64, _>(StandardNormal)
        });
        let y = &x * &omega + noise;
        blocks.push(AgentData { x, y });
    }
    Ok((Dataset::new(blocks)?, omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// `ℓ(x, y; β) = (xᵀβ − y)²`
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    /// `R(β) = ‖β‖₁`
    L1,
}

/// Regularized ERM definition shared by all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct ErmProblem {
    pub loss: Loss,
    pub regularizer: Regularizer,
    pub eta: f64,
    /// Bound on the per-sample loss gradient norm.
    pub c1: f64,
    pub num_agents: usize,
}

impl ErmProblem {
    /// Lasso with regularization weight `eta > 0`.
    pub fn lasso(eta: f64, c1: f64, num_agents: usize) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::DomainError(format!("eta must be positive, got {eta}")));
        }
        Self::with_eta(eta, c1, num_agents)
    }

    /// Unregularized least squares (`eta = 0`); used for solver checks.
    pub fn least_squares(c1: f64, num_agents: usize) -> Result<Self> {
        Self::with_eta(0.0, c1, num_agents)
    }

    fn with_eta(eta: f64, c1: f64, num_agents: usize) -> Result<Self> {
        if !(c1 > 0.0) || !c1.is_finite() {
            return Err(Error::DomainError(format!("c1 must be positive, got {c1}")));
        }
        if num_agents == 0 {
            return Err(Error::DomainError("num_agents must be positive".into()));
        }
        Ok(ErmProblem {
            loss: Loss::LeastSquares,
            regularizer: Regularizer::L1,
            eta,
            c1,
            num_agents,
        })
    }

    /// Per-agent regularizer weight `η / K`.
    pub fn local_reg_weight(&self) -> f64 {
        self.eta / self.num_agents as f64
    }

    /// Per-sample loss gradient `∇ℓ(x, y; β)`.
    pub fn loss_gradient(&self, x: &[f64], y: f64, beta: &DVector<f64>) -> DVector<f64> {
        match self.loss {
            Loss::LeastSquares => {
                let r: f64 = x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>() - y;
                DVector::from_iterator(x.len(), x.iter().map(|a| 2.0 * a * r))
            }
        }
    }

    pub fn regularizer_value(&self, beta: &DVector<f64>) -> f64 {
        match self.regularizer {
            Regularizer::L1 => beta.iter().map(|v| v.abs()).sum(),
        }
    }

    /// Network objective `Σ_k f_k(β_k)` for a list of local copies.
    pub fn network_objective(&self, data: &Dataset, betas: &[DVector<f64>]) -> Result<f64> {
        check_len("local estimates", data.num_agents(), betas.len())?;
        betas
            .iter()
            .enumerate()
            .map(|(k, b)| eval_local_f(self, data.block(k), b))
            .sum()
    }
}

/// `f_k(β) = (1/N_k)‖X_k β − y_k‖² + (η/K) R(β)`.
pub fn eval_local_f(problem: &ErmProblem, block: &AgentData, beta: &DVector<f64>) -> Result<f64> {
    check_len("beta", block.num_features(), beta.len())?;
    let resid = &block.x * beta - &block.y;
    Ok(resid.norm_squared() / block.num_samples() as f64
        + problem.local_reg_weight() * problem.regularizer_value(beta))
}

/// What agent `k` knows when it solves its primal subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAugmentedContext {
    pub gamma: DVector<f64>,
    pub beta_prev_self: DVector<f64>,
    pub beta_prev_neighbors: Vec<DVector<f64>>,
    pub rho: f64,
    /// Neighborhood cardinality entering the penalty and coupling terms.
    pub nk: f64,
}

impl LocalAugmentedContext {
    /// The all-zero context of the first outer iteration.
    pub fn zero(p: usize, num_neighbors: usize, rho: f64, nk: f64) -> Self {
        LocalAugmentedContext {
            gamma: DVector::zeros(p),
            beta_prev_self: DVector::zeros(p),
            beta_prev_neighbors: vec![DVector::zeros(p); num_neighbors],
            rho,
            nk,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.gamma.len();
        check_len("beta_prev_self", p, self.beta_prev_self.len())?;
        for b in &self.beta_prev_neighbors {
            check_len("neighbor beta", p, b.len())?;
        }
        if !(self.nk >= 1.0) {
            return Err(Error::DomainError(format!("nk must be >= 1, got {}", self.nk)));
        }
        if !(self.rho > 0.0) {
            return Err(Error::DomainError(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }

    /// `nk · β_k^{prev} + Σ_l β_l^{prev}`.
    pub fn coupling(&self) -> DVector<f64> {
        let mut s = &self.beta_prev_self * self.nk;
        for b in &self.beta_prev_neighbors {
            s += b;
        }
        s
    }
}

/// Agent slice of the primal ADMM objective:
/// `F_k(β) = f_k(β) + βᵀγ_k + ρ·nk·‖β‖² − ρ·βᵀ s` with `s` the coupling vector.
pub fn eval_local_augmented(
    problem: &ErmProblem,
    block: &AgentData,
    ctx: &LocalAugmentedContext,
    beta: &DVector<f64>,
) -> Result<f64> {
    ctx.validate()?;
    check_len("context", block.num_features(), ctx.dim())?;
    let f = eval_local_f(problem, block, beta)?;
    let s = ctx.coupling();
    Ok(f + beta.dot(&ctx.gamma) + ctx.rho * ctx.nk * beta.norm_squared() - ctx.rho * beta.dot(&s))
}

/// `F_k` with the data term folded into a Gram matrix, for the inner loop's
/// many evaluations. Exposes values to the zeroth-order method and the smooth
/// gradient only to the exact reference solver.
#[derive(Debug, Clone)]
pub struct LocalObjective {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    reg_weight: f64,
    penalty: f64,
    linear: DVector<f64>,
}

impl LocalObjective {
    pub fn new(problem: &ErmProblem, block: &AgentData, ctx: &LocalAugmentedContext) -> Result<Self> {
        ctx.validate()?;
        check_len("context", block.num_features(), ctx.dim())?;
        let linear = &ctx.gamma - ctx.coupling() * ctx.rho;
        Ok(Self::from_parts(problem, block, ctx.rho * ctx.nk, linear))
    }

    /// `f_k(β) + penalty·‖β‖² + βᵀ linear`.
    pub fn from_parts(problem: &ErmProblem, block: &AgentData, penalty: f64, linear: DVector<f64>) -> Self {
        let n = block.num_samples() as f64;
        let gram = block.x.transpose() * &block.x / n;
        let xty = block.x.transpose() * &block.y / n;
        let yty = block.y.norm_squared() / n;
        LocalObjective {
            gram,
            xty,
            yty,
            reg_weight: problem.local_reg_weight(),
            penalty,
            linear,
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn l1_weight(&self) -> f64 {
        self.reg_weight
    }

    /// Gradient of everything except the `l1` term.
    pub fn smooth_gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        (&self.gram * beta - &self.xty) * 2.0 + beta * (2.0 * self.penalty) + &self.linear
    }

    /// Upper bound on the Lipschitz constant of the smooth gradient.
    pub fn smoothness(&self) -> f64 {
        // Gershgorin on the PSD Gram matrix
        let g = (0..self.gram.nrows())
            .map(|i| self.gram.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        2.0 * g + 2.0 * self.penalty
    }

    /// Strong-convexity modulus contributed by the penalty alone.
    pub fn strong_convexity(&self) -> f64 {
        2.0 * self.penalty
    }

    #[inline]
    fn eval_slice(&self, w: &[f64]) -> f64 {
        let p = w.len();
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut l1 = 0.0;
        let mut sq = 0.0;
        for i in 0..p {
            let wi = w[i];
            let col = self.gram.column(i);
            let mut gi = 0.0;
            for j in 0..p {
                gi += col[j] * w[j];
            }
            quad += wi * gi;
            lin += wi * (self.linear[i] - 2.0 * self.xty[i]);
            l1 += wi.abs();
            sq += wi * wi;
        }
        quad + lin + self.yty + self.reg_weight * l1 + self.penalty * sq
    }
}

impl ValueOracle for LocalObjective {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        let v = self.eval_slice(w);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::OracleFailure("non-finite objective value".into()))
        }
    }
}

/// Outcome of checking the per-sample gradient bound `‖∇ℓ‖ ≤ c1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBoundDiagnostic {
    pub c1: f64,
    pub worst: f64,
    pub checked: usize,
    pub violations: usize,
}

impl GradientBoundDiagnostic {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Samples `draws` points uniformly in the ball of radius `radius` and checks
/// every per-sample loss gradient against `c1`. Violations are logged and
/// reported, never clipped.
pub fn check_gradient_bound<R: Rng + ?Sized>(
    problem: &ErmProblem,
    data: &Dataset,
    radius: f64,
    draws: usize,
    rng: &mut R,
) -> GradientBoundDiagnostic {
    let p = data.num_features();
    let mut diag = GradientBoundDiagnostic {
        c1: problem.c1,
        worst: 0.0,
        checked: 0,
        violations: 0,
    };
    for _ in 0..draws {
        let dir = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = radius * rng.random::<f64>().powf(1.0 / p as f64);
        let beta = dir.normalize() * r;
        record_gradients(problem, data, &beta, &mut diag);
    }
    if diag.violations > 0 {
        log::warn!(
            "gradient bound c1 = {} violated by {} of {} sampled gradients (worst {:.4})",
            diag.c1,
            diag.violations,
            diag.checked,
            diag.worst
        );
    }
    diag
}

/// Checks the gradient bound at a specific set of points, for example along
/// a recorded trajectory.
pub fn check_gradient_bound_at(
    problem: &ErmProblem,
    data: &Dataset,
    points: &[DVector<f64>],
) -> GradientBoundDiagnostic {
    let mut diag = GradientBoundDiagnostic {
        c1: problem.c1,
        worst: 0.0,
        checked: 0,
        violations: 0,
    };
    for beta in points {
        record_gradients(problem, data, beta, &mut diag);
    }
    if diag.violations > 0 {
        log::warn!(
            "gradient bound c1 = {} violated along trajectory: {} of {} (worst {:.4})",
            diag.c1,
            diag.violations,
            diag.checked,
            diag.worst
        );
    }
    diag
}

fn record_gradients(problem: &ErmProblem, data: &Dataset, beta: &DVector<f64>, diag: &mut GradientBoundDiagnostic) {
    for b in data.blocks() {
        for i in 0..b.num_samples() {
            let row: Vec<f64> = b.x.row(i).iter().copied().collect();
            let g = problem.loss_gradient(&row, b.y[i], beta).norm();
            diag.checked += 1;
            diag.worst = diag.worst.max(g);
            if g > problem.c1 {
                diag.violations += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tiny_block() -> AgentData {
        AgentData::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -0.2, 0.3, 0.7, -1.0]),
            DVector::from_vec(vec![0.4, -0.1, 0.9]),
        )
        .unwrap()
    }

    #[test]
    fn synthesize_dimensions_and_determinism() {
        let (d, omega) = synthesize_data(5, 20, 10, 0.1f64.sqrt(), 7).unwrap();
        assert_eq!(d.total_samples(), 100);
        assert_eq!(d.num_features(), 10);
        assert_eq!(omega.len(), 10);
        let (d2, omega2) = synthesize_data(5, 20, 10, 0.1f64.sqrt(), 7).unwrap();
        assert_eq!(d, d2);
        assert_eq!(omega, omega2);
        let (d3, _) = synthesize_data(5, 20, 10, 0.1f64.sqrt(), 8).unwrap();
        assert_ne!(d, d3);
    }

    #[test]
    fn zero_noise_is_exactly_linear() {
        let (d, omega) = synthesize_data(3, 4, 2, 0.0, 1).unwrap();
        for b in d.blocks() {
            assert_eq!(&b.x * &omega, b.y);
        }
    }

    #[test]
    fn constant_column_becomes_ones_before_row_scaling() {
        let x = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 2.0, -0.2]);
        let d = Dataset::new(vec![AgentData::new(x, DVector::zeros(2)).unwrap()]).unwrap();
        let cols = d.scale_columns().unwrap();
        assert_eq!(cols.block(0).x.column(0).as_slice(), &[1.0, 1.0]);
        let n = d.normalize().unwrap();
        // rows (1, 0.5) and (1, -1) are each pulled onto the guard sphere
        assert_abs_diff_eq!(n.block(0).x[(0, 0)], ROW_NORM_GUARD / 1.25f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(n.block(0).x[(1, 0)], ROW_NORM_GUARD / 2f64.sqrt(), epsilon = 1e-12);
        assert!(n.max_row_norm() < 1.0);
    }

    #[test]
    fn short_rows_are_untouched() {
        let x = DMatrix::from_row_slice(2, 2, &[0.3, 0.4, 3.0, 4.0]);
        let d = Dataset::new(vec![AgentData::new(x, DVector::zeros(2)).unwrap()]).unwrap();
        let r = d.scale_rows();
        assert_eq!(r.block(0).x.row(0), d.block(0).x.row(0));
        assert_abs_diff_eq!(r.block(0).x.row(1).norm(), ROW_NORM_GUARD, epsilon = 1e-15);
        // row scaling alone is idempotent
        assert_eq!(r.scale_rows(), r);
    }

    #[test]
    fn normalized_data_stays_in_bounds() {
        let (d, _) = synthesize_data(5, 20, 10, 0.3, 3).unwrap();
        let n = d.normalize().unwrap();
        let nn = n.normalize().unwrap();
        for data in [&n, &nn] {
            assert!(data.max_row_norm() < 1.0);
            assert!(data.blocks().iter().all(|b| b.x.amax() <= 1.0));
        }
        assert_eq!(n.blocks()[0].y, d.blocks()[0].y);
    }

    #[test]
    fn zero_column_is_reported() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        let d = Dataset::new(vec![AgentData::new(x, DVector::zeros(2)).unwrap()]).unwrap();
        assert!(matches!(d.normalize(), Err(Error::ZeroColumn(1))));
    }

    #[test]
    fn local_f_direct_arithmetic() {
        let p = ErmProblem::lasso(1.0, 1.0, 1).unwrap();
        let b = AgentData::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let beta = DVector::from_vec(vec![1.0, 0.0]);
        assert_abs_diff_eq!(eval_local_f(&p, &b, &beta).unwrap(), 1.5, epsilon = 1e-15);
        assert_eq!(eval_local_f(&p, &b, &DVector::zeros(2)).unwrap(), 0.0);
        assert!(matches!(
            eval_local_f(&p, &b, &DVector::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn doubling_eta_doubles_only_the_regularizer() {
        let b = tiny_block();
        let beta = DVector::from_vec(vec![0.3, -0.8]);
        let p1 = ErmProblem::lasso(1.0, 1.0, 2).unwrap();
        let p2 = ErmProblem::lasso(2.0, 1.0, 2).unwrap();
        let ls = ErmProblem::least_squares(1.0, 2).unwrap();
        let data = eval_local_f(&ls, &b, &beta).unwrap();
        let r1 = eval_local_f(&p1, &b, &beta).unwrap() - data;
        let r2 = eval_local_f(&p2, &b, &beta).unwrap() - data;
        assert_abs_diff_eq!(r2, 2.0 * r1, epsilon = 1e-14);
    }

    #[test]
    fn invalid_problem_parameters() {
        assert!(ErmProblem::lasso(0.0, 1.0, 1).is_err());
        assert!(ErmProblem::lasso(1.0, -1.0, 1).is_err());
    }

    #[test]
    fn augmented_reduces_to_f_at_zero_context() {
        let p = ErmProblem::lasso(0.5, 1.0, 3).unwrap();
        let b = tiny_block();
        let ctx = LocalAugmentedContext::zero(2, 2, 4.0, 2.0);
        let zero = DVector::zeros(2);
        assert_eq!(
            eval_local_augmented(&p, &b, &ctx, &zero).unwrap(),
            eval_local_f(&p, &b, &zero).unwrap()
        );
    }

    #[test]
    fn augmented_consensus_structure() {
        // zero dual, every previous estimate equal to v: coupling is 2·nk·v
        let p = ErmProblem::lasso(0.5, 1.0, 3).unwrap();
        let b = tiny_block();
        let v = DVector::from_vec(vec![0.2, -0.4]);
        let ctx = LocalAugmentedContext {
            gamma: DVector::zeros(2),
            beta_prev_self: v.clone(),
            beta_prev_neighbors: vec![v.clone(), v.clone()],
            rho: 3.0,
            nk: 2.0,
        };
        let beta = DVector::from_vec(vec![-0.7, 0.1]);
        let expected = eval_local_f(&p, &b, &beta).unwrap() + 3.0 * 2.0 * beta.norm_squared()
            - 3.0 * beta.dot(&(&v * 4.0));
        assert_abs_diff_eq!(eval_local_augmented(&p, &b, &ctx, &beta).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn fast_oracle_matches_direct_evaluation() {
        let p = ErmProblem::lasso(0.7, 1.0, 2).unwrap();
        let b = tiny_block();
        let ctx = LocalAugmentedContext {
            gamma: DVector::from_vec(vec![0.3, -0.2]),
            beta_prev_self: DVector::from_vec(vec![0.1, 0.5]),
            beta_prev_neighbors: vec![DVector::from_vec(vec![-0.4, 0.2])],
            rho: 2.0,
            nk: 1.0,
        };
        let obj = LocalObjective::new(&p, &b, &ctx).unwrap();
        for w in [[0.0, 0.0], [1.0, -2.0], [-0.3, 0.25]] {
            let direct = eval_local_augmented(&p, &b, &ctx, &DVector::from_row_slice(&w)).unwrap();
            assert_abs_diff_eq!(obj.value(&w).unwrap(), direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_bound_diagnostic_flags_large_responses() {
        let p = ErmProblem::lasso(1.0, 1.0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let small = Dataset::new(vec![AgentData::new(
            DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.2]),
            DVector::from_vec(vec![0.05, -0.1]),
        )
        .unwrap()])
        .unwrap();
        assert!(check_gradient_bound(&p, &small, 1.0, 200, &mut rng).holds());
        let large = Dataset::new(vec![AgentData::new(
            DMatrix::from_row_slice(2, 2, &[0.6, 0.1, -0.2, 0.7]),
            DVector::from_vec(vec![3.0, -2.0]),
        )
        .unwrap()])
        .unwrap();
        let diag = check_gradient_bound(&p, &large, 1.0, 200, &mut rng);
        assert!(!diag.holds());
        assert!(diag.worst > 1.0);
    }

    #[test]
    fn csv_roundtrip() {
        let (d, _) = synthesize_data(3, 4, 2, 0.1, 11).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn csv_rejects_bad_header() {
        let text = "agent,y,x0\n1,0.1,0.2\n";
        assert!(Dataset::read_csv(std::io::Cursor::new(text)).is_err());
    }
}
