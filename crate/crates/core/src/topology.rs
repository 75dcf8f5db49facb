//! Agent communication graph and the consensus matrices of edge-based
//! decentralized ADMM.
//!
//! Every undirected edge `{k, l}` produces two auxiliary blocks `z_k^l` and
//! `z_l^k`, one per ordered pair, so the auxiliary vector has `2E` blocks of
//! size `P`. With that enumeration `L+` is the signless Laplacian `D + A`,
//! `L-` the signed Laplacian `D - A`, and `H` the degree matrix, each lifted
//! by `⊗ I_P`.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Undirected, connected agent graph.
///
/// Agents are indexed `0..num_agents`. Neighborhoods include the agent itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_agents: usize,
    edges: Vec<(usize, usize)>,
    neighborhoods: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from zero-based edge endpoints.
    ///
    /// Duplicate edges (in either orientation) are merged. Self-loops,
    /// out-of-range endpoints and disconnected graphs are rejected.
    pub fn new(num_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_agents == 0 {
            return Err(Error::Config("graph needs at least one agent".into()));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in edges {
            if a >= num_agents || b >= num_agents {
                return Err(Error::InvalidEdge(a, b, "endpoint out of range"));
            }
            if a == b {
                return Err(Error::InvalidEdge(a, b, "self-loop"));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut neighborhoods: Vec<Vec<usize>> = (0..num_agents).map(|k| vec![k]).collect();
        for &(a, b) in &edges {
            neighborhoods[a].push(b);
            neighborhoods[b].push(a);
        }
        for n in &mut neighborhoods {
            n.sort_unstable();
        }
        let g = Graph {
            num_agents,
            edges,
            neighborhoods,
        };
        let reached = g.reachable_from(0);
        if reached < num_agents {
            return Err(Error::DisconnectedGraph {
                agents: num_agents,
                unreachable: num_agents - reached,
            });
        }
        Ok(g)
    }

    /// Builds a graph from one-based endpoints, the convention of config files.
    pub fn from_one_based(num_agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut zero = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == 0 || b == 0 {
                return Err(Error::InvalidEdge(a, b, "one-based endpoints start at 1"));
            }
            zero.push((a - 1, b - 1));
        }
        Graph::new(num_agents, &zero).map_err(|e| match e {
            Error::InvalidEdge(a, b, why) => Error::InvalidEdge(a + 1, b + 1, why),
            other => other,
        })
    }

    /// Five agents on a cycle with one chord between agents 1 and 3.
    ///
    /// This is only a plausible stand-in for the five-agent experiment
    /// network; pass an explicit edge list to use another one.
    pub fn default_five_agent() -> Self {
        Graph::from_one_based(5, &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 1), (1, 3)])
            .expect("default topology is connected")
    }

    pub fn path(num_agents: usize) -> Result<Self> {
        let edges: Vec<_> = (1..num_agents).map(|k| (k - 1, k)).collect();
        Graph::new(num_agents, &edges)
    }

    pub fn cycle(num_agents: usize) -> Result<Self> {
        let mut edges: Vec<_> = (1..num_agents).map(|k| (k - 1, k)).collect();
        if num_agents > 2 {
            edges.push((num_agents - 1, 0));
        }
        Graph::new(num_agents, &edges)
    }

    /// Star centered on agent 0.
    pub fn star(num_agents: usize) -> Result<Self> {
        let edges: Vec<_> = (1..num_agents).map(|k| (0, k)).collect();
        Graph::new(num_agents, &edges)
    }

    pub fn complete(num_agents: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for a in 0..num_agents {
            for b in a + 1..num_agents {
                edges.push((a, b));
            }
        }
        Graph::new(num_agents, &edges)
    }

    /// Random connected graph: a random spanning tree plus each remaining
    /// pair with probability `extra_edge_prob`.
    pub fn random_connected<R: Rng + ?Sized>(
        num_agents: usize,
        extra_edge_prob: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut edges = Vec::new();
        for k in 1..num_agents {
            let parent = rng.random_range(0..k);
            edges.push((parent, k));
        }
        for a in 0..num_agents {
            for b in a + 1..num_agents {
                if rng.random::<f64>() < extra_edge_prob {
                    edges.push((a, b));
                }
            }
        }
        Graph::new(num_agents, &edges)
    }

    /// Relabels agents: agent `k` becomes agent `perm[k]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_agents {
            return Err(Error::DimensionMismatch {
                what: "permutation",
                expected: self.num_agents,
                got: perm.len(),
            });
        }
        let edges: Vec<_> = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        Graph::new(self.num_agents, &edges)
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Undirected edges as `(k, l)` with `k < l`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighborhood of `k`, including `k`.
    pub fn neighborhood(&self, k: usize) -> &[usize] {
        &self.neighborhoods[k]
    }

    /// Neighbors of `k`, excluding `k`.
    pub fn neighbors(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighborhoods[k].iter().copied().filter(move |&l| l != k)
    }

    pub fn degree(&self, k: usize) -> usize {
        self.neighborhoods[k].len() - 1
    }

    /// Ordered pairs `(k, l)`, one per auxiliary block `z_k^l`; length `2E`.
    pub fn directed_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::with_capacity(2 * self.edges.len());
        for k in 0..self.num_agents {
            for l in self.neighbors(k) {
                pairs.push((k, l));
            }
        }
        pairs
    }

    fn reachable_from(&self, start: usize) -> usize {
        let mut seen = vec![false; self.num_agents];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(k) = queue.pop_front() {
            for &l in &self.neighborhoods[k] {
                if !seen[l] {
                    seen[l] = true;
                    count += 1;
                    queue.push_back(l);
                }
            }
        }
        count
    }
}

/// Consensus matrices of the edge-based ADMM reformulation, all lifted to
/// block size `P`.
#[derive(Debug, Clone)]
pub struct ConsensusMatrices {
    pub block_size: usize,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub m_plus: DMatrix<f64>,
    pub m_minus: DMatrix<f64>,
    pub l_plus: DMatrix<f64>,
    pub l_minus: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// Principal square root of `0.5 L-`.
    pub q: DMatrix<f64>,
    pub lambda_min_nonzero_l_minus: f64,
    pub lambda_max_l_plus: f64,
}

const EIG_EPS: f64 = 1e-14;
const EIG_MAX_ITER: usize = 10_000;

impl ConsensusMatrices {
    pub fn build(graph: &Graph, block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::Config("block size P must be positive".into()));
        }
        let p = block_size;
        let k = graph.num_agents();
        let pairs = graph.directed_pairs();
        let rows = pairs.len() * p;
        let mut a1 = DMatrix::zeros(rows, k * p);
        let mut a2 = DMatrix::zeros(rows, k * p);
        for (q, &(from, to)) in pairs.iter().enumerate() {
            for i in 0..p {
                a1[(q * p + i, from * p + i)] = 1.0;
                a2[(q * p + i, to * p + i)] = 1.0;
            }
        }
        let m_plus = a1.transpose() + a2.transpose();
        let m_minus = a1.transpose() - a2.transpose();
        let l_plus = &m_plus * m_plus.transpose() * 0.5;
        let l_minus = &m_minus * m_minus.transpose() * 0.5;
        let h = (&l_plus + &l_minus) * 0.5;
        let q = psd_sqrt(&(&l_minus * 0.5))?;
        let (lambda_min_nonzero_l_minus, lambda_max_l_plus) = spectral_pair(&l_minus, &l_plus)?;
        Ok(ConsensusMatrices {
            block_size,
            a1,
            a2,
            m_plus,
            m_minus,
            l_plus,
            l_minus,
            h,
            q,
            lambda_min_nonzero_l_minus,
            lambda_max_l_plus,
        })
    }

    /// `(λ_min_nonzero(L-), λ_max(L+))`, recomputed from the stored matrices.
    pub fn spectral_constants(&self) -> Result<(f64, f64)> {
        spectral_pair(&self.l_minus, &self.l_plus)
    }

    pub fn num_agents(&self) -> usize {
        self.h.nrows() / self.block_size
    }

    /// Block `k` of a stacked vector of length `KP`.
    pub fn block(&self, v: &DVector<f64>, k: usize) -> DVector<f64> {
        v.rows(k * self.block_size, self.block_size).into_owned()
    }

    /// Writes each matrix as `<dir>/<name>.csv`.
    pub fn export_csv(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let named = [
            ("A1", &self.a1),
            ("A2", &self.a2),
            ("Mplus", &self.m_plus),
            ("Mminus", &self.m_minus),
            ("Lplus", &self.l_plus),
            ("Lminus", &self.l_minus),
            ("H", &self.h),
            ("Q", &self.q),
        ];
        for (name, m) in named {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_path(dir.join(format!("{name}.csv")))?;
            for r in 0..m.nrows() {
                w.write_record(m.row(r).iter().map(|v| v.to_string()))?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    m.clone()
        .try_symmetric_eigen(EIG_EPS, EIG_MAX_ITER)
        .map(|e| e.eigenvalues)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolve did not converge".into()))
}

fn spectral_pair(l_minus: &DMatrix<f64>, l_plus: &DMatrix<f64>) -> Result<(f64, f64)> {
    let ev_minus = symmetric_eigenvalues(l_minus)?;
    let ev_plus = symmetric_eigenvalues(l_plus)?;
    let scale = ev_minus.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let lambda_min = ev_minus
        .iter()
        .copied()
        .filter(|&v| v > 1e-9 * scale)
        .fold(f64::INFINITY, f64::min);
    let lambda_max = ev_plus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lambda_min.is_finite() || !lambda_max.is_finite() || lambda_max <= 0.0 {
        return Err(Error::NumericalFailure(
            "graph has no nonzero Laplacian spectrum".into(),
        ));
    }
    Ok((lambda_min, lambda_max))
}

/// Principal square root of a symmetric PSD matrix. Eigenvalues in
/// `[-1e-12 · scale, 0)` are treated as rounding and clamped.
fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = m
        .clone()
        .try_symmetric_eigen(EIG_EPS, EIG_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("eigensolve for matrix root failed".into()))?;
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -1e-12 * scale {
            return Err(Error::NumericalFailure(format!(
                "matrix is not positive semidefinite (eigenvalue {v:e})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let u = &eig.eigenvectors;
    Ok(u * DMatrix::from_diagonal(&roots) * u.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_agents_smallest_connected_graph() {
        let g = Graph::from_one_based(2, &[(1, 2)]).unwrap();
        assert_eq!(g.neighborhood(0), &[0, 1]);
        assert_eq!(g.neighborhood(1), &[0, 1]);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn isolated_agent_is_rejected() {
        let err = Graph::from_one_based(3, &[(1, 2)]).unwrap_err();
        assert!(matches!(err, Error::DisconnectedGraph { unreachable: 1, .. }));
    }

    #[test]
    fn bad_edges_are_rejected() {
        assert!(matches!(
            Graph::from_one_based(3, &[(1, 1), (2, 3)]),
            Err(Error::InvalidEdge(1, 1, _))
        ));
        assert!(matches!(
            Graph::from_one_based(3, &[(1, 4)]),
            Err(Error::InvalidEdge(1, 4, _))
        ));
        assert!(matches!(Graph::new(2, &[(0, 2)]), Err(Error::InvalidEdge(..))));
    }

    #[test]
    fn default_topology_is_connected() {
        let g = Graph::default_five_agent();
        assert_eq!(g.num_agents(), 5);
        assert_eq!(g.num_edges(), 6);
        assert_eq!(g.degree(0), 3);
    }

    #[test]
    fn two_node_matrices_by_hand() {
        // z_1^2 and z_2^1: A1 picks the owner, A2 the other endpoint.
        let g = Graph::path(2).unwrap();
        let m = ConsensusMatrices::build(&g, 1).unwrap();
        assert_eq!(m.a1, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(m.a2, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert_eq!(
            m.l_minus,
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
        assert_eq!(m.l_plus, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert_eq!(m.h, DMatrix::identity(2, 2));
        let (lmin, lmax) = m.spectral_constants().unwrap();
        assert_abs_diff_eq!(lmin, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lmax, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn triangle_smallest_nonzero_is_three() {
        let g = Graph::cycle(3).unwrap();
        let m = ConsensusMatrices::build(&g, 1).unwrap();
        assert_abs_diff_eq!(m.lambda_min_nonzero_l_minus, 3.0, epsilon = 1e-10);
        // signless Laplacian of K3 has spectrum {4, 1, 1}
        assert_abs_diff_eq!(m.lambda_max_l_plus, 4.0, epsilon = 1e-10);
    }

    #[test]
    fn block_lift_keeps_spectrum() {
        let g = Graph::default_five_agent();
        let m1 = ConsensusMatrices::build(&g, 1).unwrap();
        let m2 = ConsensusMatrices::build(&g, 2).unwrap();
        let mut e1: Vec<f64> = symmetric_eigenvalues(&m1.l_minus).unwrap().iter().copied().collect();
        let mut e2: Vec<f64> = symmetric_eigenvalues(&m2.l_minus).unwrap().iter().copied().collect();
        e1.sort_by(f64::total_cmp);
        e2.sort_by(f64::total_cmp);
        for (i, v) in e1.iter().enumerate() {
            assert_abs_diff_eq!(e2[2 * i], v, epsilon = 1e-10);
            assert_abs_diff_eq!(e2[2 * i + 1], v, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(m1.lambda_min_nonzero_l_minus, m2.lambda_min_nonzero_l_minus, epsilon = 1e-10);
    }

    #[test]
    fn identities_hold() {
        let g = Graph::default_five_agent();
        let m = ConsensusMatrices::build(&g, 3).unwrap();
        let h = (&m.l_plus + &m.l_minus) * 0.5;
        assert!((&m.h - h).amax() < 1e-12);
        let qq = &m.q * &m.q;
        assert!((qq - &m.l_minus * 0.5).amax() < 1e-10);
    }

    #[test]
    fn single_agent_has_no_spectrum() {
        let g = Graph::new(1, &[]).unwrap();
        assert!(matches!(
            ConsensusMatrices::build(&g, 1),
            Err(Error::NumericalFailure(_))
        ));
    }
}
