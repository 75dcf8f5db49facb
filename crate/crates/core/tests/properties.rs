use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dzoa::centralized::{lasso_optimality_violation, normalized_error, solve_lasso_centralized};
use dzoa::privacy;
use dzoa::problem::{eval_local_augmented, eval_local_f, synthesize_data, ErmProblem, LocalAugmentedContext};
use dzoa::topology::{ConsensusMatrices, Graph};
use dzoa::zeroth_order::ZoConfig;

fn graph_from(seed: u64, k: usize, prob: f64) -> Graph {
    Graph::random_connected(k, prob, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn consensus_matrix_identities(seed in any::<u64>(), k in 2usize..=6, p in 1usize..=3, prob in 0.0f64..1.0) {
        let m = ConsensusMatrices::build(&graph_from(seed, k, prob), p).unwrap();
        prop_assert!((&m.h - (&m.l_plus + &m.l_minus) * 0.5).amax() <= 1e-10);
        prop_assert!((&m.q * &m.q - &m.l_minus * 0.5).amax() <= 1e-10);
        prop_assert!((&m.l_plus - &m.m_plus * m.m_plus.transpose() * 0.5).amax() <= 1e-12);
        prop_assert!((&m.l_minus - &m.m_minus * m.m_minus.transpose() * 0.5).amax() <= 1e-12);
        prop_assert!(m.lambda_min_nonzero_l_minus > 0.0);
    }

    #[test]
    fn laplacians_on_consensus_vectors(seed in any::<u64>(), k in 2usize..=6, p in 1usize..=3) {
        let g = graph_from(seed, k, 0.5);
        let m = ConsensusMatrices::build(&g, p).unwrap();
        let beta = vector(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), p);
        let w = DVector::from_fn(k * p, |i, _| beta[i % p]);
        prop_assert!((&m.l_minus * &w).amax() <= 1e-12);
        let lw = &m.l_plus * &w;
        for a in 0..k {
            let expect = &beta * (2.0 * g.degree(a) as f64);
            prop_assert!((m.block(&lw, a) - expect).amax() <= 1e-12);
        }
    }

    #[test]
    fn spectra_survive_relabeling(seed in any::<u64>(), k in 2usize..=6) {
        let g = graph_from(seed, k, 0.4);
        let mut perm: Vec<usize> = (0..k).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        for i in (1..k).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let a = ConsensusMatrices::build(&g, 2).unwrap().spectral_constants().unwrap();
        let b = ConsensusMatrices::build(&g.relabel(&perm).unwrap(), 2).unwrap().spectral_constants().unwrap();
        prop_assert!((a.0 - b.0).abs() <= 1e-10 && (a.1 - b.1).abs() <= 1e-10);
    }

    #[test]
    fn normalized_rows_are_inside_the_unit_ball(seed in any::<u64>(), k in 1usize..=4, n in 1usize..=8, p in 1usize..=6) {
        let (data, _) = synthesize_data(k, n, p, 0.3, seed).unwrap();
        let data = data.normalize().unwrap();
        prop_assert!(data.max_row_norm() < 1.0);
        for b in data.blocks() {
            prop_assert!(b.x.amax() <= 1.0);
        }
    }

    #[test]
    fn augmented_objective_at_consensus(seed in any::<u64>(), p in 1usize..=4, nbrs in 1usize..=4, rho in 0.1f64..10.0) {
        let (data, _) = synthesize_data(1, 5, p, 0.3, seed).unwrap();
        let problem = ErmProblem::lasso(1.0, 1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prev = vector(&mut rng, p);
        let beta = vector(&mut rng, p);
        let nk = nbrs as f64;
        let ctx = LocalAugmentedContext {
            gamma: DVector::zeros(p),
            beta_prev_self: prev.clone(),
            beta_prev_neighbors: vec![prev.clone(); nbrs],
            rho,
            nk,
        };
        let f = eval_local_f(&problem, data.block(0), &beta).unwrap();
        let expect = f + rho * nk * beta.norm_squared() - rho * beta.dot(&(&prev * (2.0 * nk)));
        let got = eval_local_augmented(&problem, data.block(0), &ctx, &beta).unwrap();
        prop_assert!((got - expect).abs() <= 1e-9 * expect.abs().max(1.0));
    }

    #[test]
    fn augmented_objective_is_midpoint_convex(seed in any::<u64>(), p in 1usize..=4) {
        let (data, _) = synthesize_data(1, 6, p, 0.3, seed).unwrap();
        let problem = ErmProblem::lasso(0.7, 1.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = LocalAugmentedContext {
            gamma: vector(&mut rng, p),
            beta_prev_self: vector(&mut rng, p),
            beta_prev_neighbors: vec![vector(&mut rng, p), vector(&mut rng, p)],
            rho: 2.0,
            nk: 2.0,
        };
        let a = vector(&mut rng, p);
        let b = vector(&mut rng, p);
        let f = |x: &DVector<f64>| eval_local_augmented(&problem, data.block(0), &ctx, x).unwrap();
        let mid = f(&((&a + &b) * 0.5));
        prop_assert!(mid <= 0.5 * (f(&a) + f(&b)) + 1e-9);
    }

    #[test]
    fn second_smoothing_never_exceeds_half_the_first(p in 1usize..=50, t in 1usize..=1000, u1 in 1e-4f64..10.0) {
        let cfg = ZoConfig { u1, inner_iters: 1000, samples: 1, alpha0: 1.0, radius: 1.0, lipschitz: 1.0, dim: p };
        prop_assert!(cfg.u2_at(t) <= cfg.u1_at(t) / 2.0);
        prop_assert!(cfg.u2_at(t) > 0.0);
    }

    #[test]
    fn total_epsilon_grows_with_m_and_is_linear_in_eps(eps in 0.01f64..0.5, delta in 1e-8f64..1e-2, m in 1usize..2000) {
        let a = privacy::total_epsilon(eps, delta, m).unwrap();
        prop_assert!(privacy::total_epsilon(eps, delta, m + 1).unwrap() > a);
        let b = privacy::total_epsilon(2.0 * eps, delta, m).unwrap();
        prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn calibration_inverts_the_intrinsic_epsilon(
        eps in 0.05f64..1.0, delta in 1e-8f64..1e-2, nk in 1usize..6, n_k in 5usize..200, t in 10usize..300
    ) {
        let zo = ZoConfig { u1: 1.0, inner_iters: t, samples: 30, alpha0: 1.0, radius: 1.0, lipschitz: 1.0, dim: 10 };
        let a0 = privacy::calibrate_alpha0(&zo, eps, delta, 1.0, 4.0, nk as f64, n_k, 0.5, 0.5).unwrap();
        let zo = ZoConfig { alpha0: a0, ..zo };
        let back = privacy::epsilon_intrinsic(&zo, delta, 1.0, 4.0, nk as f64, n_k, 0.5, 0.5).unwrap();
        prop_assert!((back - eps).abs() <= 1e-9 * eps);
        let sigma = privacy::sigma_for(back, delta, 1.0, 4.0, nk as f64, n_k).unwrap();
        let var = privacy::variance_upper_bound(&zo, 0.5, 0.5).unwrap();
        prop_assert!((sigma * sigma - var).abs() <= 1e-9 * var);
    }

    #[test]
    fn normalized_error_is_rotation_invariant(seed in any::<u64>(), p in 2usize..=5, k in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, _) = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0)).qr().unpack();
        let betas: Vec<_> = (0..k).map(|_| vector(&mut rng, p)).collect();
        let c = vector(&mut rng, p) + DVector::from_element(p, 3.0);
        let rotated: Vec<_> = betas.iter().map(|b| &q * b).collect();
        let a = normalized_error(&betas, &c).unwrap();
        let b = normalized_error(&rotated, &(&q * &c)).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn lasso_solutions_meet_optimality(seed in any::<u64>(), n in 3usize..30, p in 1usize..8, eta in 0.01f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let y = vector(&mut rng, n);
        let beta = solve_lasso_centralized(&x, &y, eta, 1e-9).unwrap();
        prop_assert!(lasso_optimality_violation(&x, &y, eta, &beta) <= 1e-8);
    }
}
