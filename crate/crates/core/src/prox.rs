//! Accelerated proximal gradient for `g(β) + λ‖β‖₁` with smooth `g`.

use nalgebra::DVector;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 200_000;

pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

fn prox_step<G: Fn(&DVector<f64>) -> DVector<f64>>(
    grad: &G,
    at: &DVector<f64>,
    step: f64,
    l1: f64,
) -> DVector<f64> {
    let g = grad(at);
    DVector::from_iterator(
        at.len(),
        at.iter().zip(g.iter()).map(|(a, gi)| soft_threshold(a - step * gi, step * l1)),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxSolution {
    pub beta: DVector<f64>,
    pub iterations: usize,
    /// Gradient-mapping norm `L‖β − prox(β − ∇g(β)/L)‖` at `beta`.
    pub residual: f64,
}

/// FISTA with gradient-based adaptive restart. Stops once the gradient
/// mapping norm falls to `tol`.
pub fn fista<G: Fn(&DVector<f64>) -> DVector<f64>>(
    grad: G,
    lipschitz: f64,
    l1: f64,
    start: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<ProxSolution> {
    if !(tol > 0.0) {
        return Err(Error::DomainError(format!("tolerance must be positive, got {tol}")));
    }
    if !(lipschitz > 0.0) || !lipschitz.is_finite() {
        return Err(Error::NumericalFailure(format!("invalid smoothness constant {lipschitz}")));
    }
    let step = 1.0 / lipschitz;
    let mut x = start;
    let mut y = x.clone();
    let mut theta: f64 = 1.0;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let x_next = prox_step(&grad, &y, step, l1);
        // restart when momentum points uphill
        let uphill = (&y - &x_next).dot(&(&x_next - &x)) > 0.0;
        let theta_next = if uphill {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt())
        };
        y = if uphill {
            x_next.clone()
        } else {
            &x_next + (&x_next - &x) * ((theta - 1.0) / theta_next)
        };
        x = x_next;
        theta = theta_next;
        let probe = prox_step(&grad, &x, step, l1);
        residual = (&x - &probe).norm() * lipschitz;
        if !residual.is_finite() {
            return Err(Error::NumericalFailure("proximal gradient diverged".into()));
        }
        if residual <= tol {
            return Ok(ProxSolution {
                beta: probe,
                iterations: it,
                residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}
