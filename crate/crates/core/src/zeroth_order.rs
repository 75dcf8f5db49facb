//! Two-point stochastic gradient estimation and the mirror-descent inner loop
//! that solves an agent's primal subproblem from function values alone.

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};

/// A function that can only be evaluated, never differentiated.
pub trait ValueOracle {
    fn dim(&self) -> usize;
    fn value(&self, w: &[f64]) -> Result<f64>;
}

/// Wraps a closure as a [`ValueOracle`].
pub struct FnOracle<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnOracle<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOracle { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64> ValueOracle for FnOracle<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        let v = (self.f)(w);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::OracleFailure(format!("non-finite value {v}")))
        }
    }
}

impl<T: ValueOracle + ?Sized> ValueOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        (**self).value(w)
    }
}

/// Inner-loop hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoConfig {
    /// Smoothing base `u1`; `u_{1,t} = u1 / t`.
    pub u1: f64,
    /// Inner iterations `T`.
    pub inner_iters: usize,
    /// Direction pairs per iteration `J`.
    pub samples: usize,
    /// Initial step-size factor `α0`.
    pub alpha0: f64,
    /// Distance bound `R`.
    pub radius: f64,
    /// Lipschitz constant `L`.
    pub lipschitz: f64,
    /// Dimension `P`.
    pub dim: usize,
}

static CLAMP_LOGGED: AtomicBool = AtomicBool::new(false);

impl ZoConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("u1", self.u1),
            ("alpha0", self.alpha0),
            ("R", self.radius),
            ("L", self.lipschitz),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::DomainError(format!("{name} must be positive, got {v}")));
            }
        }
        if self.samples == 0 {
            return Err(Error::DomainError("J must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::DomainError("P must be at least 1".into()));
        }
        Ok(())
    }

    pub fn u1_at(&self, t: usize) -> f64 {
        self.u1 / t as f64
    }

    /// `u_{2,t} = u1 / (P t)²`, clamped to `u_{1,t} / 2`; the clamp can only
    /// trigger for `P = 1, t = 1`.
    pub fn u2_at(&self, t: usize) -> f64 {
        let pt = (self.dim * t) as f64;
        let raw = self.u1 / (pt * pt);
        let cap = self.u1_at(t) / 2.0;
        if raw > cap {
            if !CLAMP_LOGGED.swap(true, Ordering::Relaxed) {
                log::info!("clamping u2 at t = {t} (P = {}) to u1_t / 2", self.dim);
            }
            cap
        } else {
            raw
        }
    }

    /// `α_t = α0 R / (L √(t P ln 2P))`.
    pub fn step_size(&self, t: usize) -> f64 {
        let p = self.dim as f64;
        self.alpha0 * self.radius / (self.lipschitz * (t as f64 * p * (2.0 * p).ln()).sqrt())
    }
}

/// `u2⁻¹ [F(w + u1ν1 + u2ν2) − F(w + u1ν1)] ν2`, with exactly two oracle calls.
pub fn two_point_estimate<O: ValueOracle + ?Sized>(
    oracle: &O,
    w: &[f64],
    u1t: f64,
    u2t: f64,
    nu1: &[f64],
    nu2: &[f64],
) -> Result<DVector<f64>> {
    let p = w.len();
    check_len("nu1", p, nu1.len())?;
    check_len("nu2", p, nu2.len())?;
    if !(u1t > 0.0 && u2t > 0.0) {
        return Err(Error::DomainError("smoothing parameters must be positive".into()));
    }
    let mut scratch = vec![0.0; p];
    let scale = finite_difference(oracle, w, u1t, u2t, nu1, nu2, &mut scratch)?;
    Ok(DVector::from_iterator(p, nu2.iter().map(|v| v * scale)))
}

#[inline]
fn finite_difference<O: ValueOracle + ?Sized>(
    oracle: &O,
    w: &[f64],
    u1t: f64,
    u2t: f64,
    nu1: &[f64],
    nu2: &[f64],
    scratch: &mut [f64],
) -> Result<f64> {
    for i in 0..w.len() {
        scratch[i] = w[i] + u1t * nu1[i];
    }
    let base = oracle.value(scratch)?;
    for i in 0..w.len() {
        scratch[i] += u2t * nu2[i];
    }
    let shifted = oracle.value(scratch)?;
    Ok((shifted - base) / u2t)
}

/// One two-point sample together with the directions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub g: DVector<f64>,
    pub nu1: DVector<f64>,
    pub nu2: DVector<f64>,
}

/// Draws one direction pair and evaluates the two-point estimate.
pub fn sample_gradient<O: ValueOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    w: &[f64],
    u1t: f64,
    u2t: f64,
    rng: &mut R,
) -> Result<GradientSample> {
    let p = w.len();
    let nu1 = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let nu2 = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let g = two_point_estimate(oracle, w, u1t, u2t, nu1.as_slice(), nu2.as_slice())?;
    Ok(GradientSample { g, nu1, nu2 })
}

/// Reusable buffers for repeated gradient averaging.
struct Workspace {
    nu1: Vec<f64>,
    nu2: Vec<f64>,
    scratch: Vec<f64>,
    acc: Vec<f64>,
}

impl Workspace {
    fn new(p: usize) -> Self {
        Workspace {
            nu1: vec![0.0; p],
            nu2: vec![0.0; p],
            scratch: vec![0.0; p],
            acc: vec![0.0; p],
        }
    }

    fn average<O: ValueOracle + ?Sized, R: Rng + ?Sized>(
        &mut self,
        oracle: &O,
        w: &[f64],
        u1t: f64,
        u2t: f64,
        samples: usize,
        rng: &mut R,
    ) -> Result<()> {
        self.acc.iter_mut().for_each(|a| *a = 0.0);
        for _ in 0..samples {
            for v in self.nu1.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for v in self.nu2.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let scale = finite_difference(oracle, w, u1t, u2t, &self.nu1, &self.nu2, &mut self.scratch)?;
            for (a, n) in self.acc.iter_mut().zip(&self.nu2) {
                *a += scale * n;
            }
        }
        let inv = 1.0 / samples as f64;
        self.acc.iter_mut().for_each(|a| *a *= inv);
        Ok(())
    }
}

/// Mean of `J` independent two-point estimates at inner iteration `t`
/// (`2J` oracle calls).
pub fn averaged_gradient<O: ValueOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    w: &[f64],
    t: usize,
    cfg: &ZoConfig,
    rng: &mut R,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    check_len("iterate", cfg.dim, w.len())?;
    if t == 0 {
        return Err(Error::DomainError("inner iteration index starts at 1".into()));
    }
    let mut ws = Workspace::new(cfg.dim);
    ws.average(oracle, w, cfg.u1_at(t), cfg.u2_at(t), cfg.samples, rng)?;
    Ok(DVector::from_vec(ws.acc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerTraceRow {
    pub t: usize,
    pub grad_norm: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerLoopOutput {
    /// `β^{(T)}`, the value handed back to the outer loop.
    pub final_iterate: DVector<f64>,
    /// `(1/T) Σ_t β^{(t)}`.
    pub running_average: DVector<f64>,
    pub trace: Vec<InnerTraceRow>,
}

/// Runs `T` steps `β^{(t)} = β^{(t−1)} − α_t g^{(t)}` from `β^{(0)} = 0`.
pub fn inner_loop<O: ValueOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    cfg: &ZoConfig,
    rng: &mut R,
) -> Result<InnerLoopOutput> {
    cfg.validate()?;
    check_len("oracle dimension", cfg.dim, oracle.dim())?;
    let p = cfg.dim;
    let mut beta = vec![0.0; p];
    let mut sum = vec![0.0; p];
    let mut trace = Vec::with_capacity(cfg.inner_iters);
    let mut ws = Workspace::new(p);
    for t in 1..=cfg.inner_iters {
        let u1t = cfg.u1_at(t);
        let u2t = cfg.u2_at(t);
        debug_assert!(u2t <= u1t / 2.0);
        ws.average(oracle, &beta, u1t, u2t, cfg.samples, rng)?;
        let alpha = cfg.step_size(t);
        let mut gnorm = 0.0;
        for i in 0..p {
            gnorm += ws.acc[i] * ws.acc[i];
            beta[i] -= alpha * ws.acc[i];
            sum[i] += beta[i];
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIterate { t });
        }
        let value = oracle.value(&beta)?;
        trace.push(InnerTraceRow {
            t,
            grad_norm: gnorm.sqrt(),
            value,
        });
    }
    let denom = cfg.inner_iters.max(1) as f64;
    Ok(InnerLoopOutput {
        final_iterate: DVector::from_vec(beta),
        running_average: DVector::from_iterator(p, sum.into_iter().map(|s| s / denom)),
        trace,
    })
}

/// Largest observed `|F(a) − F(b)| / ‖a − b‖` over random pairs in a ball.
/// Diagnostic only; the inner loop uses the configured `L`.
pub fn estimate_lipschitz<O: ValueOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    center: &[f64],
    radius: f64,
    pairs: usize,
    rng: &mut R,
) -> Result<f64> {
    let p = oracle.dim();
    check_len("center", p, center.len())?;
    let mut best = 0.0f64;
    let mut a = vec![0.0; p];
    let mut b = vec![0.0; p];
    for _ in 0..pairs {
        for i in 0..p {
            a[i] = center[i] + radius * (2.0 * rng.random::<f64>() - 1.0);
            b[i] = center[i] + radius * (2.0 * rng.random::<f64>() - 1.0);
        }
        let d = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        if d > 0.0 {
            best = best.max((oracle.value(&a)? - oracle.value(&b)?).abs() / d);
        }
    }
    Ok(best)
}
