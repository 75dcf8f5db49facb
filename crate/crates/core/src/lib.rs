//! Distributed zeroth-order ADMM for regularized empirical risk minimization
//! over a network of agents, with an accountant for the differential privacy
//! that the inner loop's sampling randomness provides on its own.
//!
//! The crate is organised around the pieces of one experiment:
//!
//! - [`topology`]: graphs and the consensus matrices of the edge-based ADMM.
//! - [`problem`]: data, the lasso objective and each agent's subproblem.
//! - [`zeroth_order`]: two-point gradient estimates and the inner loop.
//! - [`dzoa`]: the outer ADMM loop, plus exact reference updates.
//! - [`privacy`]: sensitivity, noise calibration and ε accounting.
//! - [`centralized`]: centralized solvers and convergence bounds.
//! - [`harness`]: configuration, multi-seed runs, sweeps and CSV output.

pub mod centralized;
pub mod dzoa;
pub mod error;
pub mod harness;
pub mod privacy;
pub mod problem;
mod prox;
pub mod topology;
pub mod zeroth_order;

pub use error::{Error, Result};
