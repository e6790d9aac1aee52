//! Robust capacity of discrete memoryless channels with an uncertain law
//! matrix.
//!
//! The channel ranges over `Q(xi) = Q0 + scale * sum_s xi_s Q^s` with `xi` in
//! a simple convex set, and the robust capacity
//! `max_p min_xi I(p, Q(xi))` is computed by a mirror-prox saddle solver.
//! Closed-form oracles, duality bounds and an average-cost extension are
//! included. All information quantities are in nats.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cost;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod oracles;
pub mod prox;
pub mod scenario;
pub mod solver;

pub use channel::{
    grad_p, grad_xi, mutual_information, ChannelMatrix, InputDistribution, PerturbationSet,
    RealMatrix, SetKind, UncertaintyModel,
};
pub use cost::{g_of_lambda, lambda_cap, solve_with_cost, CostConstraint};
pub use error::{Error, Result};
pub use exec::Execution;
pub use oracles::{
    blahut_arimoto, bsc_robust_capacity, dual_certificate, kl_dual_objective, kl_symmetric_dual,
    upper_bound_weakly_symmetric, BscInterval, CapacityResult, KlDual, KlRow,
};
pub use prox::{Geometry, SaddlePoint};
pub use solver::{
    gap_estimate, solve, step_constants, GapEstimate, SolverConfig, SolverReport, StepConstants,
    Termination,
};
