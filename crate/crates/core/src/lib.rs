//! `allocsim`: online allocation of budgeted items to sequentially arriving
//! customers.
//!
//! Each arriving customer belongs to one of `m` types and is shown one of `n`
//! items. Item `i` earns reward `r_i` when bought and has a stock `b_i`. The
//! purchase probabilities `P[j, i]` are unknown and learned online. The crate
//! provides:
//!
//! - [`dual`]: the entropy-regularized dual objective, its gradient, the
//!   softmax primal map, and a projected-gradient offline benchmark solver.
//! - [`bandit`]: per-type UCB preference learning.
//! - [`integrated`]: the online loop that couples UCB exploration with
//!   projected online gradient descent on the dual and samples items from the
//!   primal row.
//! - [`segmentation`]: splits a horizon with time-varying Poisson rates into
//!   segments that can be treated as stationary, with certified bounds on the
//!   per-type arrival probabilities.
//! - [`arrivals`]: stationary and non-homogeneous (thinning) Poisson samplers.
//! - [`model`]: instances, rate functions, JSON configuration, and the
//!   canned experiment scenarios.
//! - [`harness`]: greedy baseline, regret and revenue metrics, experiment
//!   orchestration and CSV reports.
//!
//! Indices are 0-based throughout the library; CSV exports use 1-based type
//! and item labels.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrivals;
pub mod bandit;
pub mod dual;
pub mod error;
pub mod harness;
pub mod integrated;
pub mod model;
pub mod segmentation;

mod rng;

pub use error::{Error, InstanceViolation, Result};
pub use model::{
    AlgorithmParams, ArrivalModel, Budget, BudgetAccounting, ProblemInstance, RateFunction,
    RatePiece, PieceKind, SimConfig, StepRule, ValidatedInstance,
};
