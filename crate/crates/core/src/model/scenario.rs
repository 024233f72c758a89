//! Canned experiment set-ups: the stationary ten-type/ten-item benchmark and
//! the two non-stationary benchmarks (extreme budgets, varying rewards).

use super::config::{
    beta_preferences, gaussian_preferences, AlgorithmParams, ArrivalModel, BudgetAccounting,
    SimConfig,
};
use super::instance::{Budget, ProblemInstance};
use super::rate::{PieceKind, RateFunction, RatePiece};
use crate::error::{Error, Result};

pub const SCENARIO_TYPES: usize = 10;
pub const SCENARIO_ITEMS: usize = 10;

/// Beta(2, 5) ground truth for the stationary scenario (mean ≈ 0.29).
pub const BETA_PREFERENCE: (f64, f64) = (2.0, 5.0);
/// Normal(0.1, 0.03) ground truth for the non-stationary scenarios, clamped to [0.01, 1].
pub const GAUSSIAN_PREFERENCE: (f64, f64) = (0.1, 0.03);

/// Ten types arriving at constant rates `λ_j = 0.1·j`, ten items with rewards
/// 0.1..1.0 (ascending) and budgets 30%..10% of `T` (descending).
pub fn scenario_stationary(horizon: u64, seed: u64) -> Result<SimConfig> {
    if horizon == 0 {
        return Err(Error::Validation("horizon must be at least 1".into()));
    }
    let t = horizon as f64;
    let n = SCENARIO_ITEMS;
    let rewards = (1..=n).map(|i| i as f64 / 10.0).collect();
    let budgets = (0..n)
        .map(|i| Budget::Finite(t * (30.0 - 20.0 * i as f64 / (n - 1) as f64) / 100.0))
        .collect();
    let rates = (1..=SCENARIO_TYPES).map(|j| j as f64 / 10.0).collect();
    let (a, b) = BETA_PREFERENCE;
    let instance = ProblemInstance {
        rewards,
        budgets,
        mu: super::config::DEFAULT_MU,
        true_preferences: beta_preferences(SCENARIO_TYPES, n, a, b, seed),
        horizon,
    };
    let params = AlgorithmParams::defaults(horizon, 1.0);
    SimConfig::new(instance, ArrivalModel::Stationary { rates }, seed, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonStationaryKind {
    /// Unit rewards; one infinite budget, two at 10% and seven at 1% of `T`.
    ExtremeBudget,
    /// One item with 2/3 of `T` in stock and reward 0.2; nine at 10% with
    /// rewards evenly spaced up to 1.0.
    VaryingReward,
}

impl std::str::FromStr for NonStationaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extreme_budget" | "extreme-budget" => Ok(Self::ExtremeBudget),
            "varying_reward" | "varying-reward" => Ok(Self::VaryingReward),
            other => Err(Error::Validation(format!("unknown scenario kind `{other}`"))),
        }
    }
}

/// Unscaled rate shapes on normalized time `u ∈ [0, 1]`: two sinusoids, four
/// linear and four quadratic functions, all bounded away from zero.
fn rate_shapes() -> [(PieceKind, Vec<f64>); SCENARIO_TYPES] {
    use std::f64::consts::PI;
    [
        (PieceKind::Sinusoid, vec![0.3, 2.0 * PI, 0.0, 1.0]),
        (PieceKind::Sinusoid, vec![0.25, PI, 0.5, 0.9]),
        (PieceKind::Linear, vec![0.5, 0.8]),
        (PieceKind::Linear, vec![-0.4, 1.2]),
        (PieceKind::Linear, vec![0.8, 0.5]),
        (PieceKind::Linear, vec![-0.6, 1.4]),
        (PieceKind::Quadratic, vec![1.0, -1.0, 1.0]),
        (PieceKind::Quadratic, vec![-0.8, 0.8, 0.7]),
        (PieceKind::Quadratic, vec![0.6, 0.2, 0.6]),
        (PieceKind::Quadratic, vec![-0.5, -0.2, 1.3]),
    ]
}

/// Rate functions on `[0, hours]` whose total integral equals `expected`.
pub fn scenario_rate_functions(expected: f64, hours: f64) -> Result<Vec<RateFunction>> {
    let stretched: Vec<RatePiece> = rate_shapes()
        .into_iter()
        .map(|(kind, p)| {
            // substitute u = t / hours
            let params = match kind {
                PieceKind::Constant => p,
                PieceKind::Linear => vec![p[0] / hours, p[1]],
                PieceKind::Quadratic => vec![p[0] / (hours * hours), p[1] / hours, p[2]],
                PieceKind::Sinusoid => vec![p[0], p[1] / hours, p[2], p[3]],
            };
            RatePiece::new(0.0, hours, kind, params)
        })
        .collect();
    let total: f64 = stretched.iter().map(|p| p.integral(0.0, hours)).sum();
    let factor = expected / total;
    stretched.into_iter().map(|p| RateFunction::new(vec![p.scaled(factor)])).collect()
}

pub fn scenario_nonstationary(
    kind: NonStationaryKind,
    horizon: u64,
    hours: f64,
    seed: u64,
) -> Result<SimConfig> {
    if horizon == 0 {
        return Err(Error::Validation("horizon must be at least 1".into()));
    }
    if !(hours > 0.0) {
        return Err(Error::Validation("horizon_hours must be positive".into()));
    }
    let t = horizon as f64;
    let n = SCENARIO_ITEMS;
    let (rewards, budgets): (Vec<f64>, Vec<Budget>) = match kind {
        NonStationaryKind::ExtremeBudget => {
            let budgets = (0..n)
                .map(|i| match i {
                    0..=6 => Budget::Finite(t / 100.0),
                    7 | 8 => Budget::Finite(t / 10.0),
                    _ => Budget::Infinite,
                })
                .collect();
            (vec![1.0; n], budgets)
        }
        NonStationaryKind::VaryingReward => {
            let rewards = (0..n).map(|i| 0.2 + 0.8 * i as f64 / (n - 1) as f64).collect();
            let budgets = (0..n)
                .map(|i| if i == 0 { Budget::Finite(t * 2.0 / 3.0) } else { Budget::Finite(t / 10.0) })
                .collect();
            (rewards, budgets)
        }
    };
    let (mean, sd) = GAUSSIAN_PREFERENCE;
    let instance = ProblemInstance {
        rewards,
        budgets,
        mu: super::config::DEFAULT_MU,
        true_preferences: gaussian_preferences(SCENARIO_TYPES, n, mean, sd, seed),
        horizon,
    };
    let rate_fns = scenario_rate_functions(t, hours)?;
    let mean_rate = t / (hours * SCENARIO_TYPES as f64);
    let mut params = AlgorithmParams::defaults(horizon, 1.0);
    params.epsilon = 0.05 * mean_rate;
    params.delta = 0.05;
    params.min_segment = hours / 20.0;
    params.grid_dt = hours / 1_000.0;
    params.budget_accounting = BudgetAccounting::Assignment;
    let arrivals = ArrivalModel::NonStationary { rate_fns, t0: 0.0, t_end: hours };
    SimConfig::new(instance, arrivals, seed, params)
}
