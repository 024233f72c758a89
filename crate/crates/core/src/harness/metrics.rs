use ndarray::Array2;

use crate::bandit::estimate_change;
use crate::dual::{recover_primal, solve_offline, DualProblem, DualState, OfflineSolution, WeightedDualSpec};
use crate::error::{Error, Result};
use crate::integrated::Trace;
use crate::model::{SimConfig, StepRule};

/// `(Σ_t online_t − Σ_t benchmark_t, that / T)`.
pub fn compute_regret(online: &[f64], benchmark: &[f64]) -> Result<(f64, f64)> {
    if online.len() != benchmark.len() {
        return Err(Error::LengthMismatch { left: online.len(), right: benchmark.len() });
    }
    if online.is_empty() {
        return Ok((0.0, 0.0));
    }
    let total: f64 = online.iter().zip(benchmark).map(|(a, b)| a - b).sum();
    Ok((total, total / online.len() as f64))
}

/// Realized reward of a trace.
pub fn compute_revenue(trace: &Trace, rewards: &[f64]) -> f64 {
    trace.revenue(rewards)
}

/// `‖P̂ − P*‖_F` over the full matrix, prior-valued entries included.
pub fn preference_error(estimate: &Array2<f64>, truth: &Array2<f64>) -> Result<f64> {
    estimate_change(estimate, truth)
}

/// Ground-truth dual with the given type weights and budget scale.
pub fn benchmark_spec(config: &SimConfig, weights: Vec<f64>, budget_scale: f64) -> WeightedDualSpec {
    let inst = &config.instance;
    WeightedDualSpec {
        weights,
        budget_scale,
        preferences: inst.true_preferences.clone(),
        rewards: inst.rewards.clone(),
        budgets: inst.budgets.clone(),
        mu: inst.mu,
    }
}

/// Solves a benchmark dual over the configured box from `Λ = 0`.
pub fn solve_benchmark(config: &SimConfig, spec: &WeightedDualSpec) -> Result<OfflineSolution> {
    let p = &config.params;
    let state = DualState::new(&spec.budgets, p.lambda_max, spec.budget_scale, p.grad_bound, StepRule::Fixed, 1.0)?;
    solve_offline(spec, &state, p.offline_tol, p.offline_max_iter)
}

/// Offline benchmark over realized type counts `c_j`: the dual
/// `μ Σ_j c_j P̄_j log Z_j + ⟨Λ, b⟩` is solved in normalized form
/// (`w = c/C`, `s = 1/C`). Returns the solution (objective rescaled to the
/// unnormalized total) and the expected revenue `Σ_j c_j Σ_i r_i P*_ji x*_ji`.
pub fn realized_benchmark(config: &SimConfig, counts: &[u64]) -> Result<(OfflineSolution, f64)> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        let n = config.instance.n();
        let empty = OfflineSolution {
            lambda: vec![0.0; n],
            objective: 0.0,
            iterations: 0,
            converged: true,
            residual: 0.0,
            log: Vec::new(),
        };
        return Ok((empty, 0.0));
    }
    let c = total as f64;
    let weights = counts.iter().map(|&k| k as f64 / c).collect();
    let spec = benchmark_spec(config, weights, 1.0 / c);
    let mut sol = solve_benchmark(config, &spec)?;
    let revenue = expected_revenue(config, &sol.lambda, counts)?;
    sol.objective *= c;
    Ok((sol, revenue))
}

/// `Σ_j c_j Σ_i r_i P*_ji x_ji(Λ)`.
pub fn expected_revenue(config: &SimConfig, lambda: &[f64], counts: &[u64]) -> Result<f64> {
    let inst = &config.instance;
    let x = recover_primal(inst.true_preferences.view(), &inst.rewards, inst.mu, lambda)?;
    let mut revenue = 0.0;
    for (j, &c) in counts.iter().enumerate() {
        let row: f64 = (0..inst.n()).map(|i| inst.rewards[i] * inst.true_preferences[[j, i]] * x[[j, i]]).sum();
        revenue += c as f64 * row;
    }
    Ok(revenue)
}

/// Ground-truth dual value with arbitrary weights, used for per-arrival
/// non-stationary benchmarks.
pub(crate) fn truth_value(config: &SimConfig, weights: &[f64], budget_scale: f64, lambda: &[f64]) -> Result<f64> {
    let inst = &config.instance;
    DualProblem {
        weights,
        budget_scale,
        preferences: inst.true_preferences.view(),
        rewards: &inst.rewards,
        budgets: &inst.budgets,
        mu: inst.mu,
        skip_degenerate: false,
    }
    .objective(lambda)
}

/// `R = m (μ log n + r*)`, the constant of the non-stationary regret bound.
pub fn regret_constant(config: &SimConfig) -> f64 {
    let inst = &config.instance;
    inst.m() as f64 * (inst.mu * (inst.n() as f64).ln() + inst.max_reward())
}
