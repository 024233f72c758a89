//! Entropy-regularized dual of the allocation LP.
//!
//! For multipliers `Λ` (one per item) the type-weighted dual is
//!
//! ```text
//! f(Λ) = μ Σ_j w_j P̄_j log Z_j + s ⟨Λ, b⟩,
//! Z_j  = Σ_i exp((r_i − Λ_i) P_ij / (P̄_j μ)),
//! ```
//!
//! with `P̄_j = max_i P_ij`. Offline benchmarks use realized type counts as
//! `w` and `s = 1`; the per-arrival online objective uses `w_j = λ_j / Σλ`
//! and `s = 1/T`. Items with infinite stock contribute nothing to the budget
//! term and have their multiplier pinned at zero by the optimizers.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::{Budget, StepRule};

/// Borrowed view of a weighted dual objective.
#[derive(Debug, Clone, Copy)]
pub struct DualProblem<'a> {
    pub weights: &'a [f64],
    pub budget_scale: f64,
    /// `preferences[[j, i]]`, types × items.
    pub preferences: ArrayView2<'a, f64>,
    pub rewards: &'a [f64],
    pub budgets: &'a [Budget],
    pub mu: f64,
    /// Treat all-zero preference rows as contributing nothing instead of
    /// failing. Online estimates can have such rows before the first sale.
    pub skip_degenerate: bool,
}

/// Owned counterpart of [`DualProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDualSpec {
    pub weights: Vec<f64>,
    pub budget_scale: f64,
    pub preferences: Array2<f64>,
    pub rewards: Vec<f64>,
    pub budgets: Vec<Budget>,
    pub mu: f64,
}

impl WeightedDualSpec {
    pub fn problem(&self) -> DualProblem<'_> {
        DualProblem {
            weights: &self.weights,
            budget_scale: self.budget_scale,
            preferences: self.preferences.view(),
            rewards: &self.rewards,
            budgets: &self.budgets,
            mu: self.mu,
            skip_degenerate: false,
        }
    }

    pub fn n(&self) -> usize {
        self.rewards.len()
    }

    fn check(&self) -> Result<()> {
        let (m, n) = self.preferences.dim();
        if self.weights.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: self.weights.len() });
        }
        for len in [self.rewards.len(), self.budgets.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        Ok(())
    }
}

/// Log-partition of one row. Fills `x` with the softmax weights when given.
/// Returns `None` for an all-zero row.
fn row_log_partition(
    row: ndarray::ArrayView1<'_, f64>,
    rewards: &[f64],
    lambda: &[f64],
    mu: f64,
    mut x: Option<&mut [f64]>,
) -> Option<(f64, f64)> {
    let p_bar = row.iter().copied().fold(0.0, f64::max);
    if !(p_bar > 0.0) {
        return None;
    }
    let scale = 1.0 / (p_bar * mu);
    let mut shift = f64::NEG_INFINITY;
    for (i, &p) in row.iter().enumerate() {
        shift = shift.max((rewards[i] - lambda[i]) * p * scale);
    }
    let mut sum = 0.0;
    for (i, &p) in row.iter().enumerate() {
        let e = ((rewards[i] - lambda[i]) * p * scale - shift).exp();
        if let Some(x) = x.as_deref_mut() {
            x[i] = e;
        }
        sum += e;
    }
    if let Some(x) = x {
        for v in x.iter_mut() {
            *v /= sum;
        }
    }
    Some((p_bar, shift + sum.ln()))
}

fn budget_term(lambda: &[f64], budgets: &[Budget]) -> f64 {
    lambda
        .iter()
        .zip(budgets)
        .filter_map(|(&l, b)| b.finite().map(|b| l * b))
        .sum()
}

impl DualProblem<'_> {
    pub fn n(&self) -> usize {
        self.rewards.len()
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn objective(&self, lambda: &[f64]) -> Result<f64> {
        self.evaluate(lambda, None)
    }

    pub fn gradient(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.n()];
        self.evaluate(lambda, Some(&mut grad))?;
        Ok(grad)
    }

    /// Objective value, writing `∂f/∂Λ` into `grad`.
    pub fn value_and_gradient(&self, lambda: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.evaluate(lambda, Some(grad))
    }

    fn evaluate(&self, lambda: &[f64], mut grad: Option<&mut [f64]>) -> Result<f64> {
        let n = self.n();
        if lambda.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: lambda.len() });
        }
        let mut x = vec![0.0; n];
        if let Some(g) = grad.as_deref_mut() {
            for (gi, b) in g.iter_mut().zip(self.budgets) {
                *gi = b.finite().map_or(0.0, |b| self.budget_scale * b);
            }
        }
        let mut value = self.budget_scale * budget_term(lambda, self.budgets);
        for (j, row) in self.preferences.rows().into_iter().enumerate() {
            let w = self.weights[j];
            let want_x = grad.is_some() && w != 0.0;
            let Some((p_bar, log_z)) =
                row_log_partition(row, self.rewards, lambda, self.mu, want_x.then_some(&mut x[..]))
            else {
                if self.skip_degenerate {
                    continue;
                }
                return Err(Error::DegenerateRow { kind: j });
            };
            if w == 0.0 {
                continue;
            }
            value += self.mu * w * p_bar * log_z;
            if let Some(g) = grad.as_deref_mut() {
                for i in 0..n {
                    g[i] -= w * row[i] * x[i];
                }
            }
        }
        Ok(value)
    }
}

pub fn dual_objective(spec: &WeightedDualSpec, lambda: &[f64]) -> Result<f64> {
    spec.check()?;
    spec.problem().objective(lambda)
}

/// `∂f/∂Λ_i = s·b_i − Σ_j w_j P_ij x_ij`; the budget term is dropped for
/// infinite-stock items.
pub fn dual_gradient(spec: &WeightedDualSpec, lambda: &[f64]) -> Result<Vec<f64>> {
    spec.check()?;
    spec.problem().gradient(lambda)
}

/// Softmax assignment probabilities `x[[j, i]]`; each row sums to one.
pub fn recover_primal(
    preferences: ArrayView2<'_, f64>,
    rewards: &[f64],
    mu: f64,
    lambda: &[f64],
) -> Result<Array2<f64>> {
    let (m, n) = preferences.dim();
    if rewards.len() != n || lambda.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rewards.len().min(lambda.len()) });
    }
    let mut x = Array2::zeros((m, n));
    let mut buf = vec![0.0; n];
    for (j, row) in preferences.rows().into_iter().enumerate() {
        row_log_partition(row, rewards, lambda, mu, Some(&mut buf)).ok_or(Error::DegenerateRow { kind: j })?;
        x.row_mut(j).iter_mut().zip(&buf).for_each(|(dst, &v)| *dst = v);
    }
    Ok(x)
}

/// Softmax row of one type, for use on the hot path. `None` for an all-zero row.
pub(crate) fn primal_row(
    row: ndarray::ArrayView1<'_, f64>,
    rewards: &[f64],
    mu: f64,
    lambda: &[f64],
    out: &mut [f64],
) -> Option<()> {
    row_log_partition(row, rewards, lambda, mu, Some(out)).map(|_| ())
}

/// Single-arrival dual `μ P̄_j log Z_j + ⟨Λ, b⟩ − Σ_i Λ_i Σ_{(k,i) ∈ prefix} P_ki`,
/// where `prefix` lists the `(type, item)` assignments made before this arrival.
pub fn per_customer_dual(
    lambda: &[f64],
    preferences: ArrayView2<'_, f64>,
    kind: usize,
    rewards: &[f64],
    budgets: &[Budget],
    mu: f64,
    prefix: &[(usize, usize)],
) -> Result<f64> {
    let row = preferences.row(kind);
    let (p_bar, log_z) =
        row_log_partition(row, rewards, lambda, mu, None).ok_or(Error::DegenerateRow { kind })?;
    let consumption: f64 = prefix.iter().map(|&(k, i)| lambda[i] * preferences[[k, i]]).sum();
    Ok(mu * p_bar * log_z + budget_term(lambda, budgets) - consumption)
}

/// `f′(Λ) = μ Σ_j φ_j P̄_j log Z_j + ⟨Λ, b⟩ / T` with instantaneous type
/// probabilities `φ`.
pub fn nonstationary_dual_objective(
    lambda: &[f64],
    preferences: ArrayView2<'_, f64>,
    phi: &[f64],
    rewards: &[f64],
    budgets: &[Budget],
    mu: f64,
    horizon: f64,
) -> Result<f64> {
    DualProblem {
        weights: phi,
        budget_scale: 1.0 / horizon,
        preferences,
        rewards,
        budgets,
        mu,
        skip_degenerate: false,
    }
    .objective(lambda)
}

/// Iterate of projected online gradient descent on `[0, Λ_max]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<f64>,
    /// Per-coordinate upper bound: `Λ_max`, or 0 for pinned (infinite-stock) items.
    pub upper: Vec<f64>,
    pub box_upper: f64,
    /// `D = Λ_max √n`.
    pub diameter: f64,
    /// `G`, a bound on the gradient norm.
    pub grad_bound: f64,
    pub step_rule: StepRule,
    /// Horizon used by the fixed step rule.
    pub horizon: f64,
    /// Steps taken so far.
    pub t: u64,
}

impl DualState {
    /// Starts at `Λ = 0`. With `grad_bound = None` the default
    /// `G = √n (max(s·max_i b_i, 1) + 1)` is used, over finite budgets.
    pub fn new(
        budgets: &[Budget],
        box_upper: f64,
        budget_scale: f64,
        grad_bound: Option<f64>,
        step_rule: StepRule,
        horizon: f64,
    ) -> Result<Self> {
        if !(box_upper > 0.0) {
            return Err(Error::Validation(format!("lambda_max must be positive, got {box_upper}")));
        }
        let n = budgets.len();
        let root_n = (n as f64).sqrt();
        let max_b = budgets.iter().filter_map(|b| b.finite()).fold(0.0, f64::max);
        let grad_bound = grad_bound.unwrap_or(root_n * ((budget_scale * max_b).max(1.0) + 1.0));
        let upper = budgets.iter().map(|b| if b.is_infinite() { 0.0 } else { box_upper }).collect();
        Ok(Self {
            lambda: vec![0.0; n],
            upper,
            box_upper,
            diameter: box_upper * root_n,
            grad_bound,
            step_rule,
            horizon: horizon.max(1.0),
            t: 0,
        })
    }

    /// Step size for step number `t` (1-based).
    pub fn step_size(&self, t: u64) -> f64 {
        let denom = match self.step_rule {
            StepRule::Fixed => self.horizon,
            StepRule::Decaying => t.max(1) as f64,
        };
        self.diameter / (self.grad_bound * denom.sqrt())
    }

    /// Restarts the fixed step rule for a new horizon, keeping `Λ`.
    pub fn reset_horizon(&mut self, horizon: f64) {
        self.horizon = horizon.max(1.0);
        self.t = 0;
    }
}

/// Result of [`solve_offline`].
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineSolution {
    pub lambda: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final projected-gradient norm.
    pub residual: f64,
    /// `(iteration, f, projected-gradient norm)` per accepted step.
    pub log: Vec<(usize, f64, f64)>,
}

impl OfflineSolution {
    pub fn write_log_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iter,f,grad_norm")?;
        for (k, f, g) in &self.log {
            writeln!(out, "{k},{f:.12e},{g:.6e}")?;
        }
        Ok(())
    }
}

fn clamp_into(y: &mut [f64], upper: &[f64]) {
    for (v, &u) in y.iter_mut().zip(upper) {
        *v = v.clamp(0.0, u);
    }
}

fn projected_residual(lambda: &[f64], grad: &[f64], upper: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(grad)
        .zip(upper)
        .map(|((&l, &g), &u)| {
            let d = l - (l - g).clamp(0.0, u);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Projected gradient descent with backtracking line search over the box of
/// `state0`, starting from `state0.lambda`.
///
/// Stops when `‖Λ − proj(Λ − ∇f)‖ ≤ tol`. Hitting `max_iter`, or a line
/// search that can no longer make progress, returns `converged = false`.
pub fn solve_offline(
    spec: &WeightedDualSpec,
    state0: &DualState,
    tol: f64,
    max_iter: usize,
) -> Result<OfflineSolution> {
    spec.check()?;
    let problem = spec.problem();
    let n = spec.n();
    if state0.lambda.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: state0.lambda.len() });
    }
    let upper = &state0.upper;
    let mut lambda = state0.lambda.clone();
    clamp_into(&mut lambda, upper);
    let mut grad = vec![0.0; n];
    let mut value = problem.value_and_gradient(&lambda, &mut grad)?;
    let mut residual = projected_residual(&lambda, &grad, upper);
    let mut log = vec![(0, value, residual)];
    let mut step = 1.0;
    let mut candidate = vec![0.0; n];
    let mut cand_grad = vec![0.0; n];
    let mut iterations = 0;
    let mut stalled = false;

    while residual > tol && iterations < max_iter {
        iterations += 1;
        loop {
            for i in 0..n {
                candidate[i] = (lambda[i] - step * grad[i]).clamp(0.0, upper[i]);
            }
            let (mut lin, mut sq) = (0.0, 0.0);
            for i in 0..n {
                let d = candidate[i] - lambda[i];
                lin += grad[i] * d;
                sq += d * d;
            }
            let cand_value = problem.value_and_gradient(&candidate, &mut cand_grad)?;
            // Near the optimum the decrease of `f` drops below its rounding
            // error; there the projected-gradient residual decides instead.
            let flat = (cand_value - value).abs() <= 1e-14 * value.abs().max(1.0);
            let accept = if flat {
                projected_residual(&candidate, &cand_grad, upper) < residual
            } else {
                cand_value <= value && cand_value <= value + lin + sq / (2.0 * step)
            };
            if accept {
                std::mem::swap(&mut lambda, &mut candidate);
                std::mem::swap(&mut grad, &mut cand_grad);
                value = cand_value;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                stalled = true;
                break;
            }
        }
        if stalled {
            break;
        }
        residual = projected_residual(&lambda, &grad, upper);
        log.push((iterations, value, residual));
        step *= 2.0;
    }
    Ok(OfflineSolution {
        lambda,
        objective: value,
        iterations,
        converged: residual <= tol,
        residual,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec(
        weights: Vec<f64>,
        s: f64,
        p: Array2<f64>,
        r: Vec<f64>,
        b: Vec<f64>,
        mu: f64,
    ) -> WeightedDualSpec {
        WeightedDualSpec {
            weights,
            budget_scale: s,
            preferences: p,
            rewards: r,
            budgets: b.into_iter().map(Budget::Finite).collect(),
            mu,
        }
    }

    fn random_spec(rng: &mut ChaCha8Rng, m: usize, n: usize) -> WeightedDualSpec {
        let p = Array2::from_shape_fn((m, n), |_| rng.random_range(0.01..1.0));
        let r = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let b = (0..n).map(|_| rng.random_range(0.0..0.5)).collect();
        let mut w: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        spec(w, 1.0, p, r, b, rng.random_range(0.05..1.0))
    }

    #[test]
    fn objective_examples() {
        let s = spec(vec![1.0], 1.0, array![[1.0]], vec![1.0], vec![1.0], 1.0);
        assert!((dual_objective(&s, &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((dual_objective(&s, &[1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(dual_gradient(&s, &[0.0]).unwrap(), vec![0.0]);

        let s = spec(vec![1.0], 1.0, array![[1.0, 1.0]], vec![1.0, 1.0], vec![0.0, 0.0], 1.0);
        assert!((dual_objective(&s, &[0.0, 0.0]).unwrap() - (2.0f64.ln() + 1.0)).abs() < 1e-12);

        let s = spec(vec![1.0], 1.0, array![[1.0, 1.0]], vec![1.0, 1.0], vec![1.0, 1.0], 1.0);
        let g = dual_gradient(&s, &[0.0, 0.0]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_row_is_an_error() {
        let s = spec(vec![0.5, 0.5], 1.0, array![[0.2, 0.3], [0.0, 0.0]], vec![1.0, 1.0], vec![1.0, 1.0], 1.0);
        assert!(matches!(dual_objective(&s, &[0.0, 0.0]), Err(Error::DegenerateRow { kind: 1 })));
        let mut p = s.problem();
        p.skip_degenerate = true;
        assert!(p.objective(&[0.0, 0.0]).is_ok());
    }

    #[test]
    fn no_overflow_for_large_exponents() {
        let s = spec(vec![1.0], 1.0, array![[1.0, 0.5]], vec![700.0, 1.0], vec![0.0, 0.0], 1.0);
        let f = dual_objective(&s, &[0.0, 0.0]).unwrap();
        assert!(f.is_finite());
        assert!((f - 700.0).abs() < 1e-9);
        let x = recover_primal(s.preferences.view(), &s.rewards, 1.0, &[0.0, 0.0]).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn primal_examples() {
        let p = array![[1.0, 1.0]];
        let x = recover_primal(p.view(), &[1.0, 0.0], 1.0, &[0.0, 0.0]).unwrap();
        let e = std::f64::consts::E;
        assert!((x[[0, 0]] - e / (e + 1.0)).abs() < 1e-12);
        assert!((x[[0, 1]] - 1.0 / (e + 1.0)).abs() < 1e-12);
        let x = recover_primal(p.view(), &[0.7, 0.7], 1.0, &[0.2, 0.2]).unwrap();
        assert_eq!(x.row(0).to_vec(), vec![0.5, 0.5]);
        let p = array![[0.3, 0.6, 0.9]];
        let x = recover_primal(p.view(), &[0.1, 0.5, 1.0], 0.1, &[0.1, 0.5, 1.0]).unwrap();
        for v in x.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn per_customer_examples() {
        let p = array![[1.0]];
        let b = [Budget::Finite(1.0)];
        assert!((per_customer_dual(&[0.0], p.view(), 0, &[1.0], &b, 1.0, &[]).unwrap() - 1.0).abs() < 1e-15);

        let p = array![[0.5], [1.0]];
        let with = per_customer_dual(&[2.0], p.view(), 1, &[1.0], &b, 1.0, &[(0, 0)]).unwrap();
        let without = per_customer_dual(&[2.0], p.view(), 1, &[1.0], &b, 1.0, &[]).unwrap();
        assert!((without - with - 1.0).abs() < 1e-12);

        let zero = per_customer_dual(&[0.0], p.view(), 1, &[1.0], &b, 1.0, &[(0, 0), (1, 0)]).unwrap();
        let zero_empty = per_customer_dual(&[0.0], p.view(), 1, &[1.0], &b, 1.0, &[]).unwrap();
        assert_eq!(zero, zero_empty);
    }

    #[test]
    fn nonstationary_matches_weighted_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = random_spec(&mut rng, 4, 3);
        let horizon = 250.0;
        s.budget_scale = 1.0 / horizon;
        let lambda = [0.1, 0.3, 0.0];
        let f = dual_objective(&s, &lambda).unwrap();
        let g = nonstationary_dual_objective(
            &lambda,
            s.preferences.view(),
            &s.weights,
            &s.rewards,
            &s.budgets,
            s.mu,
            horizon,
        )
        .unwrap();
        assert!((f - g).abs() < 1e-14);
    }

    #[test]
    fn nonstationary_perturbation_bound() {
        // |f'(φ) − f(w)| ≤ m (μ log n + r*) max_j |φ_j − w_j| for Λ in the box.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let (m, n) = (rng.random_range(1..6), rng.random_range(1..6));
            let s = random_spec(&mut rng, m, n);
            let r_star = s.rewards.iter().copied().fold(0.0, f64::max);
            let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..r_star)).collect();
            let mut phi: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = phi.iter().sum();
            phi.iter_mut().for_each(|v| *v /= total);
            let f = dual_objective(&s, &lambda).unwrap();
            let g = DualProblem { weights: &phi, ..s.problem() }.objective(&lambda).unwrap();
            let gap = phi.iter().zip(&s.weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let bound = m as f64 * (s.mu * (n as f64).ln() + r_star) * gap;
            assert!((f - g).abs() <= bound + 1e-12, "{} > {bound}", (f - g).abs());
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..100 {
            let (m, n) = (rng.random_range(1..5), rng.random_range(1..5));
            let s = random_spec(&mut rng, m, n);
            let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let g = dual_gradient(&s, &lambda).unwrap();
            for i in 0..n {
                let mut hi = lambda.clone();
                let mut lo = lambda.clone();
                hi[i] += h;
                lo[i] -= h;
                let fd = (dual_objective(&s, &hi).unwrap() - dual_objective(&s, &lo).unwrap()) / (2.0 * h);
                let err = (fd - g[i]).abs() / g[i].abs().max(1.0);
                assert!(err <= 1e-5, "component {i}: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn infinite_budget_drops_out() {
        let s = WeightedDualSpec {
            weights: vec![1.0],
            budget_scale: 1.0,
            preferences: array![[0.4, 0.8]],
            rewards: vec![1.0, 1.0],
            budgets: vec![Budget::Finite(0.3), Budget::Infinite],
            mu: 0.5,
        };
        let lambda = [0.2, 0.0];
        let f = dual_objective(&s, &lambda).unwrap();
        assert!(f.is_finite());
        let g = dual_gradient(&s, &lambda).unwrap();
        let x = recover_primal(s.preferences.view(), &s.rewards, s.mu, &lambda).unwrap();
        assert!((g[1] + 0.8 * x[[0, 1]]).abs() < 1e-14);
        let state = DualState::new(&s.budgets, 1.0, 1.0, None, StepRule::Fixed, 1.0).unwrap();
        assert_eq!(state.upper, vec![1.0, 0.0]);
        let sol = solve_offline(&s, &state, 1e-10, 10_000).unwrap();
        assert_eq!(sol.lambda[1], 0.0);
    }

    #[test]
    fn offline_single_item_is_flat() {
        let s = spec(vec![1.0], 1.0, array![[1.0]], vec![1.0], vec![1.0], 1.0);
        let state = DualState::new(&s.budgets, 1.0, 1.0, None, StepRule::Fixed, 1.0).unwrap();
        let sol = solve_offline(&s, &state, 1e-8, 100).unwrap();
        assert!(sol.converged);
        assert!((sol.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn offline_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let s = random_spec(&mut rng, 2, 2);
            let lmax = s.rewards.iter().copied().fold(0.0, f64::max);
            let state = DualState::new(&s.budgets, lmax, 1.0, None, StepRule::Fixed, 1.0).unwrap();
            let sol = solve_offline(&s, &state, 1e-10, 20_000).unwrap();
            let steps = (lmax / 0.01).ceil() as usize;
            let mut best = f64::INFINITY;
            for a in 0..=steps {
                for b in 0..=steps {
                    let l = [(a as f64 * 0.01).min(lmax), (b as f64 * 0.01).min(lmax)];
                    best = best.min(dual_objective(&s, &l).unwrap());
                }
            }
            assert!(sol.objective <= best + 1e-9, "{} vs grid {best}", sol.objective);
            assert!((sol.objective - best).abs() < 1e-3);
        }
    }

    #[test]
    fn offline_is_monotone_and_tight_beats_loose() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_spec(&mut rng, 6, 5);
        let state = DualState::new(&s.budgets, 1.0, 1.0, None, StepRule::Fixed, 1.0).unwrap();
        let tight = solve_offline(&s, &state, 1e-8, 20_000).unwrap();
        let loose = solve_offline(&s, &state, 1e-1, 20_000).unwrap();
        assert!(tight.objective <= loose.objective + 1e-12);
        assert!(tight.log.windows(2).all(|w| w[1].1 <= w[0].1));
        let again = solve_offline(&s, &state, 1e-8, 20_000).unwrap();
        assert_eq!(tight, again);
    }

    #[test]
    fn step_sizes() {
        let b = [Budget::Finite(2.0), Budget::Finite(1.0)];
        let st = DualState::new(&b, 1.0, 0.5, None, StepRule::Fixed, 100.0).unwrap();
        let g = 2f64.sqrt() * 2.0;
        assert!((st.grad_bound - g).abs() < 1e-15);
        assert!((st.step_size(7) - 2f64.sqrt() / (g * 10.0)).abs() < 1e-15);
        let st = DualState { step_rule: StepRule::Decaying, ..st };
        assert!((st.step_size(4) - 2f64.sqrt() / (g * 2.0)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn convex_along_segments(seed in any::<u64>(), m in 1usize..5, n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_spec(&mut rng, m, n);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let (fa, fb, fm) = (
                dual_objective(&s, &a).unwrap(),
                dual_objective(&s, &b).unwrap(),
                dual_objective(&s, &mid).unwrap(),
            );
            prop_assert!(fm <= 0.5 * (fa + fb) + 1e-9);
        }

        #[test]
        fn primal_rows_are_distributions(seed in any::<u64>(), m in 1usize..6, n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_spec(&mut rng, m, n);
            let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let x = recover_primal(s.preferences.view(), &s.rewards, s.mu, &lambda).unwrap();
            for row in x.rows() {
                prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|&v| v > 0.0));
            }
        }

        #[test]
        fn log_partition_bound(seed in any::<u64>(), n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_spec(&mut rng, 1, n);
            let r_star = s.rewards.iter().copied().fold(0.0, f64::max);
            let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..r_star)).collect();
            let (_, log_z) = row_log_partition(s.preferences.row(0), &s.rewards, &lambda, s.mu, None).unwrap();
            prop_assert!(log_z <= (n as f64).ln() + r_star / s.mu + 1e-12);
        }
    }
}
