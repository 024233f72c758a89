//! The online loop: UCB exploration coupled with projected online gradient
//! descent on the type-weighted dual, assigning items by sampling the primal
//! softmax row.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::arrivals::{format_sig, Arrival, ArrivalSequence};
use crate::bandit::{estimate_change, select_ucb, PreferenceEstimate};
use crate::dual::{primal_row, DualProblem, DualState};
use crate::error::{Error, Result};
use crate::model::{ArrivalModel, Budget, BudgetAccounting, SimConfig};
use crate::rng::{self, SimRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Ucb,
    Ogd,
    Greedy,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ucb => "ucb",
            Self::Ogd => "ogd",
            Self::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    /// 1-based arrival index.
    pub index: u64,
    pub time: f64,
    pub kind: usize,
    pub item: Option<usize>,
    pub purchased: bool,
    pub phase: Phase,
    /// Online dual value at the multipliers used for this arrival; NaN when
    /// the policy has no dual.
    pub dual_value: f64,
    pub segment: usize,
}

/// State snapshot every `K` arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: u64,
    /// `‖P̂ − P*‖_F`.
    pub pref_error: f64,
    /// `‖P̂_now − P̂_prev‖_F`, the UCB stopping signal.
    pub change: f64,
    pub lambda: Vec<f64>,
    pub remaining: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub initial_budgets: Vec<Budget>,
    /// Remaining stock after the run; `INFINITY` for unlimited items.
    pub remaining: Vec<f64>,
    pub final_estimate: Option<PreferenceEstimate>,
    pub final_lambda: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub seed: u64,
}

impl Trace {
    /// Realized reward `Σ r_i` over purchases.
    pub fn revenue(&self, rewards: &[f64]) -> f64 {
        self.records
            .iter()
            .filter(|r| r.purchased)
            .map(|r| rewards[r.item.expect("purchase without item")])
            .sum()
    }

    /// Assignments per item.
    pub fn selections(&self) -> Vec<u64> {
        let mut counts = vec![0; self.initial_budgets.len()];
        for i in self.records.iter().filter_map(|r| r.item) {
            counts[i] += 1;
        }
        counts
    }

    /// Purchases per item.
    pub fn sales(&self) -> Vec<u64> {
        let mut counts = vec![0; self.initial_budgets.len()];
        for r in self.records.iter().filter(|r| r.purchased) {
            counts[r.item.expect("purchase without item")] += 1;
        }
        counts
    }

    /// Assignment indicators aggregated as counts `y[[j, i]]`.
    pub fn assignment_counts(&self, m: usize) -> Array2<u64> {
        let mut y = Array2::zeros((m, self.initial_budgets.len()));
        for r in &self.records {
            if let Some(i) = r.item {
                y[[r.kind, i]] += 1;
            }
        }
        y
    }

    /// True when the finite item `i` has less than one unit left.
    pub fn depleted(&self, i: usize) -> bool {
        self.remaining[i] < 1.0
    }

    pub fn ucb_rounds(&self) -> usize {
        self.records.iter().filter(|r| r.phase == Phase::Ucb).count()
    }

    /// CSV `t,time,type,item,purchased,phase`; unassigned arrivals leave `item` empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,time,type,item,purchased,phase")?;
        for r in &self.records {
            let item = r.item.map(|i| (i + 1).to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.index,
                format_sig(r.time, 9),
                r.kind + 1,
                item,
                u8::from(r.purchased),
                r.phase.as_str()
            )?;
        }
        Ok(())
    }

    /// CSV `t,lambda_1..lambda_n` with one row per checkpoint.
    pub fn write_lambda_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.initial_budgets.len();
        let header: Vec<String> = (1..=n).map(|i| format!("lambda_{i}")).collect();
        writeln!(out, "t,{}", header.join(","))?;
        for c in &self.checkpoints {
            let vals: Vec<String> = c.lambda.iter().map(|v| format!("{v:.9}")).collect();
            writeln!(out, "{},{}", c.t, vals.join(","))?;
        }
        Ok(())
    }
}

/// Coordinatewise clamp to `[0, Λ_max]`.
pub fn project_box(y: &[f64], lambda_max: f64) -> Vec<f64> {
    y.iter().map(|v| v.clamp(0.0, lambda_max)).collect()
}

/// One projected step `Λ ← clamp(Λ − η_t ∇f)`, advancing the step counter.
pub fn ogd_step(state: &mut DualState, grad: &[f64]) {
    state.t += 1;
    let eta = state.step_size(state.t);
    for ((l, g), &u) in state.lambda.iter_mut().zip(grad).zip(&state.upper) {
        *l = (*l - eta * g).clamp(0.0, u);
    }
}

/// Draws an item for type `j` from the softmax row restricted to `available`.
/// An all-zero estimate row falls back to the uniform distribution.
pub fn select_by_dual<R: Rng + ?Sized>(
    lambda: &[f64],
    estimate: ArrayView2<'_, f64>,
    j: usize,
    available: &[bool],
    rewards: &[f64],
    mu: f64,
    rng: &mut R,
) -> Result<usize> {
    let mut x = vec![0.0; rewards.len()];
    select_with_buffer(lambda, estimate, j, available, rewards, mu, rng, &mut x)
}

#[allow(clippy::too_many_arguments)]
fn select_with_buffer<R: Rng + ?Sized>(
    lambda: &[f64],
    estimate: ArrayView2<'_, f64>,
    j: usize,
    available: &[bool],
    rewards: &[f64],
    mu: f64,
    rng: &mut R,
    x: &mut [f64],
) -> Result<usize> {
    if primal_row(estimate.row(j), rewards, mu, lambda, x).is_none() {
        x.fill(1.0);
    }
    let mut total = 0.0;
    let mut last = None;
    for (i, v) in x.iter_mut().enumerate() {
        if available[i] {
            total += *v;
            last = Some(i);
        } else {
            *v = 0.0;
        }
    }
    let last = last.ok_or(Error::NoAvailableItem)?;
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &v) in x.iter().enumerate() {
        if v > 0.0 {
            acc += v;
            if u < acc {
                return Ok(i);
            }
        }
    }
    Ok(last)
}

/// Per-arrival state of the integrated algorithm. Segments of a
/// non-stationary run share one runner so that `Λ`, `P̂`, stock and random
/// streams carry over.
pub struct IntegratedRunner<'a> {
    config: &'a SimConfig,
    estimate: PreferenceEstimate,
    state: DualState,
    remaining: Vec<f64>,
    available: Vec<bool>,
    ucb_active: bool,
    last_checkpoint: Array2<f64>,
    decisions: SimRng,
    purchases: SimRng,
    t: u64,
    records: Vec<TraceRecord>,
    checkpoints: Vec<Checkpoint>,
    grad: Vec<f64>,
    x: Vec<f64>,
    phi: Vec<f64>,
}

impl<'a> IntegratedRunner<'a> {
    /// `budget_scale` is the `s` of the online objective (usually `1/T`).
    pub fn new(config: &'a SimConfig, budget_scale: f64, horizon: f64) -> Result<Self> {
        let inst = &config.instance;
        let p = &config.params;
        let (m, n) = (inst.m(), inst.n());
        let state = DualState::new(&inst.budgets, p.lambda_max, budget_scale, p.grad_bound, p.step_rule, horizon)?;
        let estimate = PreferenceEstimate::new(m, n, p.unvisited_prior);
        let remaining: Vec<f64> = inst.budgets.iter().map(|b| b.as_f64()).collect();
        Ok(Self {
            config,
            last_checkpoint: estimate.estimate.clone(),
            estimate,
            state,
            available: remaining.iter().map(|&b| b >= 1.0).collect(),
            remaining,
            ucb_active: true,
            decisions: rng::stream(config.seed, Stream::Decisions),
            purchases: rng::stream(config.seed, Stream::Purchases),
            t: 0,
            records: Vec::new(),
            checkpoints: Vec::new(),
            grad: vec![0.0; n],
            x: vec![0.0; n],
            phi: vec![0.0; m],
        })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.state.lambda
    }

    pub fn estimate(&self) -> &PreferenceEstimate {
        &self.estimate
    }

    /// Runs `arrivals` with gradient weights `weights` and budget scale `s`,
    /// using `horizon` for the fixed step rule. When `phi_model` is given the
    /// recorded dual value uses the instantaneous type probabilities of that
    /// model instead of `weights`.
    pub fn run_segment(
        &mut self,
        arrivals: &[Arrival],
        weights: &[f64],
        budget_scale: f64,
        horizon: f64,
        segment: usize,
        phi_model: Option<&ArrivalModel>,
    ) -> Result<()> {
        let config = self.config;
        let inst = &config.instance;
        let params = &config.params;
        let m = inst.m();
        if weights.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: weights.len() });
        }
        self.state.reset_horizon(horizon);
        let reward_weights = params.reward_weighted_ucb.then_some(&inst.rewards[..]);
        self.records.reserve(arrivals.len());

        for a in arrivals {
            self.t += 1;
            let j = a.kind;
            let t_j = self.estimate.observe_arrival(j);
            let use_ucb = self.ucb_active && self.t <= params.ucb_max_rounds;
            let phase = if use_ucb { Phase::Ucb } else { Phase::Ogd };
            let item = if !self.available.iter().any(|&v| v) {
                None
            } else if use_ucb {
                Some(select_ucb(&self.estimate, j, t_j, &self.available, reward_weights)?)
            } else {
                Some(select_with_buffer(
                    &self.state.lambda,
                    self.estimate.estimate.view(),
                    j,
                    &self.available,
                    &inst.rewards,
                    inst.mu,
                    &mut self.decisions,
                    &mut self.x,
                )?)
            };
            let u: f64 = self.purchases.random();
            let purchased = item.is_some_and(|i| u < inst.true_preferences[[j, i]]);
            if let Some(i) = item {
                let consume = match params.budget_accounting {
                    BudgetAccounting::Purchase => purchased,
                    BudgetAccounting::Assignment => true,
                };
                if consume && self.remaining[i].is_finite() {
                    self.remaining[i] -= 1.0;
                    self.available[i] = self.remaining[i] >= 1.0;
                }
                self.estimate.update(j, i, purchased);
            }

            let problem = DualProblem {
                weights,
                budget_scale,
                preferences: self.estimate.estimate.view(),
                rewards: &inst.rewards,
                budgets: &inst.budgets,
                mu: inst.mu,
                skip_degenerate: true,
            };
            let mut value = problem.value_and_gradient(&self.state.lambda, &mut self.grad)?;
            if let Some(model) = phi_model {
                fill_type_probability(model, a.time, &mut self.phi)?;
                value = DualProblem { weights: &self.phi, ..problem }.objective(&self.state.lambda)?;
            }
            ogd_step(&mut self.state, &self.grad);

            self.records.push(TraceRecord {
                index: self.t,
                time: a.time,
                kind: j,
                item,
                purchased,
                phase,
                dual_value: value,
                segment,
            });
            if self.t.is_multiple_of(params.ucb_check_interval) {
                self.checkpoint()?;
            }
        }
        Ok(())
    }

    fn checkpoint(&mut self) -> Result<()> {
        let change = estimate_change(&self.last_checkpoint, &self.estimate.estimate)?;
        if change <= self.config.params.ucb_stop_epsilon {
            self.ucb_active = false;
        }
        self.last_checkpoint.assign(&self.estimate.estimate);
        let pref_error = estimate_change(&self.estimate.estimate, &self.config.instance.true_preferences)?;
        self.checkpoints.push(Checkpoint {
            t: self.t,
            pref_error,
            change,
            lambda: self.state.lambda.clone(),
            remaining: self.remaining.clone(),
        });
        Ok(())
    }

    pub fn finish(self) -> Trace {
        Trace {
            records: self.records,
            initial_budgets: self.config.instance.budgets.clone(),
            remaining: self.remaining,
            final_estimate: Some(self.estimate),
            final_lambda: self.state.lambda,
            checkpoints: self.checkpoints,
            seed: self.config.seed,
        }
    }
}

pub(crate) fn fill_type_probability(model: &ArrivalModel, t: f64, out: &mut [f64]) -> Result<()> {
    match model {
        ArrivalModel::Stationary { rates } => out.copy_from_slice(rates),
        ArrivalModel::NonStationary { rate_fns, .. } => {
            for (o, f) in out.iter_mut().zip(rate_fns) {
                *o = f.eval(t);
            }
        }
    }
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotalRate);
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// Runs the integrated algorithm over a whole stream with fixed type
/// `weights`, budget scale `1/len` and fixed-rule horizon `len`.
pub fn run_integrated(config: &SimConfig, arrivals: &ArrivalSequence, weights: &[f64]) -> Result<Trace> {
    if arrivals.is_empty() {
        return Err(Error::Validation("arrival stream is empty".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 || weights.iter().any(|&w| w < 0.0) {
        return Err(Error::Validation(format!("type weights must be a probability vector (sum {total})")));
    }
    let horizon = arrivals.len() as f64;
    let mut runner = IntegratedRunner::new(config, 1.0 / horizon, horizon)?;
    runner.run_segment(&arrivals.arrivals, weights, 1.0 / horizon, horizon, 0, None)?;
    Ok(runner.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::sample_stationary_stream;
    use crate::model::{AlgorithmParams, ProblemInstance, StepRule};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(p: Array2<f64>, rewards: Vec<f64>, budgets: Vec<Budget>, rates: Vec<f64>, horizon: u64) -> SimConfig {
        let max_r = rewards.iter().copied().fold(0.0, f64::max);
        let inst = ProblemInstance { rewards, budgets, mu: 0.1, true_preferences: p, horizon };
        let params = AlgorithmParams::defaults(horizon, max_r);
        SimConfig::new(inst, ArrivalModel::Stationary { rates }, 17, params).unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_box(&[-0.5, 0.3, 2.0], 1.0), vec![0.0, 0.3, 1.0]);
        assert_eq!(project_box(&[0.25, 0.5], 1.0), vec![0.25, 0.5]);
    }

    #[test]
    fn step_examples() {
        let b = [Budget::Finite(1.0)];
        let mut st = DualState::new(&b, 1.0, 1.0, Some(1.0), StepRule::Fixed, 100.0).unwrap();
        // D = 1, G = 1, T = 100 → η = 0.1
        ogd_step(&mut st, &[0.0]);
        assert_eq!(st.lambda, vec![0.0]);
        ogd_step(&mut st, &[-1.0]);
        assert!((st.lambda[0] - 0.1).abs() < 1e-15);
        assert_eq!(st.t, 2);
    }

    #[test]
    fn ogd_descends_on_a_convex_quadratic() {
        // f(Λ) = ½‖Λ − c‖², box minimizer = clamp(c).
        let c = [0.3, 1.7, -0.4];
        let target = project_box(&c, 1.0);
        let b = [Budget::Finite(1.0); 3];
        let mut st = DualState::new(&b, 1.0, 1.0, None, StepRule::Decaying, 1.0).unwrap();
        let dist = |l: &[f64]| l.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let start = dist(&st.lambda);
        let mut prev = start;
        for _ in 0..1000 {
            let g: Vec<f64> = st.lambda.iter().zip(&c).map(|(l, c)| l - c).collect();
            ogd_step(&mut st, &g);
            let d = dist(&st.lambda);
            assert!(d <= prev + 1e-15);
            prev = d;
        }
        assert!(prev < 1e-3 * start);
    }

    #[test]
    fn dual_selection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = array![[0.5, 0.5, 0.5]];
        let r = [1.0, 1.0, 1.0];
        assert_eq!(select_by_dual(&[0.0; 3], p.view(), 0, &[false, true, false], &r, 0.1, &mut rng).unwrap(), 1);
        assert!(select_by_dual(&[0.0; 3], p.view(), 0, &[false; 3], &r, 0.1, &mut rng).is_err());

        let draws = 10_000;
        let ones = (0..draws)
            .filter(|_| select_by_dual(&[0.0; 3], p.view(), 0, &[true, true, false], &r, 0.1, &mut rng).unwrap() == 0)
            .count();
        let sigma = (0.25f64 / draws as f64).sqrt();
        assert!((ones as f64 / draws as f64 - 0.5).abs() < 4.0 * sigma);

        // Λ = r makes every exponent zero → uniform
        let p = array![[0.2, 0.9, 0.4]];
        let r = [0.3, 0.8, 0.5];
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[select_by_dual(&r, p.view(), 0, &[true; 3], &r, 0.1, &mut rng).unwrap()] += 1;
        }
        let sigma = (2.0f64 / 9.0 / 30_000.0).sqrt();
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn forced_single_item_path() {
        let c = config(array![[1.0]], vec![2.0], vec![Budget::Infinite], vec![1.0], 500);
        let arr = sample_stationary_stream(&[1.0], 500, 3).unwrap();
        let trace = run_integrated(&c, &arr, &[1.0]).unwrap();
        assert!(trace.records.iter().all(|r| r.item == Some(0) && r.purchased));
        assert_eq!(trace.revenue(&c.instance.rewards), 1000.0);
    }

    #[test]
    fn ucb_phase_can_be_disabled() {
        let mut c = config(array![[0.3, 0.6], [0.5, 0.2]], vec![1.0, 0.5], vec![Budget::Finite(50.0); 2], vec![1.0, 1.0], 400);
        c.params.ucb_max_rounds = 0;
        let arr = sample_stationary_stream(&[1.0, 1.0], 400, 3).unwrap();
        let trace = run_integrated(&c, &arr, &[0.5, 0.5]).unwrap();
        assert_eq!(trace.ucb_rounds(), 0);
    }

    #[test]
    fn rejects_bad_weights() {
        let c = config(array![[1.0]], vec![1.0], vec![Budget::Infinite], vec![1.0], 10);
        let arr = sample_stationary_stream(&[1.0], 10, 3).unwrap();
        assert!(run_integrated(&c, &arr, &[0.7]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn invariants_hold(seed in any::<u64>(), m in 1usize..4, n in 1usize..5, horizon in 50u64..600, assign in any::<bool>(), infinite in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Array2::from_shape_fn((m, n), |_| rng.random_range(0.05..1.0));
            let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let mut budgets: Vec<Budget> = (0..n).map(|_| Budget::Finite(rng.random_range(0.0..40.0_f64).floor())).collect();
            if infinite {
                budgets[0] = Budget::Infinite;
            }
            let rates: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
            let mut c = config(p, rewards, budgets.clone(), rates.clone(), horizon);
            c.seed = seed;
            c.params.ucb_check_interval = 50;
            if assign {
                c.params.budget_accounting = BudgetAccounting::Assignment;
            }
            let arr = sample_stationary_stream(&rates, horizon as usize, seed).unwrap();
            let w = c.stationary_weights().unwrap();
            let trace = run_integrated(&c, &arr, &w).unwrap();
            let lmax = c.params.lambda_max;
            for ck in &trace.checkpoints {
                prop_assert!(ck.lambda.iter().all(|&l| (0.0..=lmax).contains(&l)));
            }
            prop_assert!(trace.final_lambda.iter().all(|&l| (0.0..=lmax).contains(&l)));
            let sales = trace.sales();
            let selections = trace.selections();
            for (i, b) in budgets.iter().enumerate() {
                if let Budget::Finite(b0) = b {
                    let used = if assign { selections[i] } else { sales[i] } as f64;
                    prop_assert_eq!(b0 - trace.remaining[i], used);
                    prop_assert!(trace.remaining[i] >= 0.0);
                }
            }
            for r in &trace.records {
                if r.purchased {
                    prop_assert!(r.item.is_some());
                }
                if r.item.is_none() {
                    prop_assert!(budgets.iter().enumerate().all(|(i, b)| !b.is_infinite() && trace.remaining[i] < 1.0));
                }
            }
            let again = run_integrated(&c, &arr, &w).unwrap();
            prop_assert_eq!(trace, again);
        }
    }
}
