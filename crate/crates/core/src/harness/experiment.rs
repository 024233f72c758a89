use std::time::Instant;

use crate::arrivals::{sample_nonstationary_stream, sample_stationary_stream, ArrivalSequence};
use crate::dual::OfflineSolution;
use crate::error::{Error, Result};
use crate::integrated::{fill_type_probability, run_integrated, Trace};
use crate::model::{ArrivalModel, Budget, SimConfig};
use crate::segmentation::{plan_for_config, run_nonstationary, SegmentPlan};

use super::baseline::greedy_baseline;
use super::metrics::{
    benchmark_spec, compute_regret, realized_benchmark, regret_constant, solve_benchmark, truth_value,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Offline benchmark only.
    Offline,
    Stationary,
    Nonstationary,
    Greedy,
    /// Segmentation plan only.
    SegmentPlan,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Offline => "offline",
            Self::Stationary => "stationary",
            Self::Nonstationary => "nonstationary",
            Self::Greedy => "greedy",
            Self::SegmentPlan => "segment-plan",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "offline" => Ok(Self::Offline),
            "stationary" => Ok(Self::Stationary),
            "nonstationary" => Ok(Self::Nonstationary),
            "greedy" => Ok(Self::Greedy),
            "segment-plan" | "segment_plan" => Ok(Self::SegmentPlan),
            other => Err(Error::Validation(format!("unknown mode `{other}`"))),
        }
    }
}

/// Scalar results and per-item/per-checkpoint series of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    /// Realized number of arrivals.
    pub arrivals: usize,
    /// Per-arrival benchmark `f(Λ*, P*)` the regret is measured against
    /// (mean over arrivals for non-stationary runs).
    pub benchmark_value: Option<f64>,
    /// Offline dual optimum over realized type counts (unnormalized).
    pub offline_objective: Option<f64>,
    pub offline_iterations: usize,
    pub offline_converged: bool,
    /// Largest projected-gradient norm among the benchmark solves.
    pub offline_residual: f64,
    /// `Σ_t f_t(Λ_t, P̂_t)`.
    pub online_dual_total: Option<f64>,
    pub regret_total: Option<f64>,
    pub regret_average: Option<f64>,
    /// Average regret against the realized-count benchmark.
    pub regret_average_realized: Option<f64>,
    /// `R·δ` for non-stationary runs.
    pub regret_bound: Option<f64>,
    pub offline_revenue: Option<f64>,
    pub revenue: Option<f64>,
    pub greedy_revenue: Option<f64>,
    pub ucb_rounds: Option<usize>,
    pub segments: Option<usize>,
    /// `(checkpoint t, ‖P̂ − P*‖_F)`.
    pub pref_error: Vec<(u64, f64)>,
    pub selections: Vec<u64>,
    pub sales: Vec<u64>,
    pub initial_budgets: Vec<Budget>,
    pub remaining: Vec<f64>,
    pub runtime_seconds: f64,
}

impl MetricsReport {
    fn empty(config: &SimConfig, mode: Mode) -> Self {
        let n = config.instance.n();
        Self {
            mode,
            seed: config.seed,
            config_hash: config.hash(),
            arrivals: 0,
            benchmark_value: None,
            offline_objective: None,
            offline_iterations: 0,
            offline_converged: true,
            offline_residual: 0.0,
            online_dual_total: None,
            regret_total: None,
            regret_average: None,
            regret_average_realized: None,
            regret_bound: None,
            offline_revenue: None,
            revenue: None,
            greedy_revenue: None,
            ucb_rounds: None,
            segments: None,
            pref_error: Vec::new(),
            selections: vec![0; n],
            sales: vec![0; n],
            initial_budgets: config.instance.budgets.clone(),
            remaining: config.instance.budgets.iter().map(|b| b.as_f64()).collect(),
            runtime_seconds: 0.0,
        }
    }

    fn absorb_solution(&mut self, sol: &OfflineSolution) {
        self.offline_iterations += sol.iterations;
        self.offline_converged &= sol.converged;
        self.offline_residual = self.offline_residual.max(sol.residual);
    }

    fn absorb_trace(&mut self, trace: &Trace, rewards: &[f64]) {
        self.selections = trace.selections();
        self.sales = trace.sales();
        self.remaining = trace.remaining.clone();
        self.revenue = Some(trace.revenue(rewards));
        self.pref_error = trace.checkpoints.iter().map(|c| (c.t, c.pref_error)).collect();
    }
}

/// Everything one run produces; [`super::emit_report`] turns it into files.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: MetricsReport,
    pub arrivals: Option<ArrivalSequence>,
    pub trace: Option<Trace>,
    pub plan: Option<SegmentPlan>,
    /// Realized-count offline solve (offline mode keeps its iteration log).
    pub offline: Option<OfflineSolution>,
    pub m: usize,
}

fn sample_arrivals(config: &SimConfig) -> Result<ArrivalSequence> {
    match &config.arrivals {
        ArrivalModel::Stationary { rates } => {
            sample_stationary_stream(rates, config.instance.horizon as usize, config.seed)
        }
        ArrivalModel::NonStationary { rate_fns, t0, t_end } => {
            sample_nonstationary_stream(rate_fns, *t0, *t_end, config.params.grid_dt, config.seed)
        }
    }
}

/// Samples arrivals, runs the selected policy, solves the benchmarks and
/// computes all metrics. Deterministic in `(config, seed)`.
pub fn run_experiment(config: &SimConfig, mode: Mode) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let inst = &config.instance;
    let m = inst.m();
    let mut report = MetricsReport::empty(config, mode);

    if mode == Mode::SegmentPlan {
        let plan = plan_for_config(config)?;
        report.segments = Some(plan.segments.len());
        report.runtime_seconds = start.elapsed().as_secs_f64();
        return Ok(ExperimentOutput { report, arrivals: None, trace: None, plan: Some(plan), offline: None, m });
    }

    let mut plan = None;
    let mut trace = None;
    let arrivals = match mode {
        Mode::Stationary => {
            let Some(weights) = config.stationary_weights() else {
                return Err(Error::Validation("stationary mode needs a stationary arrival model".into()));
            };
            let arrivals = sample_arrivals(config)?;
            let t = run_integrated(config, &arrivals, &weights)?;
            let horizon = arrivals.len() as f64;
            let sol = solve_benchmark(config, &benchmark_spec(config, weights, 1.0 / horizon))?;
            report.absorb_solution(&sol);
            report.benchmark_value = Some(sol.objective);
            let online: Vec<f64> = t.records.iter().map(|r| r.dual_value).collect();
            let (total, avg) = compute_regret(&online, &vec![sol.objective; online.len()])?;
            report.online_dual_total = Some(online.iter().sum());
            report.regret_total = Some(total);
            report.regret_average = Some(avg);
            report.ucb_rounds = Some(t.ucb_rounds());
            trace = Some(t);
            arrivals
        }
        Mode::Nonstationary => {
            if !matches!(config.arrivals, ArrivalModel::NonStationary { .. }) {
                return Err(Error::Validation("nonstationary mode needs rate functions".into()));
            }
            let run = run_nonstationary(config)?;
            let scale = 1.0 / inst.horizon as f64;
            let mut benchmark = Vec::with_capacity(run.trace.records.len());
            let mut phi = vec![0.0; m];
            for (k, seg) in run.plan.segments.iter().enumerate() {
                let sol = solve_benchmark(config, &benchmark_spec(config, seg.weights.clone(), scale))?;
                report.absorb_solution(&sol);
                for r in run.trace.records.iter().filter(|r| r.segment == k) {
                    fill_type_probability(&config.arrivals, r.time, &mut phi)?;
                    benchmark.push(truth_value(config, &phi, scale, &sol.lambda)?);
                }
            }
            let online: Vec<f64> = run.trace.records.iter().map(|r| r.dual_value).collect();
            let (total, avg) = compute_regret(&online, &benchmark)?;
            report.benchmark_value =
                Some(if benchmark.is_empty() { 0.0 } else { benchmark.iter().sum::<f64>() / benchmark.len() as f64 });
            report.online_dual_total = Some(online.iter().sum());
            report.regret_total = Some(total);
            report.regret_average = Some(avg);
            report.regret_bound = Some(regret_constant(config) * config.params.delta);
            report.ucb_rounds = Some(run.trace.ucb_rounds());
            report.segments = Some(run.plan.segments.len());
            trace = Some(run.trace);
            plan = Some(run.plan);
            run.arrivals
        }
        Mode::Greedy | Mode::Offline => sample_arrivals(config)?,
        Mode::SegmentPlan => unreachable!(),
    };
    report.arrivals = arrivals.len();

    let counts = arrivals.type_counts(m);
    let (offline, offline_revenue) = realized_benchmark(config, &counts)?;
    report.absorb_solution(&offline);
    report.offline_objective = Some(offline.objective);
    report.offline_revenue = Some(offline_revenue);
    if let (Some(total), false) = (report.online_dual_total, arrivals.is_empty()) {
        report.regret_average_realized = Some((total - offline.objective) / arrivals.len() as f64);
    }

    if mode != Mode::Offline {
        let greedy = greedy_baseline(inst, &arrivals, config.seed, config.params.budget_accounting);
        report.greedy_revenue = Some(greedy.revenue(&inst.rewards));
        if trace.is_none() {
            trace = Some(greedy);
        }
    }
    if let Some(t) = &trace {
        report.absorb_trace(t, &inst.rewards);
    }
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(ExperimentOutput { report, arrivals: Some(arrivals), trace, plan, offline: Some(offline), m })
}

/// The same configuration at a different horizon: finite budgets, the UCB
/// round cap and (for rate functions) the rates and `ε` scale with
/// `horizon / T`.
pub fn scale_config(config: &SimConfig, horizon: u64) -> Result<SimConfig> {
    let old = config.instance.horizon as f64;
    let factor = horizon as f64 / old;
    let mut inst = config.instance.clone().into_inner();
    inst.horizon = horizon;
    inst.budgets = inst
        .budgets
        .iter()
        .map(|b| match b {
            Budget::Finite(v) => Budget::Finite(v * factor),
            Budget::Infinite => Budget::Infinite,
        })
        .collect();
    let mut params = config.params.clone();
    params.ucb_max_rounds = (params.ucb_max_rounds as f64 * factor).round() as u64;
    let arrivals = match &config.arrivals {
        ArrivalModel::Stationary { rates } => ArrivalModel::Stationary { rates: rates.clone() },
        ArrivalModel::NonStationary { rate_fns, t0, t_end } => {
            params.epsilon *= factor;
            ArrivalModel::NonStationary {
                rate_fns: rate_fns.iter().map(|f| f.scaled(factor)).collect(),
                t0: *t0,
                t_end: *t_end,
            }
        }
    };
    SimConfig::new(inst, arrivals, config.seed, params)
}
