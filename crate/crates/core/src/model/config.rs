//! JSON configuration documents and the validated [`SimConfig`].

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::instance::{validate_instance, Budget, ProblemInstance, ValidatedInstance};
use super::rate::{RateFunction, RatePiece};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const DEFAULT_MU: f64 = 0.1;
pub const DEFAULT_CHECK_INTERVAL: u64 = 1_000;
pub const DEFAULT_GRID_DT: f64 = 0.001;
pub const DEFAULT_UCB_STOP_EPSILON: f64 = 0.05;
pub const DEFAULT_EPSILON: f64 = 1.0;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_MIN_SEGMENT: f64 = 0.05;
pub const DEFAULT_OFFLINE_TOL: f64 = 1e-8;
pub const DEFAULT_OFFLINE_MAX_ITER: usize = 20_000;
pub const DEFAULT_UNVISITED_PRIOR: f64 = 0.5;
/// Fraction of the horizon spent in the UCB phase when `R_max` is omitted.
pub const DEFAULT_UCB_FRACTION: f64 = 0.2;

/// How customer arrivals are generated.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalModel {
    Stationary { rates: Vec<f64> },
    NonStationary { rate_fns: Vec<RateFunction>, t0: f64, t_end: f64 },
}

impl ArrivalModel {
    pub fn types(&self) -> usize {
        match self {
            Self::Stationary { rates } => rates.len(),
            Self::NonStationary { rate_fns, .. } => rate_fns.len(),
        }
    }

    /// Expected number of arrivals over the model's window (stationary models
    /// have no window and return `None`).
    pub fn expected_arrivals(&self) -> Option<f64> {
        match self {
            Self::Stationary { .. } => None,
            Self::NonStationary { rate_fns, t0, t_end } => {
                Some(rate_fns.iter().map(|f| f.integral(*t0, *t_end)).sum())
            }
        }
    }

    fn validate(&self, m: usize, grid_dt: f64) -> Result<()> {
        if self.types() != m {
            return Err(Error::Validation(format!(
                "arrival model has {} types, instance has {m}",
                self.types()
            )));
        }
        match self {
            Self::Stationary { rates } => {
                if let Some(j) = rates.iter().position(|&r| !(r > 0.0) || !r.is_finite()) {
                    return Err(Error::Validation(format!(
                        "stationary rate of type {j} must be positive, got {}",
                        rates[j]
                    )));
                }
            }
            Self::NonStationary { rate_fns, t0, t_end } => {
                if !(t0 < t_end) {
                    return Err(Error::Validation(format!("empty time window [{t0}, {t_end}]")));
                }
                for (j, f) in rate_fns.iter().enumerate() {
                    if !f.covers(*t0, *t_end) {
                        return Err(Error::Validation(format!(
                            "rate function of type {j} covers [{}, {}], not [{t0}, {t_end}]",
                            f.start(),
                            f.end()
                        )));
                    }
                    f.check_nonnegative(j, grid_dt)?;
                }
            }
        }
        Ok(())
    }
}

/// Whether stock is consumed when an item is bought or when it is shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetAccounting {
    #[default]
    Purchase,
    Assignment,
}

/// Online gradient step size rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRule {
    /// `η = D / (G √T)` with `T` the (segment) horizon.
    #[default]
    Fixed,
    /// `η_t = D / (G √t)`.
    Decaying,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmParams {
    /// `R_max`: arrivals after this index never use the UCB phase.
    pub ucb_max_rounds: u64,
    /// `K`: arrivals between preference-change checkpoints.
    pub ucb_check_interval: u64,
    /// UCB stops once the Frobenius change between checkpoints is at most this.
    pub ucb_stop_epsilon: f64,
    /// Maximum rate variation inside a type-A segment.
    pub epsilon: f64,
    /// Probability-band bound for type-B segments, in `(0, 1)`.
    pub delta: f64,
    /// Minimum type-A segment length in hours.
    pub min_segment: f64,
    /// Rate-scan resolution in hours.
    pub grid_dt: f64,
    /// Upper bound of the dual box `[0, Λ_max]^n`.
    pub lambda_max: f64,
    pub offline_tol: f64,
    pub offline_max_iter: usize,
    pub budget_accounting: BudgetAccounting,
    pub step_rule: StepRule,
    /// Overrides the default gradient bound `G` when set.
    pub grad_bound: Option<f64>,
    /// Score UCB arms by `r_i · UCB_i` instead of the purchase-probability UCB.
    pub reward_weighted_ucb: bool,
    /// Estimate used for never-offered (type, item) pairs.
    pub unvisited_prior: f64,
}

impl AlgorithmParams {
    /// Defaults for an instance with the given horizon and maximum reward.
    pub fn defaults(horizon: u64, max_reward: f64) -> Self {
        Self {
            ucb_max_rounds: (horizon as f64 * DEFAULT_UCB_FRACTION).round() as u64,
            ucb_check_interval: DEFAULT_CHECK_INTERVAL,
            ucb_stop_epsilon: DEFAULT_UCB_STOP_EPSILON,
            epsilon: DEFAULT_EPSILON,
            delta: DEFAULT_DELTA,
            min_segment: DEFAULT_MIN_SEGMENT,
            grid_dt: DEFAULT_GRID_DT,
            lambda_max: max_reward,
            offline_tol: DEFAULT_OFFLINE_TOL,
            offline_max_iter: DEFAULT_OFFLINE_MAX_ITER,
            budget_accounting: BudgetAccounting::Purchase,
            step_rule: StepRule::Fixed,
            grad_bound: None,
            reward_weighted_ucb: false,
            unvisited_prior: DEFAULT_UNVISITED_PRIOR,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("ucb_stop_epsilon", self.ucb_stop_epsilon),
            ("epsilon", self.epsilon),
            ("d", self.min_segment),
            ("grid_dt", self.grid_dt),
            ("lambda_max", self.lambda_max),
            ("offline_tol", self.offline_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("`{name}` must be positive, got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Validation(format!("`delta` must lie in (0, 1), got {}", self.delta)));
        }
        if self.ucb_check_interval == 0 {
            return Err(Error::Validation("`K` must be at least 1".into()));
        }
        if self.offline_max_iter == 0 {
            return Err(Error::Validation("`offline_max_iter` must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.unvisited_prior) {
            return Err(Error::Validation("`unvisited_prior` must lie in [0, 1]".into()));
        }
        if let Some(g) = self.grad_bound {
            if !(g > 0.0) {
                return Err(Error::Validation("`grad_bound` must be positive".into()));
            }
        }
        Ok(())
    }
}

/// A complete, validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub instance: ValidatedInstance,
    pub arrivals: ArrivalModel,
    pub seed: u64,
    pub params: AlgorithmParams,
}

impl SimConfig {
    pub fn new(
        instance: ProblemInstance,
        arrivals: ArrivalModel,
        seed: u64,
        params: AlgorithmParams,
    ) -> Result<Self> {
        let instance = validate_instance(instance)?;
        params.validate()?;
        arrivals.validate(instance.m(), params.grid_dt)?;
        Ok(Self { instance, arrivals, seed, params })
    }

    /// Stationary type weights `λ_j / Σ λ_s`, if the arrival model is stationary.
    pub fn stationary_weights(&self) -> Option<Vec<f64>> {
        match &self.arrivals {
            ArrivalModel::Stationary { rates } => {
                let total: f64 = rates.iter().sum();
                Some(rates.iter().map(|r| r / total).collect())
            }
            ArrivalModel::NonStationary { .. } => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.into_config()
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&ConfigFile::from_config(self))
            .expect("config serializes");
        text.push('\n');
        text
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Same configuration with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SimConfig::from_json(&text)
}

pub fn save_config(config: &SimConfig, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, config.to_json()).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// On-disk schema
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    instance: InstanceSpec,
    arrivals: ArrivalsSpec,
    seed: u64,
    #[serde(default)]
    params: ParamsSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceSpec {
    n: usize,
    m: usize,
    rewards: Vec<f64>,
    budgets: Vec<BudgetSpec>,
    #[serde(default = "default_mu")]
    mu: f64,
    preferences: PreferenceSpec,
    #[serde(alias = "T")]
    horizon: u64,
}

fn default_mu() -> f64 {
    DEFAULT_MU
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum BudgetSpec {
    Value { value: f64 },
    Infinite { infinite: bool },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum PreferenceSpec {
    Matrix(Vec<Vec<f64>>),
    Generator { generator: GeneratorKind, params: Vec<f64> },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum GeneratorKind {
    Beta,
    Gaussian,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum ArrivalsSpec {
    Stationary { rates: Vec<f64> },
    Nonstationary { t0: f64, t_end: f64, rate_fns: Vec<Vec<RatePiece>> },
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsSpec {
    #[serde(rename = "R_max", skip_serializing_if = "Option::is_none")]
    r_max: Option<u64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    k: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ucb_stop_epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offline_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offline_max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    budget_accounting: Option<BudgetAccounting>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_rule: Option<StepRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grad_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reward_weighted_ucb: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unvisited_prior: Option<f64>,
}

impl ConfigFile {
    fn into_config(self) -> Result<SimConfig> {
        let inst = self.instance;
        let budgets = inst
            .budgets
            .iter()
            .enumerate()
            .map(|(i, b)| match *b {
                BudgetSpec::Value { value } => Ok(Budget::Finite(value)),
                BudgetSpec::Infinite { infinite: true } => Ok(Budget::Infinite),
                BudgetSpec::Infinite { infinite: false } => Err(Error::Validation(format!(
                    "budget {i}: `infinite: false` needs a `value`"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        if inst.rewards.len() != inst.n || budgets.len() != inst.n {
            return Err(Error::Validation(format!(
                "`rewards` and `budgets` must have n = {} entries",
                inst.n
            )));
        }
        let preferences = match inst.preferences {
            PreferenceSpec::Matrix(rows) => {
                if rows.len() != inst.m || rows.iter().any(|r| r.len() != inst.n) {
                    return Err(Error::Validation(format!(
                        "`preferences` must be an {} x {} matrix",
                        inst.m, inst.n
                    )));
                }
                Array2::from_shape_fn((inst.m, inst.n), |(j, i)| rows[j][i])
            }
            PreferenceSpec::Generator { generator, params } => {
                generate_preferences(generator, &params, inst.m, inst.n, self.seed)?
            }
        };
        let instance = ProblemInstance {
            rewards: inst.rewards,
            budgets,
            mu: inst.mu,
            true_preferences: preferences,
            horizon: inst.horizon,
        };
        let arrivals = match self.arrivals {
            ArrivalsSpec::Stationary { rates } => ArrivalModel::Stationary { rates },
            ArrivalsSpec::Nonstationary { t0, t_end, rate_fns } => ArrivalModel::NonStationary {
                rate_fns: rate_fns.into_iter().map(RateFunction::new).collect::<Result<_>>()?,
                t0,
                t_end,
            },
        };
        let max_reward = instance.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let d = AlgorithmParams::defaults(instance.horizon, max_reward);
        let p = self.params;
        let params = AlgorithmParams {
            ucb_max_rounds: p.r_max.unwrap_or(d.ucb_max_rounds),
            ucb_check_interval: p.k.unwrap_or(d.ucb_check_interval),
            ucb_stop_epsilon: p.ucb_stop_epsilon.unwrap_or(d.ucb_stop_epsilon),
            epsilon: p.epsilon.unwrap_or(d.epsilon),
            delta: p.delta.unwrap_or(d.delta),
            min_segment: p.d.unwrap_or(d.min_segment),
            grid_dt: p.grid_dt.unwrap_or(d.grid_dt),
            lambda_max: p.lambda_max.unwrap_or(d.lambda_max),
            offline_tol: p.offline_tol.unwrap_or(d.offline_tol),
            offline_max_iter: p.offline_max_iter.unwrap_or(d.offline_max_iter),
            budget_accounting: p.budget_accounting.unwrap_or(d.budget_accounting),
            step_rule: p.step_rule.unwrap_or(d.step_rule),
            grad_bound: p.grad_bound,
            reward_weighted_ucb: p.reward_weighted_ucb.unwrap_or(d.reward_weighted_ucb),
            unvisited_prior: p.unvisited_prior.unwrap_or(d.unvisited_prior),
        };
        SimConfig::new(instance, arrivals, self.seed, params)
    }

    fn from_config(c: &SimConfig) -> Self {
        let inst = &c.instance;
        let instance = InstanceSpec {
            n: inst.n(),
            m: inst.m(),
            rewards: inst.rewards.clone(),
            budgets: inst
                .budgets
                .iter()
                .map(|b| match *b {
                    Budget::Finite(value) => BudgetSpec::Value { value },
                    Budget::Infinite => BudgetSpec::Infinite { infinite: true },
                })
                .collect(),
            mu: inst.mu,
            preferences: PreferenceSpec::Matrix(
                inst.true_preferences.rows().into_iter().map(|r| r.to_vec()).collect(),
            ),
            horizon: inst.horizon,
        };
        let arrivals = match &c.arrivals {
            ArrivalModel::Stationary { rates } => ArrivalsSpec::Stationary { rates: rates.clone() },
            ArrivalModel::NonStationary { rate_fns, t0, t_end } => ArrivalsSpec::Nonstationary {
                t0: *t0,
                t_end: *t_end,
                rate_fns: rate_fns.iter().map(|f| f.pieces().to_vec()).collect(),
            },
        };
        let p = &c.params;
        let params = ParamsSpec {
            r_max: Some(p.ucb_max_rounds),
            k: Some(p.ucb_check_interval),
            ucb_stop_epsilon: Some(p.ucb_stop_epsilon),
            epsilon: Some(p.epsilon),
            delta: Some(p.delta),
            d: Some(p.min_segment),
            grid_dt: Some(p.grid_dt),
            lambda_max: Some(p.lambda_max),
            offline_tol: Some(p.offline_tol),
            offline_max_iter: Some(p.offline_max_iter),
            budget_accounting: Some(p.budget_accounting),
            step_rule: Some(p.step_rule),
            grad_bound: p.grad_bound,
            reward_weighted_ucb: Some(p.reward_weighted_ucb),
            unvisited_prior: Some(p.unvisited_prior),
        };
        Self { instance, arrivals, seed: c.seed, params }
    }
}

/// Beta(α, β) or clamped Normal(mean, sd) ground-truth preferences.
fn generate_preferences(
    kind: GeneratorKind,
    params: &[f64],
    m: usize,
    n: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    if params.len() != 2 {
        return Err(Error::Validation(format!(
            "preference generator needs 2 parameters, got {}",
            params.len()
        )));
    }
    let (a, b) = (params[0], params[1]);
    match kind {
        GeneratorKind::Beta => {
            Beta::new(a, b).map_err(|e| Error::Validation(format!("beta generator: {e}")))?;
            Ok(beta_preferences(m, n, a, b, seed))
        }
        GeneratorKind::Gaussian => {
            Normal::new(a, b).map_err(|e| Error::Validation(format!("gaussian generator: {e}")))?;
            Ok(gaussian_preferences(m, n, a, b, seed))
        }
    }
}

pub(crate) const GAUSSIAN_FLOOR: f64 = 0.01;

pub(crate) fn clamp_probability(p: f64) -> f64 {
    p.clamp(GAUSSIAN_FLOOR, 1.0)
}

fn sample_matrix(m: usize, n: usize, mut draw: impl FnMut() -> f64) -> Array2<f64> {
    let mut out = Array2::zeros((m, n));
    for v in out.iter_mut() {
        *v = draw();
    }
    out
}

/// Draws an `m × n` Beta(α, β) matrix from the preference stream of `seed`.
pub(crate) fn beta_preferences(m: usize, n: usize, alpha: f64, beta: f64, seed: u64) -> Array2<f64> {
    let dist = Beta::new(alpha, beta).expect("valid beta parameters");
    let mut rng = rng::stream(seed, Stream::Preferences);
    sample_matrix(m, n, || dist.sample(&mut rng))
}

/// Draws an `m × n` clamped Normal(mean, sd) matrix from the preference stream of `seed`.
pub(crate) fn gaussian_preferences(m: usize, n: usize, mean: f64, sd: f64, seed: u64) -> Array2<f64> {
    let dist = Normal::new(mean, sd).expect("valid normal parameters");
    let mut rng = rng::stream(seed, Stream::Preferences);
    sample_matrix(m, n, || clamp_probability(dist.sample(&mut rng)))
}
