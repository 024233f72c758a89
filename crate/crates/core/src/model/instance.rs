use std::ops::Deref;

use ndarray::Array2;

use crate::error::{Error, InstanceViolation, Result};

/// Stock of one item. Infinite stock is an explicit flag so depletion logic
/// never compares against a sentinel number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Finite(f64),
    Infinite,
}

impl Budget {
    pub fn is_infinite(self) -> bool {
        matches!(self, Self::Infinite)
    }

    /// Finite value, or `None` for an infinite budget.
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(b) => Some(b),
            Self::Infinite => None,
        }
    }

    /// `f64::INFINITY` for infinite budgets.
    pub fn as_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    pub fn from_f64(value: f64) -> Self {
        if value.is_infinite() && value > 0.0 {
            Self::Infinite
        } else {
            Self::Finite(value)
        }
    }
}

/// The simulated world: items, their rewards and stock, the regularization
/// strength, and the ground-truth purchase probabilities (types × items).
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub rewards: Vec<f64>,
    pub budgets: Vec<Budget>,
    pub mu: f64,
    /// `true_preferences[[j, i]]` is the probability that a type-`j` customer
    /// buys item `i` when it is offered.
    pub true_preferences: Array2<f64>,
    /// Total expected number of arrivals.
    pub horizon: u64,
}

impl ProblemInstance {
    /// Item count.
    pub fn n(&self) -> usize {
        self.true_preferences.ncols()
    }

    /// Customer-type count.
    pub fn m(&self) -> usize {
        self.true_preferences.nrows()
    }
}

/// An instance that passed [`validate_instance`], with derived quantities
/// cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedInstance {
    inner: ProblemInstance,
    row_max: Vec<f64>,
    max_reward: f64,
}

impl ValidatedInstance {
    /// Per-type maximum preference `max_i P*[j, i]`.
    pub fn row_max(&self) -> &[f64] {
        &self.row_max
    }

    /// `r* = max_i r_i`.
    pub fn max_reward(&self) -> f64 {
        self.max_reward
    }

    pub fn into_inner(self) -> ProblemInstance {
        self.inner
    }
}

impl Deref for ValidatedInstance {
    type Target = ProblemInstance;

    fn deref(&self) -> &ProblemInstance {
        &self.inner
    }
}

pub fn validate_instance(inst: ProblemInstance) -> Result<ValidatedInstance> {
    let (m, n) = inst.true_preferences.dim();
    let mut violations = Vec::new();

    if n == 0 || m == 0 {
        violations.push(InstanceViolation::EmptyDimension { n, m });
    }
    if inst.rewards.len() != n {
        violations.push(InstanceViolation::DimensionMismatch {
            field: "rewards",
            expected: n,
            found: inst.rewards.len(),
        });
    }
    if inst.budgets.len() != n {
        violations.push(InstanceViolation::DimensionMismatch {
            field: "budgets",
            expected: n,
            found: inst.budgets.len(),
        });
    }
    for ((j, i), &p) in inst.true_preferences.indexed_iter() {
        if !(0.0..=1.0).contains(&p) {
            violations.push(InstanceViolation::PreferenceOutOfRange { kind: j, item: i, value: p });
        }
    }
    for (i, &r) in inst.rewards.iter().enumerate() {
        if !(r > 0.0) || !r.is_finite() {
            violations.push(InstanceViolation::NonpositiveReward { item: i, value: r });
        }
    }
    for (i, b) in inst.budgets.iter().enumerate() {
        if let Budget::Finite(v) = *b {
            if !(v >= 0.0) || !v.is_finite() {
                violations.push(InstanceViolation::NegativeBudget { item: i, value: v });
            }
        }
    }
    if !(inst.mu > 0.0) || !inst.mu.is_finite() {
        violations.push(InstanceViolation::NonpositiveMu(inst.mu));
    }
    if inst.horizon == 0 {
        violations.push(InstanceViolation::ZeroHorizon);
    }

    let row_max: Vec<f64> = inst
        .true_preferences
        .rows()
        .into_iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .collect();
    for (j, &pmax) in row_max.iter().enumerate() {
        if !(pmax > 0.0) && n > 0 {
            violations.push(InstanceViolation::DegenerateRow { kind: j });
        }
    }

    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations));
    }
    let max_reward = inst.rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ValidatedInstance { inner: inst, row_max, max_reward })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny(p: f64, mu: f64) -> ProblemInstance {
        ProblemInstance {
            rewards: vec![1.0],
            budgets: vec![Budget::Finite(1.0)],
            mu,
            true_preferences: array![[p]],
            horizon: 1,
        }
    }

    #[test]
    fn single_item_instance_is_valid() {
        let v = validate_instance(tiny(0.5, 1.0)).unwrap();
        assert_eq!(v.row_max(), &[0.5]);
        assert_eq!(v.max_reward(), 1.0);
    }

    #[test]
    fn preference_above_one_is_rejected() {
        let err = validate_instance(tiny(1.2, 1.0)).unwrap_err();
        match err {
            Error::InvalidInstance(v) => assert!(matches!(
                v[0],
                InstanceViolation::PreferenceOutOfRange { kind: 0, item: 0, .. }
            )),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_mu_is_rejected() {
        let err = validate_instance(tiny(0.5, 0.0)).unwrap_err();
        assert!(matches!(err, Error::InvalidInstance(ref v) if v.contains(&InstanceViolation::NonpositiveMu(0.0))));
    }

    #[test]
    fn empty_and_nonpositive_are_all_reported() {
        let mut inst = tiny(0.5, 1.0);
        inst.rewards = vec![-1.0];
        inst.mu = -2.0;
        let Err(Error::InvalidInstance(v)) = validate_instance(inst) else { panic!() };
        assert_eq!(v.len(), 2);

        let empty = ProblemInstance {
            rewards: vec![],
            budgets: vec![],
            mu: 1.0,
            true_preferences: Array2::zeros((0, 0)),
            horizon: 1,
        };
        let Err(Error::InvalidInstance(v)) = validate_instance(empty) else { panic!() };
        assert!(matches!(v[0], InstanceViolation::EmptyDimension { n: 0, m: 0 }));
    }

    #[test]
    fn zero_row_is_degenerate() {
        let Err(Error::InvalidInstance(v)) = validate_instance(tiny(0.0, 1.0)) else { panic!() };
        assert_eq!(v, vec![InstanceViolation::DegenerateRow { kind: 0 }]);
    }

    #[test]
    fn infinite_budget_round_trips_through_f64() {
        assert_eq!(Budget::from_f64(f64::INFINITY), Budget::Infinite);
        assert_eq!(Budget::Infinite.as_f64(), f64::INFINITY);
        assert_eq!(Budget::from_f64(3.0), Budget::Finite(3.0));
    }
}
