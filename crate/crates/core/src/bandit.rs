//! Per-type UCB learner for the purchase-probability matrix.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Assignment and purchase counts per (type, item) plus per-type clocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceEstimate {
    /// `N[[j, i]]`: times item `i` was offered to type `j`.
    pub counts: Array2<u64>,
    /// `R[[j, i]]`: purchases among those offers.
    pub purchases: Array2<u64>,
    /// `P̂[[j, i]] = R/N` where `N > 0`, else `prior`.
    pub estimate: Array2<f64>,
    /// `t_j`: arrivals of type `j` observed so far.
    pub rounds: Vec<u64>,
    pub prior: f64,
}

impl PreferenceEstimate {
    pub fn new(m: usize, n: usize, prior: f64) -> Self {
        Self {
            counts: Array2::zeros((m, n)),
            purchases: Array2::zeros((m, n)),
            estimate: Array2::from_elem((m, n), prior),
            rounds: vec![0; m],
            prior,
        }
    }

    pub fn m(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n(&self) -> usize {
        self.counts.ncols()
    }

    /// Advances the clock of type `j` and returns the new `t_j`.
    pub fn observe_arrival(&mut self, j: usize) -> u64 {
        self.rounds[j] += 1;
        self.rounds[j]
    }

    /// Records one offer of item `i` to type `j`.
    pub fn update(&mut self, j: usize, i: usize, purchased: bool) {
        self.counts[[j, i]] += 1;
        if purchased {
            self.purchases[[j, i]] += 1;
        }
        self.estimate[[j, i]] = self.purchases[[j, i]] as f64 / self.counts[[j, i]] as f64;
    }
}

/// Functional form of [`PreferenceEstimate::update`].
pub fn update_estimate(mut est: PreferenceEstimate, j: usize, i: usize, purchased: bool) -> PreferenceEstimate {
    est.update(j, i, purchased);
    est
}

/// `P̂_ji + √(3 ln t_j / (2 N_ji))`, or `+∞` for never-offered items.
pub fn ucb_scores(est: &PreferenceEstimate, j: usize, t_j: u64) -> Vec<f64> {
    let log_t = (t_j.max(1) as f64).ln();
    est.counts
        .row(j)
        .iter()
        .zip(est.estimate.row(j))
        .map(|(&n, &p)| if n == 0 { f64::INFINITY } else { p + (1.5 * log_t / n as f64).sqrt() })
        .collect()
}

/// Argmax over `available` (ties to the lowest index). With `rewards` the
/// score of item `i` is multiplied by `r_i`.
pub fn select_ucb(
    est: &PreferenceEstimate,
    j: usize,
    t_j: u64,
    available: &[bool],
    rewards: Option<&[f64]>,
) -> Result<usize> {
    let scores = ucb_scores(est, j, t_j);
    let mut best: Option<(usize, f64)> = None;
    for (i, mut s) in scores.into_iter().enumerate() {
        if !available[i] {
            continue;
        }
        if let Some(r) = rewards {
            s *= r[i];
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoAvailableItem)
}

/// Frobenius norm of the difference between two estimate matrices.
pub fn estimate_change(prev: &Array2<f64>, now: &Array2<f64>) -> Result<f64> {
    if prev.dim() != now.dim() {
        return Err(Error::DimensionMismatch { expected: prev.len(), found: now.len() });
    }
    Ok(prev.iter().zip(now).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}
