use crate::arrivals::ArrivalSequence;
use crate::integrated::{Phase, Trace, TraceRecord};
use crate::model::{BudgetAccounting, ProblemInstance};
use crate::rng::{self, Stream};

use rand::Rng;

/// Offers each arrival the highest-reward item still in stock (ties to the
/// lowest index). Purchases are drawn from the same stream the integrated
/// algorithm uses, so runs with equal seeds are paired draw for draw.
pub fn greedy_baseline(
    instance: &ProblemInstance,
    arrivals: &ArrivalSequence,
    seed: u64,
    accounting: BudgetAccounting,
) -> Trace {
    let mut order: Vec<usize> = (0..instance.n()).collect();
    order.sort_by(|&a, &b| instance.rewards[b].total_cmp(&instance.rewards[a]).then(a.cmp(&b)));
    let mut remaining: Vec<f64> = instance.budgets.iter().map(|b| b.as_f64()).collect();
    let mut purchases = rng::stream(seed, Stream::Purchases);
    let mut records = Vec::with_capacity(arrivals.len());
    for (k, a) in arrivals.arrivals.iter().enumerate() {
        let item = order.iter().copied().find(|&i| remaining[i] >= 1.0);
        let u: f64 = purchases.random();
        let purchased = item.is_some_and(|i| u < instance.true_preferences[[a.kind, i]]);
        if let Some(i) = item {
            let consume = purchased || accounting == BudgetAccounting::Assignment;
            if consume && remaining[i].is_finite() {
                remaining[i] -= 1.0;
            }
        }
        records.push(TraceRecord {
            index: k as u64 + 1,
            time: a.time,
            kind: a.kind,
            item,
            purchased,
            phase: Phase::Greedy,
            dual_value: f64::NAN,
            segment: 0,
        });
    }
    Trace {
        records,
        initial_budgets: instance.budgets.clone(),
        remaining,
        final_estimate: None,
        final_lambda: Vec::new(),
        checkpoints: Vec::new(),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::Arrival;
    use crate::model::{validate_instance, Budget, ValidatedInstance};
    use ndarray::{array, Array2};

    fn stream(kinds: &[usize]) -> ArrivalSequence {
        let arrivals = kinds.iter().enumerate().map(|(k, &kind)| Arrival { time: k as f64, kind }).collect();
        ArrivalSequence { arrivals, seed: 0 }
    }

    fn instance(p: Array2<f64>, rewards: Vec<f64>, budgets: Vec<Budget>) -> ValidatedInstance {
        validate_instance(ProblemInstance { rewards, budgets, mu: 0.1, true_preferences: p, horizon: 3 }).unwrap()
    }

    #[test]
    fn hand_trace() {
        let inst = instance(array![[1.0, 1.0]], vec![1.0, 0.5], vec![Budget::Finite(1.0), Budget::Infinite]);
        let trace = greedy_baseline(&inst, &stream(&[0, 0, 0]), 1, BudgetAccounting::Purchase);
        let items: Vec<Option<usize>> = trace.records.iter().map(|r| r.item).collect();
        assert_eq!(items, vec![Some(0), Some(1), Some(1)]);
        assert_eq!(trace.revenue(&inst.rewards), 2.0);
    }

    #[test]
    fn unlimited_stock_always_top_item() {
        let inst = instance(array![[0.5, 0.5, 0.5]], vec![0.2, 0.9, 0.9], vec![Budget::Infinite; 3]);
        let trace = greedy_baseline(&inst, &stream(&[0; 50]), 2, BudgetAccounting::Purchase);
        assert!(trace.records.iter().all(|r| r.item == Some(1)));
    }

    #[test]
    fn zero_preferences_never_sell() {
        let inst = ProblemInstance {
            rewards: vec![1.0, 0.5],
            budgets: vec![Budget::Finite(2.0); 2],
            mu: 0.1,
            true_preferences: Array2::zeros((2, 2)),
            horizon: 4,
        };
        let trace = greedy_baseline(&inst, &stream(&[0, 1, 0, 1]), 3, BudgetAccounting::Purchase);
        assert_eq!(trace.revenue(&inst.rewards), 0.0);
        assert_eq!(trace.remaining, vec![2.0, 2.0]);
        assert!(trace.records.iter().all(|r| r.item == Some(0) && !r.purchased));
    }
}
