//! Poisson arrival streams and ground-truth type probabilities.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::model::{ArrivalModel, RateFunction};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    /// Hours.
    pub time: f64,
    /// Customer type, 0-based.
    pub kind: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSequence {
    pub arrivals: Vec<Arrival>,
    pub seed: u64,
}

impl ArrivalSequence {
    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    /// Number of arrivals of each type.
    pub fn type_counts(&self, m: usize) -> Vec<u64> {
        let mut counts = vec![0; m];
        for a in &self.arrivals {
            counts[a.kind] += 1;
        }
        counts
    }

    /// Arrivals with `start <= time < end` (or `<= end` when `inclusive_end`).
    pub fn window(&self, start: f64, end: f64, inclusive_end: bool) -> &[Arrival] {
        let lo = self.arrivals.partition_point(|a| a.time < start);
        let hi = if inclusive_end {
            self.arrivals.partition_point(|a| a.time <= end)
        } else {
            self.arrivals.partition_point(|a| a.time < end)
        };
        &self.arrivals[lo..hi.max(lo)]
    }

    /// CSV with header `t,type`; times to 9 significant digits, types 1-based.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,type")?;
        for a in &self.arrivals {
            writeln!(out, "{},{}", format_sig(a.time, 9), a.kind + 1)?;
        }
        Ok(())
    }
}

/// Formats `x` with `digits` significant digits, without trailing zeros.
pub(crate) fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Exactly `count` arrivals of a superposed stationary Poisson process: gaps
/// are Exp(Σλ) and each type is drawn independently with probability λ_j/Σλ.
pub fn sample_stationary_stream(rates: &[f64], count: usize, seed: u64) -> Result<ArrivalSequence> {
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotalRate);
    }
    let gap = Exp::new(total).map_err(|_| Error::ZeroTotalRate)?;
    let types = WeightedIndex::new(rates).map_err(|e| Error::Validation(format!("rates: {e}")))?;
    let mut rng = rng::stream(seed, Stream::StationaryArrivals);
    let mut time = 0.0;
    let arrivals = (0..count)
        .map(|_| {
            time += gap.sample(&mut rng);
            Arrival { time, kind: types.sample(&mut rng) }
        })
        .collect();
    Ok(ArrivalSequence { arrivals, seed })
}

/// Per-type thinning on `(t0, t_end)`, merged by time.
///
/// Each piece uses a constant majorant: the grid maximum of the piece plus the
/// largest step between neighbouring grid values, which covers overshoot
/// between grid points for these smooth families.
pub fn sample_nonstationary_stream(
    rate_fns: &[RateFunction],
    t0: f64,
    t_end: f64,
    grid_dt: f64,
    seed: u64,
) -> Result<ArrivalSequence> {
    let mut arrivals = Vec::new();
    for (kind, f) in rate_fns.iter().enumerate() {
        f.check_nonnegative(kind, grid_dt)?;
        let mut rng = rng::stream(seed, Stream::Type(kind));
        for piece in f.pieces() {
            let lo = t0.max(piece.from);
            let hi = t_end.min(piece.to);
            if !(lo < hi) {
                continue;
            }
            let mut max_value = f64::NEG_INFINITY;
            let mut max_step: f64 = 0.0;
            let mut prev: Option<f64> = None;
            let single = RateFunction::new(vec![piece.clone()])?;
            single.for_each_grid_value(lo, hi, grid_dt, |_, v| {
                max_value = max_value.max(v);
                if let Some(p) = prev {
                    max_step = max_step.max((v - p).abs());
                }
                prev = Some(v);
            });
            let majorant = max_value + max_step;
            if !(majorant > 0.0) {
                continue;
            }
            let gap = Exp::new(majorant).expect("positive majorant");
            let mut t = lo;
            loop {
                t += gap.sample(&mut rng);
                if t >= hi {
                    break;
                }
                let accept = piece.value(t) / majorant;
                debug_assert!(accept <= 1.0 + 1e-12, "majorant violated at t={t}");
                if rng.random::<f64>() < accept {
                    arrivals.push(Arrival { time: t, kind });
                }
            }
        }
    }
    arrivals.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.kind.cmp(&b.kind)));
    Ok(ArrivalSequence { arrivals, seed })
}

/// `φ_j(t) = λ_j(t) / Σ_s λ_s(t)` (constant for stationary models).
pub fn type_probability(model: &ArrivalModel, t: f64) -> Result<Vec<f64>> {
    let rates: Vec<f64> = match model {
        ArrivalModel::Stationary { rates } => rates.clone(),
        ArrivalModel::NonStationary { rate_fns, .. } => rate_fns.iter().map(|f| f.eval(t)).collect(),
    };
    normalize_rates(&rates)
}

pub(crate) fn normalize_rates(rates: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotalRate);
    }
    Ok(rates.iter().map(|r| r / total).collect())
}

/// Grid-approximate extrema of `λ` on `[a, b]`; see [`RateFunction::extrema`].
pub fn rate_extrema(rate_fn: &RateFunction, a: f64, b: f64, grid_dt: f64) -> (f64, f64) {
    rate_fn.extrema(a, b, grid_dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PieceKind, RatePiece};

    #[test]
    fn single_type_stream() {
        let s = sample_stationary_stream(&[1.0], 5, 11).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.arrivals.iter().all(|a| a.kind == 0));
        assert!(s.arrivals.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn type_frequency_concentrates() {
        let t = 100_000;
        let s = sample_stationary_stream(&[1.0, 3.0], t, 5).unwrap();
        let frac = s.type_counts(2)[1] as f64 / t as f64;
        let sigma = (0.75f64 * 0.25 / t as f64).sqrt();
        assert!((frac - 0.75).abs() < 4.0 * sigma, "{frac}");
    }

    #[test]
    fn stationary_stream_is_reproducible() {
        let a = sample_stationary_stream(&[0.2, 0.5, 0.3], 1000, 42).unwrap();
        let b = sample_stationary_stream(&[0.2, 0.5, 0.3], 1000, 42).unwrap();
        assert_eq!(a, b);
        assert!(matches!(sample_stationary_stream(&[0.0, 0.0], 3, 1), Err(Error::ZeroTotalRate)));
    }

    #[test]
    fn constant_rate_count_concentrates() {
        let (c, h) = (500.0, 4.0);
        let f = RateFunction::constant(c, 0.0, h).unwrap();
        let s = sample_nonstationary_stream(&[f], 0.0, h, 0.001, 3).unwrap();
        let sigma = (c * h).sqrt();
        assert!((s.len() as f64 - c * h).abs() < 4.0 * sigma, "{}", s.len());
        assert!(s.arrivals.iter().all(|a| a.time > 0.0 && a.time < h));
    }

    #[test]
    fn zero_rate_type_never_arrives() {
        let fns = vec![
            RateFunction::constant(0.0, 0.0, 1.0).unwrap(),
            RateFunction::constant(100.0, 0.0, 1.0).unwrap(),
        ];
        let s = sample_nonstationary_stream(&fns, 0.0, 1.0, 0.01, 8).unwrap();
        assert_eq!(s.type_counts(2)[0], 0);
        assert!(s.type_counts(2)[1] > 0);
        let again = sample_nonstationary_stream(&fns, 0.0, 1.0, 0.01, 8).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn negative_rate_is_rejected() {
        let f = RateFunction::new(vec![RatePiece::new(0.0, 1.0, PieceKind::Linear, vec![-2.0, 1.0])]).unwrap();
        assert!(matches!(
            sample_nonstationary_stream(&[f], 0.0, 1.0, 0.01, 1),
            Err(Error::NegativeRate { .. })
        ));
    }

    #[test]
    fn type_probabilities() {
        let st = ArrivalModel::Stationary { rates: vec![1.0, 3.0] };
        assert_eq!(type_probability(&st, 0.0).unwrap(), vec![0.25, 0.75]);

        let fns = vec![
            RateFunction::new(vec![RatePiece::new(0.0, 2.0, PieceKind::Linear, vec![1.0, 1.0])]).unwrap(),
            RateFunction::constant(1.0, 0.0, 2.0).unwrap(),
        ];
        let ns = ArrivalModel::NonStationary { rate_fns: fns, t0: 0.0, t_end: 2.0 };
        let p = type_probability(&ns, 1.0).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let even = type_probability(&ns, 0.0).unwrap();
        assert_eq!(even, vec![0.5, 0.5]);
    }

    #[test]
    fn thinning_matches_stationary_counts_over_seeds() {
        // Constant rates: per-seed counts from thinning and from the
        // exponential-gap sampler must agree in mean.
        let (c, h, seeds) = (50.0, 2.0, 400u64);
        let f = RateFunction::constant(c, 0.0, h).unwrap();
        let thin: Vec<f64> = (0..seeds)
            .map(|s| sample_nonstationary_stream(std::slice::from_ref(&f), 0.0, h, 0.01, s).unwrap().len() as f64)
            .collect();
        let direct: Vec<f64> = (0..seeds)
            .map(|s| {
                // count of Exp(c) gaps that fit in [0, h]
                let big = sample_stationary_stream(&[c], 1_000, s + 10_000).unwrap();
                big.arrivals.iter().filter(|a| a.time < h).count() as f64
            })
            .collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sigma = (2.0 * c * h / seeds as f64).sqrt();
        assert!((mean(&thin) - mean(&direct)).abs() < 4.0 * sigma);
    }

    #[test]
    fn csv_uses_nine_significant_digits() {
        let s = ArrivalSequence {
            arrivals: vec![Arrival { time: 1.23456789012, kind: 0 }, Arrival { time: 0.5, kind: 2 }],
            seed: 0,
        };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,type\n1.23456789,1\n0.5,3\n");
    }
}
