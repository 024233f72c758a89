//! Splitting a horizon with time-varying arrival rates into segments that can
//! be solved as stationary problems.
//!
//! A type-A segment is a window where every rate varies by at most `ε`; it is
//! represented by the rates at one random point. When such a window would be
//! shorter than `d`, a type-B segment is emitted instead: its length is
//! limited by a variation threshold `v` chosen so that the band of possible
//! type probabilities `[L(j), U(j)]` has width at most `δ`.

use std::io::Write;

use rand::Rng;

use crate::arrivals::{format_sig, sample_nonstationary_stream, ArrivalSequence};
use crate::error::{Error, Result};
use crate::integrated::{IntegratedRunner, Trace};
use crate::model::{ArrivalModel, RateFunction, SimConfig};
use crate::rng::{self, Stream};

/// Relative slack for comparisons against `ε`, `v` and `δ`.
const TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentLabel {
    A,
    B,
}

impl SegmentLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
        }
    }
}

/// Probability band from the per-type rate extrema of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeBounds {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub delta: Vec<f64>,
}

impl TypeBounds {
    pub fn max_delta(&self) -> f64 {
        self.delta.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub label: SegmentLabel,
    /// `ε` for type A, the solved `v` for type B.
    pub threshold: f64,
    /// Bounds computed from the segment's own rate extrema.
    pub bounds: TypeBounds,
    /// Type weights used inside the segment; empty until assigned.
    pub weights: Vec<f64>,
    /// Type A only: the point whose rates define the weights.
    pub sample_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentPlan {
    pub segments: Vec<Segment>,
    pub epsilon: f64,
    pub delta: f64,
    pub min_length: f64,
    pub grid_dt: f64,
}

/// Values of `f` visited when a window's right end moves from `prev` to `next`:
/// both one-sided values at piece boundaries in `(prev, next)` and the
/// left-sided value at `next`.
fn advance_values(f: &RateFunction, prev: f64, next: f64, mut visit: impl FnMut(f64)) {
    let pieces = f.pieces();
    for w in pieces.windows(2) {
        let b = w[0].to;
        if b > prev && b < next {
            visit(w[0].value(b));
            visit(w[1].value(b));
        }
    }
    let idx = pieces.partition_point(|p| p.to < next).min(pieces.len() - 1);
    visit(pieces[idx].value(next));
}

/// Largest grid point `t* = t + k·dt` (or `t_end`) such that every rate's
/// grid range on `[t, t*]` is at most `threshold`. Always at least one step.
pub fn find_segment_end(rate_fns: &[RateFunction], t: f64, threshold: f64, grid_dt: f64, t_end: f64) -> f64 {
    let slack = threshold * (1.0 + TOL) + TOL;
    // right-sided values at the window start
    let mut lo: Vec<f64> = rate_fns.iter().map(|f| f.eval(t)).collect();
    let mut hi = lo.clone();
    let mut best = None;
    let mut first = None;
    let mut prev = t;
    let mut k: u64 = 1;
    loop {
        let mut next = t + k as f64 * grid_dt;
        let last = next >= t_end - 1e-6 * grid_dt;
        if last {
            next = t_end;
        }
        first.get_or_insert(next);
        let mut ok = true;
        for (j, f) in rate_fns.iter().enumerate() {
            advance_values(f, prev, next, |v| {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            });
            ok &= hi[j] - lo[j] <= slack;
        }
        if !ok {
            break;
        }
        best = Some(next);
        if last {
            break;
        }
        prev = next;
        k += 1;
    }
    let mut end = best.or(first).expect("at least one step");
    // Agree exactly with the standalone extrema scan used for certification.
    let mut steps = ((end - t) / grid_dt).round() as u64;
    while steps > 1 && !window_within(rate_fns, t, end, grid_dt, slack) {
        steps -= 1;
        end = t + steps as f64 * grid_dt;
    }
    end
}

fn window_within(rate_fns: &[RateFunction], a: f64, b: f64, grid_dt: f64, slack: f64) -> bool {
    rate_fns.iter().all(|f| {
        let (lo, hi) = f.extrema(a, b, grid_dt);
        hi - lo <= slack
    })
}

/// Positive root of `m v² + (y + m λ − δ m y) v − δ y² = 0`, `y = Σ_j λ_j`,
/// with `λ = max_j λ_j` (the largest rate gives the widest band).
pub fn solve_v_threshold(rates: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Validation(format!("delta must lie in (0, 1), got {delta}")));
    }
    let m = rates.len() as f64;
    let y: f64 = rates.iter().sum();
    let lam = rates.iter().copied().fold(0.0, f64::max);
    if !(y > 0.0) || rates.iter().any(|&r| r < 0.0) {
        return Err(Error::NoPositiveRoot);
    }
    let a = m;
    let b = y + m * lam - delta * m * y;
    let c = -delta * y * y;
    let disc = (b * b - 4.0 * a * c).sqrt();
    let v = if b > 0.0 { -2.0 * c / (b + disc) } else { (-b + disc) / (2.0 * a) };
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::NoPositiveRoot);
    }
    Ok(v)
}

/// `U(j) = max_j / y`, `L(j) = min_j / Y`, `δ(j) = U(j) − L(j)` with
/// `y = Σ min`, `Y = Σ max`.
pub fn bound_type_probability(extrema: &[(f64, f64)]) -> Result<TypeBounds> {
    let y: f64 = extrema.iter().map(|e| e.0).sum();
    let big_y: f64 = extrema.iter().map(|e| e.1).sum();
    if !(y > 0.0) {
        return Err(Error::ZeroLowerSum);
    }
    let upper: Vec<f64> = extrema.iter().map(|e| e.1 / y).collect();
    let lower: Vec<f64> = extrema.iter().map(|e| e.0 / big_y).collect();
    let delta = upper.iter().zip(&lower).map(|(u, l)| u - l).collect();
    Ok(TypeBounds { upper, lower, delta })
}

fn window_bounds(rate_fns: &[RateFunction], a: f64, b: f64, grid_dt: f64) -> Result<TypeBounds> {
    let ext: Vec<(f64, f64)> = rate_fns.iter().map(|f| f.extrema(a, b, grid_dt)).collect();
    bound_type_probability(&ext)
}

/// Greedy left-to-right segmentation of `[t0, t_end]`.
pub fn segment_time_span(
    rate_fns: &[RateFunction],
    t0: f64,
    t_end: f64,
    epsilon: f64,
    delta: f64,
    min_length: f64,
    grid_dt: f64,
) -> Result<SegmentPlan> {
    if !(t0 < t_end) {
        return Err(Error::Validation(format!("empty time window [{t0}, {t_end}]")));
    }
    for (name, v) in [("epsilon", epsilon), ("d", min_length), ("grid_dt", grid_dt)] {
        if !(v > 0.0) {
            return Err(Error::Validation(format!("`{name}` must be positive, got {v}")));
        }
    }
    let mut segments = Vec::new();
    let mut t = t0;
    while t < t_end {
        let end_a = find_segment_end(rate_fns, t, epsilon, grid_dt, t_end);
        let segment = if end_a - t >= min_length * (1.0 - TOL) {
            Segment {
                t_start: t,
                t_end: end_a,
                label: SegmentLabel::A,
                threshold: epsilon,
                bounds: window_bounds(rate_fns, t, end_a, grid_dt)?,
                weights: Vec::new(),
                sample_time: None,
            }
        } else {
            let rates: Vec<f64> = rate_fns.iter().map(|f| f.eval(t)).collect();
            let v = solve_v_threshold(&rates, delta)?;
            let mut end = find_segment_end(rate_fns, t, v, grid_dt, t_end);
            let mut bounds = window_bounds(rate_fns, t, end, grid_dt)?;
            if bounds.max_delta() > delta + TOL {
                // The quadratic assumes the window minimum is the rate at t;
                // shrink until the actual extrema certify the band.
                let total = ((end - t) / grid_dt).round() as u64;
                let (mut good, mut bad) = (0u64, total.max(1));
                while bad - good > 1 {
                    let mid = (good + bad) / 2;
                    let e = t + mid as f64 * grid_dt;
                    if window_bounds(rate_fns, t, e, grid_dt)?.max_delta() <= delta + TOL {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                }
                if good == 0 {
                    return Err(Error::DegenerateSegment { start: t });
                }
                end = t + good as f64 * grid_dt;
                bounds = window_bounds(rate_fns, t, end, grid_dt)?;
            }
            Segment {
                t_start: t,
                t_end: end,
                label: SegmentLabel::B,
                threshold: v,
                bounds,
                weights: Vec::new(),
                sample_time: None,
            }
        };
        if !(segment.t_end > t) {
            return Err(Error::DegenerateSegment { start: t });
        }
        t = segment.t_end;
        segments.push(segment);
    }
    Ok(SegmentPlan { segments, epsilon, delta, min_length, grid_dt })
}

/// Type weights for one segment: rates at a uniform random point for type A,
/// independent uniform draws in `[L(j), U(j)]` normalized to sum 1 for type B.
/// Returns the weights and, for type A, the sample point.
pub fn segment_weights<R: Rng + ?Sized>(
    segment: &Segment,
    rate_fns: &[RateFunction],
    rng: &mut R,
) -> Result<(Vec<f64>, Option<f64>)> {
    match segment.label {
        SegmentLabel::A => {
            let u: f64 = rng.random();
            let t = segment.t_start + u * (segment.t_end - segment.t_start);
            let rates: Vec<f64> = rate_fns.iter().map(|f| f.eval(t)).collect();
            Ok((crate::arrivals::normalize_rates(&rates)?, Some(t)))
        }
        SegmentLabel::B => {
            let draws = raw_band_draws(&segment.bounds, rng);
            Ok((crate::arrivals::normalize_rates(&draws)?, None))
        }
    }
}

/// Unnormalized draws `w'_j ~ U[L(j), U(j)]`.
pub fn raw_band_draws<R: Rng + ?Sized>(bounds: &TypeBounds, rng: &mut R) -> Vec<f64> {
    bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(&l, &u)| {
            let r: f64 = rng.random();
            l + r * (u - l)
        })
        .collect()
}

impl SegmentPlan {
    /// Fills every segment's weights from the seeded weight stream.
    pub fn assign_weights(&mut self, rate_fns: &[RateFunction], seed: u64) -> Result<()> {
        let mut rng = rng::stream(seed, Stream::SegmentWeights);
        for s in &mut self.segments {
            let (w, t) = segment_weights(s, rate_fns, &mut rng)?;
            s.weights = w;
            s.sample_time = t;
        }
        Ok(())
    }

    /// Re-checks every segment against its own grid extrema. Returns one
    /// message per violation.
    pub fn certify(&self, rate_fns: &[RateFunction]) -> Vec<String> {
        let mut problems = Vec::new();
        for (k, s) in self.segments.iter().enumerate() {
            match s.label {
                SegmentLabel::A => {
                    for (j, f) in rate_fns.iter().enumerate() {
                        let (lo, hi) = f.extrema(s.t_start, s.t_end, self.grid_dt);
                        if hi - lo > self.epsilon * (1.0 + TOL) + TOL {
                            problems.push(format!("segment {k}: type {j} varies by {} > ε", hi - lo));
                        }
                    }
                }
                SegmentLabel::B => match window_bounds(rate_fns, s.t_start, s.t_end, self.grid_dt) {
                    Ok(b) if b.max_delta() <= self.delta + 1e-9 => {}
                    Ok(b) => problems.push(format!("segment {k}: δ = {} > {}", b.max_delta(), self.delta)),
                    Err(e) => problems.push(format!("segment {k}: {e}")),
                },
            }
        }
        for (k, w) in self.segments.windows(2).enumerate() {
            if w[0].t_end != w[1].t_start {
                problems.push(format!("segments {k} and {} are not adjacent", k + 1));
            }
        }
        problems
    }

    pub fn start(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.t_start)
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    /// CSV `t_start,t_end,label,v_or_epsilon,delta_max,w_1..w_m`.
    pub fn write_csv<W: Write>(&self, mut out: W, m: usize) -> std::io::Result<()> {
        let header: Vec<String> = (1..=m).map(|j| format!("w_{j}")).collect();
        writeln!(out, "t_start,t_end,label,v_or_epsilon,delta_max,{}", header.join(","))?;
        for s in &self.segments {
            let w: Vec<String> = if s.weights.is_empty() {
                vec![String::new(); m]
            } else {
                s.weights.iter().map(|v| format!("{v:.9}")).collect()
            };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                format_sig(s.t_start, 9),
                format_sig(s.t_end, 9),
                s.label.as_str(),
                format_sig(s.threshold, 9),
                format_sig(s.bounds.max_delta(), 9),
                w.join(",")
            )?;
        }
        Ok(())
    }
}

/// Builds the weighted plan of a non-stationary configuration.
pub fn plan_for_config(config: &SimConfig) -> Result<SegmentPlan> {
    let ArrivalModel::NonStationary { rate_fns, t0, t_end } = &config.arrivals else {
        return Err(Error::Validation("segmentation needs a non-stationary arrival model".into()));
    };
    let p = &config.params;
    let mut plan = segment_time_span(rate_fns, *t0, *t_end, p.epsilon, p.delta, p.min_segment, p.grid_dt)?;
    plan.assign_weights(rate_fns, config.seed)?;
    Ok(plan)
}

#[derive(Debug, Clone)]
pub struct NonstationaryRun {
    pub trace: Trace,
    pub plan: SegmentPlan,
    pub arrivals: ArrivalSequence,
    /// Expected arrivals per segment, `∫ Σ_j λ_j`.
    pub expected_counts: Vec<f64>,
}

/// Segments the horizon, samples one stream, and runs the integrated
/// algorithm segment by segment with `Λ`, `P̂`, stock and random streams
/// carried across boundaries. The budget term is scaled by `1/T` for the
/// whole horizon; the fixed step rule uses each segment's expected count.
pub fn run_nonstationary(config: &SimConfig) -> Result<NonstationaryRun> {
    let plan = plan_for_config(config)?;
    let ArrivalModel::NonStationary { rate_fns, t0, t_end } = &config.arrivals else {
        unreachable!("checked by plan_for_config");
    };
    let stream = sample_nonstationary_stream(rate_fns, *t0, *t_end, config.params.grid_dt, config.seed)?;
    let total = config.instance.horizon as f64;
    let mut runner = IntegratedRunner::new(config, 1.0 / total, total)?;
    let last = plan.segments.len() - 1;
    let mut expected_counts = Vec::with_capacity(plan.segments.len());
    for (k, s) in plan.segments.iter().enumerate() {
        let expected: f64 = rate_fns.iter().map(|f| f.integral(s.t_start, s.t_end)).sum();
        expected_counts.push(expected);
        let window = stream.window(s.t_start, s.t_end, k == last);
        runner.run_segment(window, &s.weights, 1.0 / total, expected.round().max(1.0), k, Some(&config.arrivals))?;
    }
    Ok(NonstationaryRun { trace: runner.finish(), plan, arrivals: stream, expected_counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PieceKind, RatePiece};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(slope: f64, intercept: f64, from: f64, to: f64) -> RateFunction {
        RateFunction::new(vec![RatePiece::new(from, to, PieceKind::Linear, vec![slope, intercept])]).unwrap()
    }

    #[test]
    fn segment_end_examples() {
        let c = vec![RateFunction::constant(3.0, 0.0, 10.0).unwrap()];
        assert_eq!(find_segment_end(&c, 0.0, 0.1, 0.01, 10.0), 10.0);
        let f = vec![linear(2.0, 0.0, 0.0, 1.0)];
        assert!((find_segment_end(&f, 0.0, 1.0, 0.001, 1.0) - 0.5).abs() < 1e-12);
        assert_eq!(find_segment_end(&f, 0.0, 5.0, 0.001, 1.0), 1.0);
        // a threshold that binds immediately still moves one step
        assert!((find_segment_end(&f, 0.0, 1e-9, 0.001, 1.0) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn threshold_examples() {
        assert!((solve_v_threshold(&[1.0, 1.0], 0.75).unwrap() - 1.0).abs() < 1e-12);
        let v1 = solve_v_threshold(&[0.3, 1.2, 0.7], 0.2).unwrap();
        let v2 = solve_v_threshold(&[0.6, 2.4, 1.4], 0.2).unwrap();
        assert!((v2 - 2.0 * v1).abs() < 1e-12);
        assert!(solve_v_threshold(&[1.0, 2.0], 1e-9).unwrap() < 1e-7);
        assert!(solve_v_threshold(&[0.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn threshold_makes_band_tight_for_largest_rate() {
        // With extrema (λ_j, λ_j + v) the widest band equals δ exactly.
        let rates = [0.5, 1.0, 2.0, 0.25];
        let delta = 0.1;
        let v = solve_v_threshold(&rates, delta).unwrap();
        let ext: Vec<(f64, f64)> = rates.iter().map(|&r| (r, r + v)).collect();
        let b = bound_type_probability(&ext).unwrap();
        assert!((b.max_delta() - delta).abs() < 1e-12);
        assert_eq!(b.delta.iter().copied().fold(0.0, f64::max), b.delta[2]);
    }

    #[test]
    fn bound_examples() {
        let b = bound_type_probability(&[(1.0, 2.0), (1.0, 2.0)]).unwrap();
        assert_eq!(b.upper, vec![1.0, 1.0]);
        assert_eq!(b.lower, vec![0.25, 0.25]);
        assert_eq!(b.delta, vec![0.75, 0.75]);
        let c = bound_type_probability(&[(1.0, 1.0), (3.0, 3.0)]).unwrap();
        assert_eq!(c.upper, c.lower);
        assert_eq!(c.upper, vec![0.25, 0.75]);
        assert!(matches!(bound_type_probability(&[(0.0, 1.0)]), Err(Error::ZeroLowerSum)));
    }

    #[test]
    fn constant_rates_give_one_segment() {
        let fns = vec![RateFunction::constant(1.0, 0.0, 10.0).unwrap(), RateFunction::constant(3.0, 0.0, 10.0).unwrap()];
        let mut plan = segment_time_span(&fns, 0.0, 10.0, 0.5, 0.05, 2.0, 0.01).unwrap();
        assert_eq!(plan.segments.len(), 1);
        assert_eq!(plan.segments[0].label, SegmentLabel::A);
        assert_eq!((plan.segments[0].t_start, plan.segments[0].t_end), (0.0, 10.0));
        plan.assign_weights(&fns, 4).unwrap();
        assert_eq!(plan.segments[0].weights, vec![0.25, 0.75]);
    }

    #[test]
    fn unit_slope_gives_ten_unit_segments() {
        let fns: Vec<RateFunction> = (0..3).map(|_| linear(1.0, 1.0, 0.0, 10.0)).collect();
        let plan = segment_time_span(&fns, 0.0, 10.0, 1.0, 0.05, 0.5, 0.001).unwrap();
        assert_eq!(plan.segments.len(), 10);
        for (k, s) in plan.segments.iter().enumerate() {
            assert_eq!(s.label, SegmentLabel::A);
            assert!((s.t_start - k as f64).abs() < 1e-9 && (s.t_end - (k + 1) as f64).abs() < 1e-9);
        }
        assert!(plan.certify(&fns).is_empty());
    }

    #[test]
    fn steep_rates_give_certified_b_segments() {
        let fns = vec![linear(40.0, 5.0, 0.0, 2.0), linear(-20.0, 50.0, 0.0, 2.0), RateFunction::constant(10.0, 0.0, 2.0).unwrap()];
        let plan = segment_time_span(&fns, 0.0, 2.0, 0.01, 0.1, 1.0, 0.001).unwrap();
        assert!(plan.segments.iter().any(|s| s.label == SegmentLabel::B));
        assert!(plan.certify(&fns).is_empty(), "{:?}", plan.certify(&fns));
        for s in plan.segments.iter().filter(|s| s.label == SegmentLabel::B) {
            assert!(s.bounds.max_delta() <= 0.1 + 1e-9);
        }
        assert_eq!(plan.start(), 0.0);
        assert_eq!(plan.end(), 2.0);
    }

    #[test]
    fn band_draws_stay_in_band() {
        let b = bound_type_probability(&[(1.0, 2.0), (0.5, 3.0), (2.0, 2.5)]).unwrap();
        let seg = Segment {
            t_start: 0.0,
            t_end: 1.0,
            label: SegmentLabel::B,
            threshold: 1.0,
            bounds: b.clone(),
            weights: vec![],
            sample_time: None,
        };
        let fns = vec![RateFunction::constant(1.0, 0.0, 1.0).unwrap(); 3];
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw = raw_band_draws(&b, &mut rng);
            for (j, &r) in raw.iter().enumerate() {
                assert!(b.lower[j] <= r && r <= b.upper[j]);
            }
            let (w, t) = segment_weights(&seg, &fns, &mut rng).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(t.is_none());
        }
        let flat = bound_type_probability(&[(1.0, 1.0), (3.0, 3.0)]).unwrap();
        let seg = Segment { bounds: flat, ..seg };
        let (w, _) = segment_weights(&seg, &fns[..2], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(w, vec![0.25, 0.75]);
    }
}
