//! Piecewise arrival-rate functions `λ(t)` (time in hours).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PieceKind {
    /// `c`
    Constant,
    /// `a·t + c`
    Linear,
    /// `a·t² + b·t + c`
    Quadratic,
    /// `a·sin(b·t + c) + d`
    Sinusoid,
}

impl PieceKind {
    pub fn param_count(self) -> usize {
        match self {
            Self::Constant => 1,
            Self::Linear => 2,
            Self::Quadratic => 3,
            Self::Sinusoid => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePiece {
    pub from: f64,
    pub to: f64,
    pub kind: PieceKind,
    pub params: Vec<f64>,
}

impl RatePiece {
    pub fn new(from: f64, to: f64, kind: PieceKind, params: Vec<f64>) -> Self {
        Self { from, to, kind, params }
    }

    /// Evaluates the piece's formula at `t`, ignoring its domain.
    pub fn value(&self, t: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            PieceKind::Constant => p[0],
            PieceKind::Linear => p[0] * t + p[1],
            PieceKind::Quadratic => (p[0] * t + p[1]) * t + p[2],
            PieceKind::Sinusoid => p[0] * (p[1] * t + p[2]).sin() + p[3],
        }
    }

    /// Closed-form integral of the formula over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            PieceKind::Constant => p[0] * (b - a),
            PieceKind::Linear => 0.5 * p[0] * (b * b - a * a) + p[1] * (b - a),
            PieceKind::Quadratic => {
                p[0] / 3.0 * (b.powi(3) - a.powi(3)) + 0.5 * p[1] * (b * b - a * a) + p[2] * (b - a)
            }
            PieceKind::Sinusoid => {
                let (amp, freq, phase, offset) = (p[0], p[1], p[2], p[3]);
                let oscillating = if freq == 0.0 {
                    amp * phase.sin() * (b - a)
                } else {
                    -amp / freq * ((freq * b + phase).cos() - (freq * a + phase).cos())
                };
                oscillating + offset * (b - a)
            }
        }
    }

    /// The same piece with its output multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut params = self.params.clone();
        match self.kind {
            PieceKind::Constant | PieceKind::Linear | PieceKind::Quadratic => {
                params.iter_mut().for_each(|v| *v *= factor)
            }
            PieceKind::Sinusoid => {
                params[0] *= factor;
                params[3] *= factor;
            }
        }
        Self { params, ..self.clone() }
    }
}

/// Contiguous, non-overlapping pieces covering `[start, end]`.
/// Discontinuities at piece boundaries are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    pieces: Vec<RatePiece>,
}

impl RateFunction {
    pub fn new(pieces: Vec<RatePiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Validation("rate function has no pieces".into()));
        }
        for (k, piece) in pieces.iter().enumerate() {
            if !(piece.from < piece.to) || !piece.from.is_finite() || !piece.to.is_finite() {
                return Err(Error::Validation(format!(
                    "rate piece {k} has empty or invalid interval [{}, {}]",
                    piece.from, piece.to
                )));
            }
            if piece.params.len() != piece.kind.param_count() {
                return Err(Error::Validation(format!(
                    "rate piece {k} of kind {:?} needs {} parameters, got {}",
                    piece.kind,
                    piece.kind.param_count(),
                    piece.params.len()
                )));
            }
            if piece.params.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("rate piece {k} has non-finite parameters")));
            }
            if k > 0 && pieces[k - 1].to != piece.from {
                return Err(Error::Validation(format!(
                    "rate pieces {} and {k} are not contiguous ({} != {})",
                    k - 1,
                    pieces[k - 1].to,
                    piece.from
                )));
            }
        }
        Ok(Self { pieces })
    }

    /// A single constant piece on `[from, to]`.
    pub fn constant(value: f64, from: f64, to: f64) -> Result<Self> {
        Self::new(vec![RatePiece::new(from, to, PieceKind::Constant, vec![value])])
    }

    pub fn pieces(&self) -> &[RatePiece] {
        &self.pieces
    }

    pub fn start(&self) -> f64 {
        self.pieces[0].from
    }

    pub fn end(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].to
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        self.start() <= a && b <= self.end()
    }

    fn piece_at(&self, t: f64) -> &RatePiece {
        let idx = self.pieces.partition_point(|p| p.to <= t);
        &self.pieces[idx.min(self.pieces.len() - 1)]
    }

    /// `λ(t)`. At a boundary the right-hand piece is used; the final piece
    /// includes its end point. Outside the domain the nearest piece's formula
    /// is extrapolated.
    pub fn eval(&self, t: f64) -> f64 {
        self.piece_at(t).value(t)
    }

    /// `∫_a^b λ(t) dt`, exact for all supported piece kinds.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.pieces
            .iter()
            .filter_map(|p| {
                let lo = a.max(p.from);
                let hi = b.min(p.to);
                (lo < hi).then(|| p.integral(lo, hi))
            })
            .sum()
    }

    /// Grid-approximate `(min, max)` of `λ` on `[a, b]`.
    ///
    /// Evaluated on `{a, a+dt, a+2dt, …} ∪ {b}` plus both one-sided values at
    /// every piece boundary inside the interval.
    pub fn extrema(&self, a: f64, b: f64, grid_dt: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        self.for_each_grid_value(a, b, grid_dt, |_, v| {
            lo = lo.min(v);
            hi = hi.max(v);
        });
        (lo, hi)
    }

    /// Visits every `(t, λ(t))` used by [`extrema`](Self::extrema).
    pub(crate) fn for_each_grid_value(&self, a: f64, b: f64, grid_dt: f64, mut f: impl FnMut(f64, f64)) {
        if a >= b {
            f(a, self.eval(a));
            return;
        }
        for piece in &self.pieces {
            let lo = a.max(piece.from);
            let hi = b.min(piece.to);
            if !(lo < hi) {
                continue;
            }
            f(lo, piece.value(lo));
            let first = ((lo - a) / grid_dt).floor() as u64 + 1;
            let mut k = first;
            loop {
                let t = a + k as f64 * grid_dt;
                if t >= hi {
                    break;
                }
                f(t, piece.value(t));
                k += 1;
            }
            f(hi, piece.value(hi));
        }
    }

    /// Errors with [`Error::NegativeRate`] if the grid scan over the whole
    /// domain finds a negative value.
    pub fn check_nonnegative(&self, kind: usize, grid_dt: f64) -> Result<()> {
        let mut worst: Option<(f64, f64)> = None;
        self.for_each_grid_value(self.start(), self.end(), grid_dt, |t, v| {
            if v < 0.0 && worst.is_none_or(|(_, w)| v < w) {
                worst = Some((t, v));
            }
        });
        match worst {
            Some((time, value)) => Err(Error::NegativeRate { kind, time, value }),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { pieces: self.pieces.iter().map(|p| p.scaled(factor)).collect() }
    }

    pub fn into_pieces(self) -> Vec<RatePiece> {
        self.pieces
    }
}
