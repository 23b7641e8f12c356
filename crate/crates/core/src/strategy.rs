//! Monotone curve representation for leader strategies, equal-bid functions
//! and utility curves, plus the quantile rearrangement that sorts an
//! arbitrary strategy into a weakly increasing one without changing its bid
//! distribution.

use crate::distributions::PiecewiseDensity;
use crate::Real;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

/// Default sample count for curves produced by this crate. The quantities we
/// reproduce are quoted to at most four digits and every curve in scope is
/// piecewise smooth, so ~1e-3 spacing with local refinement is enough.
pub const DEFAULT_GRID: usize = 2001;

/// Sample count for the empirical bid distribution in [`sort_strategy`].
const SORT_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CurveError {
    #[error("grid must be finite, strictly increasing, with at least two points (finite values)")]
    BadGrid,
    #[error("need one value per grid point ({grid} grid points, {values} values)")]
    LengthMismatch { grid: usize, values: usize },
    #[error("values must be weakly increasing (drop of {drop} at index {index})")]
    NotMonotone { index: usize, drop: Real },
    #[error("argument {x} outside curve domain [{lo}, {hi}]")]
    Domain { x: Real, lo: Real, hi: Real },
}

/// How samples are read between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Straight lines between samples; for continuous curves.
    Linear,
    /// Piecewise constant, left continuous: the value on `(x[i-1], x[i]]` is
    /// `values[i]`. A jump's abscissa evaluates to its left limit, which is
    /// the semantics the equal-bid function needs.
    LeftStep,
}

/// A weakly increasing sampled function on a closed interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MonotoneCurveRaw", into = "MonotoneCurveRaw")]
pub struct MonotoneCurve {
    grid: Vec<Real>,
    values: Vec<Real>,
    interp: Interpolation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MonotoneCurveRaw {
    grid: Vec<Real>,
    values: Vec<Real>,
    interp: Interpolation,
}

impl TryFrom<MonotoneCurveRaw> for MonotoneCurve {
    type Error = CurveError;
    fn try_from(raw: MonotoneCurveRaw) -> Result<Self, Self::Error> {
        MonotoneCurve::new(raw.grid, raw.values, raw.interp)
    }
}

impl From<MonotoneCurve> for MonotoneCurveRaw {
    fn from(c: MonotoneCurve) -> Self {
        Self { grid: c.grid, values: c.values, interp: c.interp }
    }
}

/// Decreases smaller than this (times the value scale) are treated as noise
/// and flattened; anything larger is a construction error.
const MONOTONE_SLACK: Real = 1e-9;

impl MonotoneCurve {
    pub fn new(
        grid: Vec<Real>,
        values: Vec<Real>,
        interp: Interpolation,
    ) -> Result<Self, CurveError> {
        if grid.len() < 2
            || grid.windows(2).any(|w| !(w[0] < w[1]))
            || grid.iter().chain(values.iter()).any(|v| !v.is_finite())
        {
            return Err(CurveError::BadGrid);
        }
        if grid.len() != values.len() {
            return Err(CurveError::LengthMismatch { grid: grid.len(), values: values.len() });
        }
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let mut values = values;
        for i in 1..values.len() {
            if values[i] < values[i - 1] {
                let drop = values[i - 1] - values[i];
                if drop > MONOTONE_SLACK * scale {
                    return Err(CurveError::NotMonotone { index: i, drop });
                }
                values[i] = values[i - 1];
            }
        }
        Ok(Self { grid, values, interp })
    }

    pub fn constant(lo: Real, hi: Real, value: Real) -> Self {
        Self::new(vec![lo, hi], vec![value, value], Interpolation::Linear).unwrap()
    }

    /// Samples `f` on `n` equispaced points over `[lo, hi]`, merged with the
    /// given extra abscissae (so breakpoints land exactly on the grid).
    pub fn from_fn(
        lo: Real,
        hi: Real,
        n: usize,
        extra: &[Real],
        f: impl Fn(Real) -> Real,
    ) -> Result<Self, CurveError> {
        let grid = build_grid(lo, hi, n, extra);
        let values = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, values, Interpolation::Linear)
    }

    pub fn grid(&self) -> &[Real] {
        &self.grid
    }

    pub fn values(&self) -> &[Real] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    pub fn domain(&self) -> (Real, Real) {
        (self.grid[0], *self.grid.last().unwrap())
    }

    pub fn min_value(&self) -> Real {
        self.values[0]
    }

    pub fn max_value(&self) -> Real {
        *self.values.last().unwrap()
    }

    pub fn eval(&self, x: Real) -> Result<Real, CurveError> {
        let (lo, hi) = self.domain();
        let span = hi - lo;
        if x < lo - 1e-12 * span || x > hi + 1e-12 * span {
            return Err(CurveError::Domain { x, lo, hi });
        }
        Ok(self.eval_clamped(x))
    }

    /// Like [`eval`](Self::eval) but clamps out-of-domain arguments to the
    /// nearest endpoint.
    pub fn eval_clamped(&self, x: Real) -> Real {
        let (lo, hi) = self.domain();
        let x = x.clamp(lo, hi);
        match self.interp {
            Interpolation::Linear => {
                let i = self.cell_index(x);
                let (x0, x1) = (self.grid[i], self.grid[i + 1]);
                let w = (x - x0) / (x1 - x0);
                self.values[i] + w * (self.values[i + 1] - self.values[i])
            }
            Interpolation::LeftStep => {
                if x <= self.grid[0] {
                    return self.values[0];
                }
                // value on (grid[i], grid[i+1]] is values[i+1]
                let i = match self.grid.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
                    Ok(i) => i,
                    Err(i) => i,
                };
                self.values[i.min(self.values.len() - 1)]
            }
        }
    }

    fn cell_index(&self, x: Real) -> usize {
        match self.grid.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.grid.len() - 2),
            Err(i) => i - 1,
        }
    }

    /// sup { x in domain : c(x) <= t }; the domain's lower endpoint when the
    /// curve exceeds `t` everywhere, the upper endpoint when `t` clears the
    /// maximum. Under the tie rule this is the highest leader type a
    /// follower bid of `t` beats or ties.
    pub fn upper_inverse(&self, t: Real) -> Real {
        let (lo, hi) = self.domain();
        if t >= self.max_value() {
            return hi;
        }
        if t < self.values[0] {
            return lo;
        }
        // Largest index with values[i] <= t; values[i+1] > t afterwards.
        let mut i = match self
            .values
            .binary_search_by(|v| v.partial_cmp(&t).unwrap())
        {
            Ok(found) => found,
            Err(ins) => ins - 1,
        };
        while i + 1 < self.values.len() && self.values[i + 1] <= t {
            i += 1;
        }
        match self.interp {
            Interpolation::LeftStep => self.grid[i],
            Interpolation::Linear => {
                if i + 1 == self.values.len() {
                    hi
                } else {
                    let (v0, v1) = (self.values[i], self.values[i + 1]);
                    let (x0, x1) = (self.grid[i], self.grid[i + 1]);
                    x0 + (t - v0) / (v1 - v0) * (x1 - x0)
                }
            }
        }
    }

    /// Abscissae where consecutive samples rise by more than `factor` times
    /// the neighboring secant changes (with an absolute floor), flagging the
    /// discontinuities of a step-like curve.
    pub fn detect_jumps(&self, factor: Real, floor: Real) -> Vec<Real> {
        let n = self.values.len();
        let mut jumps = Vec::new();
        for i in 1..n {
            let d = self.values[i] - self.values[i - 1];
            let before = if i >= 2 { self.values[i - 1] - self.values[i - 2] } else { 0.0 };
            let after = if i + 1 < n { self.values[i + 1] - self.values[i] } else { 0.0 };
            let local = before.abs().max(after.abs());
            if d > (factor * local).max(floor) {
                jumps.push(self.grid[i]);
            }
        }
        jumps
    }

    /// Two-column CSV (`x,<name>`), '.' decimal separator, header row.
    pub fn write_csv(&self, w: &mut impl Write, name: &str) -> io::Result<()> {
        writeln!(w, "x,{name}")?;
        for (x, v) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{x},{v}")?;
        }
        Ok(())
    }
}

/// Equispaced grid over `[lo, hi]` merged with `extra` points.
pub(crate) fn build_grid(lo: Real, hi: Real, n: usize, extra: &[Real]) -> Vec<Real> {
    let n = n.max(2);
    let mut grid: Vec<Real> = (0..n)
        .map(|i| lo + (hi - lo) * i as Real / (n - 1) as Real)
        .collect();
    grid.extend(extra.iter().copied().filter(|&x| x > lo && x < hi));
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (hi - lo).max(1.0));
    grid
}

/// A sampled type-to-bid map that need not be monotone; the input side of
/// the sorting step. Bids are interpolated linearly between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStrategy {
    grid: Vec<Real>,
    bids: Vec<Real>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RawStrategyError {
    #[error("grid must be strictly increasing with at least two points")]
    BadGrid,
    #[error("need one bid per grid point")]
    LengthMismatch,
    #[error("bids must be finite and nonnegative")]
    BadBid,
    #[error("CSV row {row}: {message}")]
    Csv { row: usize, message: String },
}

impl RawStrategy {
    pub fn new(grid: Vec<Real>, bids: Vec<Real>) -> Result<Self, RawStrategyError> {
        if grid.len() < 2
            || grid.windows(2).any(|w| !(w[0] < w[1]))
            || grid.iter().any(|g| !g.is_finite())
        {
            return Err(RawStrategyError::BadGrid);
        }
        if grid.len() != bids.len() {
            return Err(RawStrategyError::LengthMismatch);
        }
        if bids.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(RawStrategyError::BadBid);
        }
        Ok(Self { grid, bids })
    }

    pub fn from_fn(lo: Real, hi: Real, n: usize, f: impl Fn(Real) -> Real) -> Self {
        let grid = build_grid(lo, hi, n, &[]);
        let bids = grid.iter().map(|&x| f(x)).collect();
        Self::new(grid, bids).expect("sampled strategy must be valid")
    }

    pub fn domain(&self) -> (Real, Real) {
        (self.grid[0], *self.grid.last().unwrap())
    }

    pub fn grid(&self) -> &[Real] {
        &self.grid
    }

    pub fn eval(&self, x: Real) -> Real {
        let (lo, hi) = self.domain();
        let x = x.clamp(lo, hi);
        let i = match self.grid.binary_search_by(|g| g.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.bids[i],
            Err(i) => (i - 1).min(self.grid.len() - 2),
        };
        let w = (x - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        self.bids[i] + w * (self.bids[i + 1] - self.bids[i])
    }

    pub fn is_monotone(&self) -> bool {
        self.bids.windows(2).all(|w| w[0] <= w[1])
    }

    /// Parses two-column CSV (type, bid). A non-numeric first row is treated
    /// as the header.
    pub fn from_csv(text: &str) -> Result<Self, RawStrategyError> {
        let mut grid = Vec::new();
        let mut bids = Vec::new();
        for (row, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (a, b) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
            match (a.trim().parse::<Real>(), b.trim().parse::<Real>()) {
                (Ok(x), Ok(bid)) => {
                    grid.push(x);
                    bids.push(bid);
                }
                _ if row == 0 => continue, // header
                _ => {
                    return Err(RawStrategyError::Csv {
                        row: row + 1,
                        message: format!("expected two numeric columns, got {line:?}"),
                    })
                }
            }
        }
        Self::new(grid, bids)
    }
}

impl From<&MonotoneCurve> for RawStrategy {
    fn from(c: &MonotoneCurve) -> Self {
        RawStrategy::new(c.grid().to_vec(), c.values().to_vec())
            .expect("a monotone curve is a valid raw strategy")
    }
}

/// Sorts a strategy into a weakly increasing one via quantile rearrangement:
/// the bid at the top-q quantile of the bid distribution moves to the type at
/// the top-q quantile of the type distribution, so the bid distribution under
/// `f1` is unchanged and the follower's best response is preserved.
pub fn sort_strategy(raw: &RawStrategy, f1: &PiecewiseDensity) -> MonotoneCurve {
    let (lo, hi) = raw.domain();
    if raw.is_monotone() {
        // The rearrangement is the identity on sorted input; skip the
        // empirical quantile pass and keep the samples exact.
        let grid = build_grid(lo, hi, DEFAULT_GRID.max(raw.grid.len()), raw.grid());
        let values = grid.iter().map(|&x| raw.eval(x)).collect();
        return MonotoneCurve::new(grid, values, Interpolation::Linear)
            .expect("monotone samples form a monotone curve");
    }
    // Empirical bid distribution: cell midpoints weighted by type mass.
    let mut weighted: Vec<(Real, Real)> = Vec::with_capacity(SORT_SAMPLES);
    for i in 0..SORT_SAMPLES {
        let a = lo + (hi - lo) * i as Real / SORT_SAMPLES as Real;
        let b = lo + (hi - lo) * (i + 1) as Real / SORT_SAMPLES as Real;
        let w = f1.mass_between(a, b);
        if w > 0.0 {
            weighted.push((raw.eval(0.5 * (a + b)), w));
        }
    }
    weighted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut cum = 0.0;
    let cum_weights: Vec<Real> = weighted
        .iter()
        .map(|(_, w)| {
            cum += w;
            cum
        })
        .collect();
    let total = cum.max(1e-300);

    // Read the sorted strategy off the bid-quantile function at F1[x].
    let out_grid = build_grid(lo, hi, DEFAULT_GRID.max(raw.grid.len()), raw.grid());
    let values: Vec<Real> = out_grid
        .iter()
        .map(|&x| {
            let q = f1.cdf(x) * total;
            let idx = cum_weights.partition_point(|c| *c < q - 1e-15 * total);
            weighted[idx.min(weighted.len() - 1)].0
        })
        .collect();
    MonotoneCurve::new(out_grid, values, Interpolation::Linear)
        .expect("quantile rearrangement yields a monotone curve")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_linear_quarter_slope() {
        let c = MonotoneCurve::from_fn(0.0, 1.0, 101, &[], |x| x / 4.0).unwrap();
        assert!((c.eval(0.2).unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn eval_constant() {
        let c = MonotoneCurve::constant(0.0, 2.0, 0.7);
        assert_eq!(c.eval(1.3).unwrap(), 0.7);
    }

    #[test]
    fn left_step_is_left_continuous() {
        let c = MonotoneCurve::new(
            vec![0.0, 0.5, 1.0],
            vec![0.0, 0.0, 1.0],
            Interpolation::LeftStep,
        )
        .unwrap();
        assert_eq!(c.eval(0.5).unwrap(), 0.0);
        assert_eq!(c.eval(0.5 + 1e-9).unwrap(), 1.0);
        assert_eq!(c.eval(0.0).unwrap(), 0.0);
        assert_eq!(c.eval(1.0).unwrap(), 1.0);
    }

    #[test]
    fn eval_outside_domain_errors() {
        let c = MonotoneCurve::constant(0.0, 1.0, 0.0);
        assert!(matches!(c.eval(1.5), Err(CurveError::Domain { .. })));
    }

    #[test]
    fn upper_inverse_of_square_strategy() {
        // s(x) = x^2 / 2 on [0,1]; the inverse of t is sqrt(2t).
        let c = MonotoneCurve::from_fn(0.0, 1.0, 4001, &[], |x| x * x / 2.0).unwrap();
        assert!((c.upper_inverse(0.18) - 0.6).abs() < 1e-6);
        assert_eq!(c.upper_inverse(10.0), 1.0);
        assert_eq!(c.upper_inverse(-0.1), 0.0);
    }

    #[test]
    fn upper_inverse_takes_sup_over_flat_runs() {
        let c = MonotoneCurve::new(
            vec![0.0, 0.25, 0.75, 1.0],
            vec![0.0, 0.5, 0.5, 1.0],
            Interpolation::Linear,
        )
        .unwrap();
        assert!((c.upper_inverse(0.5) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn sort_preserves_monotone_input() {
        let f1 = PiecewiseDensity::uniform(0.0, 1.0);
        let raw = RawStrategy::from_fn(0.0, 1.0, 501, |x| x * x / 2.0);
        let sorted = sort_strategy(&raw, &f1);
        for i in 0..=50 {
            let x = i as Real / 50.0;
            assert!(
                (sorted.eval(x).unwrap() - x * x / 2.0).abs() < 2e-3,
                "sorted({x}) = {} vs {}",
                sorted.eval(x).unwrap(),
                x * x / 2.0
            );
        }
    }

    #[test]
    fn sort_reverses_decreasing_strategy() {
        let f1 = PiecewiseDensity::uniform(0.0, 1.0);
        let raw = RawStrategy::from_fn(0.0, 1.0, 501, |x| 1.0 - x);
        let sorted = sort_strategy(&raw, &f1);
        for i in 1..50 {
            let x = i as Real / 50.0;
            assert!((sorted.eval(x).unwrap() - x).abs() < 2e-3);
        }
    }

    #[test]
    fn sort_folds_vee_strategy() {
        // |x - 0.5| under uniform types has bid quantile q at bid q/2, so the
        // sorted strategy is x/2.
        let f1 = PiecewiseDensity::uniform(0.0, 1.0);
        let raw = RawStrategy::from_fn(0.0, 1.0, 501, |x| (x - 0.5).abs());
        let sorted = sort_strategy(&raw, &f1);
        for i in 1..50 {
            let x = i as Real / 50.0;
            assert!((sorted.eval(x).unwrap() - x / 2.0).abs() < 2e-3);
        }
    }

    #[test]
    fn csv_round_trip() {
        let c = MonotoneCurve::from_fn(0.0, 1.0, 11, &[], |x| x).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf, "bid").unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,bid\n"));
        let raw = RawStrategy::from_csv(&text).unwrap();
        assert_eq!(raw.grid().len(), 11);
        assert!(RawStrategy::from_csv("x,bid\n0.0,oops\n1.0,1.0").is_err());
    }

    #[test]
    fn jump_detection_flags_step() {
        let c = MonotoneCurve::from_fn(0.0, 1.0, 1001, &[], |x| {
            if x <= 0.6 { x * 0.1 } else { 0.5 + 0.1 * x }
        })
        .unwrap();
        let jumps = c.detect_jumps(10.0, 1e-3);
        assert_eq!(jumps.len(), 1);
        assert!((jumps[0] - 0.6).abs() < 2e-3);
    }

    proptest! {
        // Quantile rearrangement keeps the bid distribution: the type mass
        // bidding at most b matches between raw and sorted at grid resolution.
        #[test]
        fn sort_preserves_bid_distribution(
            seed_bids in proptest::collection::vec(0.0f64..1.0, 4..9),
            level in 0.05f64..0.95,
        ) {
            let f1 = PiecewiseDensity::uniform(0.0, 1.0);
            let n = seed_bids.len();
            let raw = RawStrategy::from_fn(0.0, 1.0, 801, |x| {
                // piecewise linear through the seed bids
                let pos = x * (n - 1) as Real;
                let i = (pos.floor() as usize).min(n - 2);
                let w = pos - i as Real;
                seed_bids[i] * (1.0 - w) + seed_bids[i + 1] * w
            });
            let sorted = sort_strategy(&raw, &f1);
            let measure_raw = {
                let m = 4000;
                (0..m).filter(|i| raw.eval((*i as Real + 0.5) / m as Real) <= level).count() as Real
                    / m as Real
            };
            let measure_sorted = {
                let m = 4000;
                (0..m)
                    .filter(|i| sorted.eval_clamped((*i as Real + 0.5) / m as Real) <= level)
                    .count() as Real
                    / m as Real
            };
            prop_assert!((measure_raw - measure_sorted).abs() < 5e-3,
                "raw {measure_raw} vs sorted {measure_sorted}");
        }

        // Output of the rearrangement is weakly increasing everywhere.
        #[test]
        fn sort_output_monotone(seed_bids in proptest::collection::vec(0.0f64..2.0, 3..8)) {
            let f1 = PiecewiseDensity::uniform(0.0, 1.0);
            let n = seed_bids.len();
            let raw = RawStrategy::from_fn(0.0, 1.0, 401, |x| {
                let pos = x * (n - 1) as Real;
                let i = (pos.floor() as usize).min(n - 2);
                let w = pos - i as Real;
                seed_bids[i] * (1.0 - w) + seed_bids[i + 1] * w
            });
            let sorted = sort_strategy(&raw, &f1);
            prop_assert!(sorted.values().windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
