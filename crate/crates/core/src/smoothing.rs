//! Equal-utility curves, the smoothing transform, and the two directions of
//! the correspondence between smoothed strategies and equal-bid functions.
//!
//! For follower type `y` with utility `u_B(y)`, the equal-utility curve at
//! leader type `x` is the unique bid `t` with
//! `u_B(y) = F1[x]*y - p^w(t)*F1[x] - p^p(t)`; against a leader playing that
//! curve the follower is indifferent among all bids. The smoothed strategy is
//! the upper envelope of these curves over `y in [0, b2]`. The equal-bid
//! function `g` maps a leader type to the follower type bidding the same,
//! and is recovered from the left-derivative identity
//! `f1(x) * g(x) = d/dx [p^w(s*(x)) * F1[x] + p^p(s*(x))]`; the reverse map
//! solves the same identity in integrated form, which makes the pair a
//! bijection between smoothed strategies with `s*(a1) = 0` and
//! left-continuous weakly increasing `g`.

use crate::auction::PaymentRule;
use crate::follower::{response_profile, CommitmentProblem, ResponseProfile};
use crate::numerics::golden_max;
use crate::strategy::{build_grid, Interpolation, MonotoneCurve, DEFAULT_GRID};
use crate::Real;
use rayon::prelude::*;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SmoothingError {
    #[error("equal-utility curves are defined only above the leader support ({x} <= {a1})")]
    BelowSupport { x: Real, a1: Real },
    #[error("equal-bid values must lie in [0, {b2}], found {value}")]
    LevelOutOfRange { value: Real, b2: Real },
    #[error("equal-bid cuts must be strictly increasing inside the leader support")]
    BadCuts,
}

/// Solves `b + a * p^w(t) + p^p(t) = 0` for `t`, segment by segment.
///
/// For `a > 0` the left side is strictly increasing in `t`, so the solution
/// is unique; it can be negative, in which case the payment functions are
/// extended linearly below zero with their first slopes.
pub fn solve_q(rule: &PaymentRule, a: Real, b: Real) -> Real {
    QSolver::new(rule).solve(a, b)
}

/// Preassembled knot table for repeated [`solve_q`] calls.
pub(crate) struct QSolver {
    knots: Vec<Real>,
    pw: Vec<Real>,
    pp: Vec<Real>,
    ws: Vec<Real>,
    ps: Vec<Real>,
}

impl QSolver {
    pub(crate) fn new(rule: &PaymentRule) -> Self {
        let knots = rule.knots();
        let pw = knots.iter().map(|&k| rule.p_winning(k)).collect();
        let pp = knots.iter().map(|&k| rule.p_participation(k)).collect();
        let ws = knots.iter().map(|&k| rule.winning().slope_right(k)).collect();
        let ps = knots.iter().map(|&k| rule.participation().slope_right(k)).collect();
        Self { knots, pw, pp, ws, ps }
    }

    pub(crate) fn solve(&self, a: Real, b: Real) -> Real {
        assert!(a > 0.0, "solve_q needs a positive winning probability");
        let target = -b;
        let phi0 = a * self.pw[0] + self.pp[0];
        if target < phi0 {
            let slope = a * self.ws[0] + self.ps[0];
            debug_assert!(slope > 0.0);
            return (target - phi0) / slope;
        }
        let mut seg = self.knots.len() - 1;
        for k in 1..self.knots.len() {
            if a * self.pw[k] + self.pp[k] >= target {
                seg = k - 1;
                break;
            }
        }
        let phi = a * self.pw[seg] + self.pp[seg];
        let slope = a * self.ws[seg] + self.ps[seg];
        debug_assert!(slope > 0.0, "valid rules have strictly increasing a*p^w + p^p");
        self.knots[seg] + (target - phi) / slope
    }
}

/// The bid that keeps follower type `y` (whose utility is `u_b_y`) exactly
/// indifferent at leader type `x`.
pub fn eu_point(
    p: &CommitmentProblem,
    u_b_y: Real,
    y: Real,
    x: Real,
) -> Result<Real, SmoothingError> {
    let (a1, _) = p.leader_support();
    let f = p.f1.cdf(x);
    if x <= a1 || f <= 0.0 {
        return Err(SmoothingError::BelowSupport { x, a1 });
    }
    Ok(solve_q(&p.rule, f, u_b_y - y * f))
}

/// One sampled equal-utility curve, exportable as `x,t` CSV. Weakly
/// increasing wherever the bid is nonnegative; the negative reaches (under
/// the linear rule extension) are kept for plotting but not wrapped in a
/// monotone container.
#[derive(Debug, Clone)]
pub struct EqualUtilityCurve {
    pub follower_type: Real,
    pub utility: Real,
    pub xs: Vec<Real>,
    pub bids: Vec<Real>,
}

impl EqualUtilityCurve {
    /// Samples the curve of follower type `y` on `n` points of the leader
    /// support (excluding the lower endpoint, where it is undefined).
    pub fn sample(p: &CommitmentProblem, s: &MonotoneCurve, y: Real, n: usize) -> Self {
        let (a1, a2) = p.leader_support();
        let u = crate::follower::follower_utility(p, s, y);
        let lo = a1 + (a2 - a1) * 1e-6;
        let xs = build_grid(lo, a2, n.max(2), p.f1.breakpoints());
        let solver = QSolver::new(&p.rule);
        let bids: Vec<Real> =
            xs.iter().map(|&x| solver.solve(p.f1.cdf(x), u - y * p.f1.cdf(x))).collect();
        Self { follower_type: y, utility: u, xs, bids }
    }

    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "x,t")?;
        for (x, t) in self.xs.iter().zip(&self.bids) {
            writeln!(w, "{x},{t}")?;
        }
        Ok(())
    }
}

/// Smooths a weakly increasing strategy into the upper envelope of the
/// equal-utility curves it induces. The output is continuous, weakly
/// increasing, never exceeds the input, and leaves the follower's utility
/// unchanged.
pub fn smooth(p: &CommitmentProblem, s: &MonotoneCurve) -> MonotoneCurve {
    let profile = response_profile(p, s, crate::follower::PROFILE_GRID);
    smooth_with_profile(p, s, &profile)
}

/// [`smooth`] against a precomputed response profile.
pub fn smooth_with_profile(
    p: &CommitmentProblem,
    s: &MonotoneCurve,
    profile: &ResponseProfile,
) -> MonotoneCurve {
    let (a1, a2) = p.leader_support();
    let mut extra: Vec<Real> = p.f1.breakpoints().to_vec();
    extra.extend_from_slice(s.grid());
    let grid = build_grid(a1, a2, DEFAULT_GRID, &extra);
    let solver = QSolver::new(&p.rule);
    let ys = &profile.ys;
    let us = &profile.utilities;

    let mut values: Vec<Real> = grid
        .par_iter()
        .map(|&x| {
            if x <= a1 {
                return 0.0; // patched below from the first interior value
            }
            let f = p.f1.cdf(x);
            let mut best = Real::NEG_INFINITY;
            let mut best_j = 0;
            for j in 0..ys.len() {
                let t = solver.solve(f, us[j] - ys[j] * f);
                if t > best {
                    best = t;
                    best_j = j;
                }
            }
            // Local refinement between the neighbors of the grid argmax.
            let lo = ys[best_j.saturating_sub(1)];
            let hi = ys[(best_j + 1).min(ys.len() - 1)];
            if hi > lo {
                let (_, refined) =
                    golden_max(|y| solver.solve(f, profile.utility_at(y) - y * f), lo, hi, &p.tol);
                best = best.max(refined);
            }
            best
        })
        .collect();
    // The envelope extends continuously to a1; never above the original bid.
    values[0] = values[1].min(s.eval_clamped(a1)).max(0.0);
    MonotoneCurve::new(grid, values, Interpolation::Linear)
        .expect("upper envelope of weakly increasing curves is weakly increasing")
}

/// A left-continuous weakly increasing equal-bid function on the leader
/// support, with values in `[0, b2]`. Optimizer-produced functions are exact
/// step curves; [`equal_bid`] extractions are fine polylines with flagged
/// jump abscissae.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EqualBid {
    pub curve: MonotoneCurve,
    /// Grid abscissae where the extraction detected a discontinuity.
    pub jumps: Vec<Real>,
}

impl EqualBid {
    pub fn new(curve: MonotoneCurve, jumps: Vec<Real>, b2: Real) -> Result<Self, SmoothingError> {
        let slack = 1e-9 * b2.max(1.0);
        if curve.min_value() < -slack || curve.max_value() > b2 + slack {
            let value = if curve.min_value() < -slack {
                curve.min_value()
            } else {
                curve.max_value()
            };
            return Err(SmoothingError::LevelOutOfRange { value, b2 });
        }
        Ok(Self { curve, jumps })
    }

    /// Exact step function: `levels[i]` on `(cuts[i-1], cuts[i]]` with the
    /// outer cuts pinned to the leader support.
    pub fn step(
        a1: Real,
        a2: Real,
        cuts: &[Real],
        levels: &[Real],
        b2: Real,
    ) -> Result<Self, SmoothingError> {
        assert_eq!(cuts.len() + 1, levels.len(), "need one level per segment");
        let mut grid = Vec::with_capacity(cuts.len() + 2);
        grid.push(a1);
        for &c in cuts {
            if c <= *grid.last().unwrap() || c >= a2 {
                return Err(SmoothingError::BadCuts);
            }
            grid.push(c);
        }
        grid.push(a2);
        let mut values = Vec::with_capacity(levels.len() + 1);
        values.push(levels[0]);
        values.extend_from_slice(levels);
        let curve = MonotoneCurve::new(grid, values, Interpolation::LeftStep)
            .map_err(|_| SmoothingError::BadCuts)?;
        let jumps = cuts.to_vec();
        Self::new(curve, jumps, b2)
    }

    pub fn eval(&self, x: Real) -> Real {
        self.curve.eval_clamped(x)
    }

    pub fn domain(&self) -> (Real, Real) {
        self.curve.domain()
    }
}

/// Extracts the equal-bid function from a smoothed strategy via backward
/// differences of `H(x) = p^w(s*(x)) * F1[x] + p^p(s*(x))` against `F1`,
/// with one-cell linear extrapolation where the curve is smooth (so linear
/// pieces of `g` come out exact) and raw differences at detected jumps.
pub fn equal_bid(p: &CommitmentProblem, s_star: &MonotoneCurve) -> EqualBid {
    let (a1, a2) = p.leader_support();
    let (_, b2) = p.follower_support();
    let mut extra: Vec<Real> = p.f1.breakpoints().to_vec();
    extra.extend_from_slice(s_star.grid());
    let grid = build_grid(a1, a2, DEFAULT_GRID, &extra);
    let n = grid.len();

    let h: Vec<Real> = grid
        .iter()
        .map(|&x| {
            let bid = s_star.eval_clamped(x);
            p.rule.p_winning(bid) * p.f1.cdf(x) + p.rule.p_participation(bid)
        })
        .collect();
    let cdf: Vec<Real> = grid.iter().map(|&x| p.f1.cdf(x)).collect();

    // d[i] approximates g at the midpoint of cell (grid[i-1], grid[i]].
    let mut d = vec![0.0; n];
    for i in 1..n {
        let df = cdf[i] - cdf[i - 1];
        d[i] = if df > 0.0 { (h[i] - h[i - 1]) / df } else { d[i - 1] };
    }
    d[0] = d[1.min(n - 1)];

    let floor = 1e-3 * b2.max(1.0);
    let is_jump = |d: &[Real], i: usize| -> bool {
        // change between cell i-1 and cell i
        if i < 2 || i >= n {
            return false;
        }
        let step = (d[i] - d[i - 1]).abs();
        let before = if i >= 3 { (d[i - 1] - d[i - 2]).abs() } else { 0.0 };
        let after = if i + 1 < n { (d[i + 1] - d[i]).abs() } else { 0.0 };
        step > (8.0 * before.max(after)).max(floor)
    };

    let mut jumps = Vec::new();
    let mut values = vec![0.0; n];
    for i in 1..n {
        let jump_here = is_jump(&d, i);
        values[i] = if i >= 2 && !jump_here { d[i] + 0.5 * (d[i] - d[i - 1]) } else { d[i] };
        if jump_here {
            jumps.push(grid[i - 1]);
            jumps.push(grid[i]);
            if i + 1 < n {
                jumps.push(grid[i + 1]);
            }
        }
        values[i] = values[i].clamp(0.0, b2);
    }
    values[0] = values[1];
    for i in 1..n {
        if values[i] < values[i - 1] {
            values[i] = values[i - 1];
        }
    }
    jumps.dedup();
    let curve = MonotoneCurve::new(grid, values, Interpolation::Linear)
        .expect("clamped cummax output is monotone");
    EqualBid { curve, jumps }
}

/// Cumulative integral `I(x) = integral of f1 * g from a1 to x`, exact for
/// step and piecewise-linear `g` against the piecewise-constant density.
pub(crate) struct BidMassTable {
    pub xs: Vec<Real>,
    pub cum: Vec<Real>,
    g_left: Vec<Real>,
    g_right: Vec<Real>,
    dens: Vec<Real>,
}

impl BidMassTable {
    pub(crate) fn new(p: &CommitmentProblem, g: &EqualBid, extra: &[Real]) -> Self {
        let (a1, a2) = p.leader_support();
        let mut pts: Vec<Real> = p.f1.breakpoints().to_vec();
        pts.extend_from_slice(g.curve.grid());
        pts.extend_from_slice(extra);
        let n = match g.curve.interpolation() {
            Interpolation::LeftStep => 2, // cells are exact; no refinement needed
            Interpolation::Linear => DEFAULT_GRID,
        };
        let xs = build_grid(a1, a2, n, &pts);
        let m = xs.len() - 1;
        let mut g_left = vec![0.0; m];
        let mut g_right = vec![0.0; m];
        let mut dens = vec![0.0; m];
        for i in 0..m {
            let (lo, hi) = (xs[i], xs[i + 1]);
            dens[i] = p.f1.density(0.5 * (lo + hi));
            match g.curve.interpolation() {
                Interpolation::LeftStep => {
                    let v = g.curve.eval_clamped(hi);
                    g_left[i] = v;
                    g_right[i] = v;
                }
                Interpolation::Linear => {
                    g_left[i] = g.curve.eval_clamped(lo);
                    g_right[i] = g.curve.eval_clamped(hi);
                }
            }
        }
        let mut cum = Vec::with_capacity(xs.len());
        cum.push(0.0);
        for i in 0..m {
            let dx = xs[i + 1] - xs[i];
            cum.push(cum[i] + dens[i] * 0.5 * (g_left[i] + g_right[i]) * dx);
        }
        Self { xs, cum, g_left, g_right, dens }
    }

    /// I(x) at an arbitrary point, exact within each cell.
    pub(crate) fn at(&self, x: Real) -> Real {
        let n = self.xs.len();
        let x = x.clamp(self.xs[0], self.xs[n - 1]);
        let i = match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.cum[i],
            Err(i) => i - 1,
        };
        let dx = self.xs[i + 1] - self.xs[i];
        let xi = x - self.xs[i];
        let g_at = self.g_left[i] + (self.g_right[i] - self.g_left[i]) * xi / dx;
        self.cum[i] + self.dens[i] * 0.5 * (self.g_left[i] + g_at) * xi
    }
}

/// Rebuilds the smoothed strategy from its equal-bid function by solving
/// `integral(f1 * g) = p^w(s*) * F1 + p^p(s*)` pointwise, with `s*(a1) = 0`.
/// First-price reduces to `s*(x) = I(x) / F1[x]`, all-pay to `s*(x) = I(x)`.
pub fn reconstruct(p: &CommitmentProblem, g: &EqualBid) -> MonotoneCurve {
    let table = BidMassTable::new(p, g, &[]);
    let (a1, a2) = p.leader_support();
    let grid = build_grid(a1, a2, DEFAULT_GRID, &table.xs);
    let solver = QSolver::new(&p.rule);
    let values: Vec<Real> = grid
        .iter()
        .map(|&x| {
            let f = p.f1.cdf(x);
            if x <= a1 || f <= 0.0 {
                0.0
            } else {
                solver.solve(f, -table.at(x))
            }
        })
        .collect();
    MonotoneCurve::new(grid, values, Interpolation::Linear)
        .expect("reconstruction of a monotone g is monotone")
}
