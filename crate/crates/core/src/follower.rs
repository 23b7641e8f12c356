//! Follower best response against a committed monotone leader strategy.
//!
//! With a weakly increasing leader strategy, any bid strictly between two
//! leader bid levels is dominated by the lower level (same winning
//! probability, lower payment), so the follower's problem reduces to
//! maximizing the reparametrized utility
//! `(y - p^w(s(x))) * F1[x] - p^p(s(x))` over leader types `x`, together
//! with the always-available bid 0. Ties go to the follower, and among
//! equally good bids she plays the smallest.

use crate::auction::{PaymentRule, RuleViolation};
use crate::distributions::PiecewiseDensity;
use crate::numerics::{golden_max, Tolerance};
use crate::strategy::{build_grid, MonotoneCurve};
use crate::Real;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

/// Sample count of the follower-type grid in [`response_profile`].
pub const PROFILE_GRID: usize = 2001;

/// Minimum resolution of the leader-type scan inside the utility maximizer.
const SCAN_GRID: usize = 1025;

#[derive(Debug, Clone, Error)]
pub enum ProblemError {
    #[error("payment rule violates rank-and-bid assumptions: {0:?}")]
    InvalidRule(Vec<RuleViolation>),
    #[error(
        "only the standard tie conventions are implemented (ties to the follower, \
         smallest best response); alternative conventions yield the same optimum"
    )]
    UnsupportedTieBreaking,
}

/// Who wins an exact bid tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieWinner {
    #[default]
    Follower,
    Leader,
}

/// Which best response an indifferent follower plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndifferenceRule {
    #[default]
    SmallestBid,
    LargestBid,
}

/// Tie conventions of the auction, recorded explicitly. The defaults (ties
/// to the follower, smallest best response) are what every computation here
/// implements; the optimal commitment value is the same under the other
/// conventions, but those code paths do not exist, so non-default settings
/// are rejected at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TieBreaking {
    #[serde(default)]
    pub winner_on_tie: TieWinner,
    #[serde(default)]
    pub follower_indifference: IndifferenceRule,
}

/// Everything a solver needs: leader types `F1` on `[a1, a2]`, follower
/// types `F2` on `[b1, b2]`, the payment rule, tie conventions and numeric
/// tolerances.
#[derive(Debug, Clone)]
pub struct CommitmentProblem {
    pub f1: PiecewiseDensity,
    pub f2: PiecewiseDensity,
    pub rule: PaymentRule,
    pub ties: TieBreaking,
    pub tol: Tolerance<Real>,
}

impl CommitmentProblem {
    pub fn new(
        f1: PiecewiseDensity,
        f2: PiecewiseDensity,
        rule: PaymentRule,
    ) -> Result<Self, ProblemError> {
        let violations = rule.validate();
        if !violations.is_empty() {
            return Err(ProblemError::InvalidRule(violations));
        }
        Ok(Self { f1, f2, rule, ties: TieBreaking::default(), tol: Tolerance::default() })
    }

    pub fn with_tolerance(mut self, tol: Tolerance<Real>) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_tie_breaking(mut self, ties: TieBreaking) -> Result<Self, ProblemError> {
        if ties != TieBreaking::default() {
            return Err(ProblemError::UnsupportedTieBreaking);
        }
        self.ties = ties;
        Ok(self)
    }

    pub fn leader_support(&self) -> (Real, Real) {
        self.f1.support()
    }

    pub fn follower_support(&self) -> (Real, Real) {
        self.f2.support()
    }

    /// Non-fatal warnings surfaced in solver output. The closed-form theory
    /// assumes continuously differentiable payments, so kinked custom rules
    /// get flagged here rather than rejected.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.rule.has_kinks() {
            notes.push(
                "payment rule has interior kinks; stationarity uses one-sided slopes there"
                    .to_string(),
            );
        }
        notes
    }
}

/// B's winning probability when bidding `t` against the committed strategy:
/// she beats every leader type whose bid is at most `t` (ties go to her).
pub fn win_prob_follower(p: &CommitmentProblem, s: &MonotoneCurve, t: Real) -> Real {
    p.f1.cdf(s.upper_inverse(t))
}

/// Reusable evaluator for one `(problem, strategy)` pair: precomputes the
/// scan grid and the per-type payment terms so each follower type costs one
/// linear scan plus a local refinement.
pub(crate) struct Responder<'a> {
    p: &'a CommitmentProblem,
    s: &'a MonotoneCurve,
    xs: Vec<Real>,
    cdf: Vec<Real>,
    pw: Vec<Real>,
    pp: Vec<Real>,
    /// sup of the leader types bidding 0 (bid 0 ties and beats all of them).
    zero_bid_cutoff: Real,
    tie_eps: Real,
}

impl<'a> Responder<'a> {
    pub(crate) fn new(p: &'a CommitmentProblem, s: &'a MonotoneCurve) -> Self {
        let (a1, a2) = s.domain();
        let mut extra: Vec<Real> = s.grid().to_vec();
        extra.extend_from_slice(p.f1.breakpoints());
        let xs = build_grid(a1, a2, SCAN_GRID.max(s.grid().len()), &extra);
        let cdf: Vec<Real> = xs.iter().map(|&x| p.f1.cdf(x)).collect();
        let bids: Vec<Real> = xs.iter().map(|&x| s.eval_clamped(x)).collect();
        let pw: Vec<Real> = bids.iter().map(|&b| p.rule.p_winning(b)).collect();
        let pp: Vec<Real> = bids.iter().map(|&b| p.rule.p_participation(b)).collect();
        Self {
            p,
            s,
            xs,
            cdf,
            pw,
            pp,
            zero_bid_cutoff: s.upper_inverse(0.0),
            tie_eps: p.tol.abs_tol.max(1e-12),
        }
    }

    fn u_tilde(&self, y: Real, x: Real) -> Real {
        let bid = self.s.eval_clamped(x);
        (y - self.p.rule.p_winning(bid)) * self.p.f1.cdf(x) - self.p.rule.p_participation(bid)
    }

    /// Golden-section refinement over the cells adjacent to grid index `i`.
    fn refine(&self, y: Real, i: usize) -> (Real, Real) {
        let n = self.xs.len();
        let mut best = (self.xs[i], (y - self.pw[i]) * self.cdf[i] - self.pp[i]);
        if i > 0 {
            let (x, u) =
                golden_max(|x| self.u_tilde(y, x), self.xs[i - 1], self.xs[i], &self.p.tol);
            if u > best.1 {
                best = (x, u);
            }
        }
        if i + 1 < n {
            let (x, u) =
                golden_max(|x| self.u_tilde(y, x), self.xs[i], self.xs[i + 1], &self.p.tol);
            if u > best.1 {
                best = (x, u);
            }
        }
        best
    }

    /// (smallest best bid, utility, winning cutoff type) for follower type y.
    pub(crate) fn respond(&self, y: Real) -> (Real, Real, Real) {
        let mut best_u = Real::NEG_INFINITY;
        let mut best_i = 0usize;
        for (i, (&cdf, (&pw, &pp))) in
            self.cdf.iter().zip(self.pw.iter().zip(self.pp.iter())).enumerate()
        {
            let u = (y - pw) * cdf - pp;
            if u > best_u {
                best_u = u;
                best_i = i;
            }
        }
        let mut first_tie = best_i;
        for (i, (&cdf, (&pw, &pp))) in
            self.cdf.iter().zip(self.pw.iter().zip(self.pp.iter())).enumerate()
        {
            let u = (y - pw) * cdf - pp;
            if u >= best_u - self.tie_eps {
                first_tie = i;
                break;
            }
        }

        let (mut x_star, mut u_star) = self.refine(y, first_tie);
        if first_tie != best_i {
            let (x_g, u_g) = self.refine(y, best_i);
            if u_g > u_star + self.tie_eps {
                x_star = x_g;
                u_star = u_g;
            }
        }

        // Bid 0 is always available and is the smallest possible bid.
        let u_zero = y * self.p.f1.cdf(self.zero_bid_cutoff);
        let u_best = u_star.max(u_zero).max(0.0);
        if u_zero >= u_star - self.tie_eps {
            return (0.0, u_best, self.zero_bid_cutoff);
        }

        let bid = self.s.eval_clamped(x_star);
        let cutoff = self.s.upper_inverse(bid);
        (bid, u_best, cutoff)
    }
}

/// The largest expected utility follower type `y` can achieve against `s`.
pub fn follower_utility(p: &CommitmentProblem, s: &MonotoneCurve, y: Real) -> Real {
    Responder::new(p, s).respond(y).1
}

/// The smallest utility-maximizing bid of follower type `y` against `s`.
pub fn best_response(p: &CommitmentProblem, s: &MonotoneCurve, y: Real) -> Real {
    Responder::new(p, s).respond(y).0
}

/// Follower utility, best bid and winning cutoff over a type grid.
#[derive(Debug, Clone)]
pub struct ResponseProfile {
    pub ys: Vec<Real>,
    pub utilities: Vec<Real>,
    pub best_bids: Vec<Real>,
    pub win_cutoffs: Vec<Real>,
}

impl ResponseProfile {
    /// Linear interpolation of the utility curve; exact at grid points.
    pub fn utility_at(&self, y: Real) -> Real {
        let n = self.ys.len();
        let y = y.clamp(self.ys[0], self.ys[n - 1]);
        let i = match self.ys.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
            Ok(i) => return self.utilities[i],
            Err(i) => (i - 1).min(n - 2),
        };
        let w = (y - self.ys[i]) / (self.ys[i + 1] - self.ys[i]);
        self.utilities[i] + w * (self.utilities[i + 1] - self.utilities[i])
    }

    /// Four-column CSV: `y,u_b,best_bid,win_cutoff`.
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "y,u_b,best_bid,win_cutoff")?;
        for i in 0..self.ys.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.ys[i], self.utilities[i], self.best_bids[i], self.win_cutoffs[i]
            )?;
        }
        Ok(())
    }
}

/// Computes the response profile on a `n_y`-point follower-type grid over
/// `[0, b2]` (the utility extends down to 0 even when `b1 > 0`).
/// Evaluations are independent and run in parallel.
pub fn response_profile(p: &CommitmentProblem, s: &MonotoneCurve, n_y: usize) -> ResponseProfile {
    let (_, b2) = p.follower_support();
    let responder = Responder::new(p, s);
    let ys = build_grid(0.0, b2, n_y.max(2), p.f2.breakpoints());
    let rows: Vec<(Real, Real, Real)> = ys.par_iter().map(|&y| responder.respond(y)).collect();
    let mut utilities: Vec<Real> = rows.iter().map(|r| r.1).collect();
    // The exact curve is weakly increasing; flatten refinement noise.
    for i in 1..utilities.len() {
        if utilities[i] < utilities[i - 1] {
            utilities[i] = utilities[i - 1];
        }
    }
    ResponseProfile {
        ys,
        utilities,
        best_bids: rows.iter().map(|r| r.0).collect(),
        win_cutoffs: rows.iter().map(|r| r.2).collect(),
    }
}
