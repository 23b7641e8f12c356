//! Independent verifiers: a discretized replay of the auction, cut-point
//! sweeps, and seeded perturbation audits.
//!
//! The brute-force game discretizes leader types, follower types and bids;
//! the follower picks her exact utility maximizer over the bid grid (lowest
//! bid on ties), ties in the auction go to the follower, and the leader's
//! expected utility is a weighted sum over type cells. That path depends
//! only on CDF queries and the payment rule, so its agreement with the
//! analytic objective is genuine cross-validation. The sweep, by contrast,
//! scans the analytic objective over two-piece cut points to adjudicate
//! cut-point equations.

use crate::follower::CommitmentProblem;
use crate::smoothing::EqualBid;
use crate::strategy::{MonotoneCurve, RawStrategy};
use crate::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

/// Grid sizes of the discretized game. Default 2000 cells per axis keeps a
/// single evaluation around a few milliseconds while resolving the reference
/// values to ~1e-3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub leader_types: usize,
    pub follower_types: usize,
    pub bids: usize,
    /// Upper end of the bid grid; at least the highest relevant bid.
    pub bid_ceiling: Real,
}

impl GridSpec {
    pub fn with_ceiling(n: usize, k: usize, m: usize, bid_ceiling: Real) -> Self {
        Self {
            leader_types: n.max(2),
            follower_types: k.max(2),
            bids: m.max(2),
            bid_ceiling,
        }
    }

    /// Default 2000-cell grids with the ceiling covering both the follower
    /// range and the strategy's own bids.
    pub fn default_for(p: &CommitmentProblem, s: &MonotoneCurve) -> Self {
        let (_, b2) = p.follower_support();
        Self::with_ceiling(2000, 2000, 2000, b2.max(s.max_value()).max(1e-9))
    }

    /// Coarsest cell size across the three axes, the scale of the oracle's
    /// discretization error.
    pub fn resolution(&self, p: &CommitmentProblem) -> Real {
        let (a1, a2) = p.leader_support();
        let (b1, b2) = p.follower_support();
        ((a2 - a1) / self.leader_types as Real)
            .max((b2 - b1) / self.follower_types as Real)
            .max(self.bid_ceiling / self.bids as Real)
    }
}

/// Leader type cells: midpoints weighted by exact distribution mass.
fn leader_cells(p: &CommitmentProblem, n: usize) -> Vec<(Real, Real)> {
    let (a1, a2) = p.leader_support();
    (0..n)
        .map(|i| {
            let lo = a1 + (a2 - a1) * i as Real / n as Real;
            let hi = a1 + (a2 - a1) * (i + 1) as Real / n as Real;
            (0.5 * (lo + hi), p.f1.mass_between(lo, hi))
        })
        .collect()
}

fn follower_cells(p: &CommitmentProblem, k: usize) -> Vec<(Real, Real)> {
    let (b1, b2) = p.follower_support();
    (0..k)
        .map(|i| {
            let lo = b1 + (b2 - b1) * i as Real / k as Real;
            let hi = b1 + (b2 - b1) * (i + 1) as Real / k as Real;
            (0.5 * (lo + hi), p.f2.mass_between(lo, hi))
        })
        .collect()
}

/// The follower's grid best response: for each follower cell, the *lowest*
/// bid maximizing her exact utility against the leader's bid distribution.
/// The candidate set is the uniform bid grid merged with the leader's own
/// bid levels: ties in the auction go to the follower, so her continuum
/// optimum always sits on a leader level, and a grid that cannot express
/// exact ties would systematically handicap her.
fn grid_best_responses(
    p: &CommitmentProblem,
    leader_bids: &[(Real, Real)], // (bid, mass), sorted by bid
    followers: &[(Real, Real)],
    grid: &GridSpec,
) -> Vec<Real> {
    let m = grid.bids;
    let mut bid_levels: Vec<Real> =
        (0..=m).map(|j| grid.bid_ceiling * j as Real / m as Real).collect();
    bid_levels.extend(leader_bids.iter().map(|(b, _)| *b));
    bid_levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bid_levels.dedup();
    // P_B[bid]: follower wins the mass of leader cells with bid <= level.
    let mut cum = Vec::with_capacity(leader_bids.len() + 1);
    cum.push(0.0);
    for (_, w) in leader_bids {
        cum.push(cum.last().unwrap() + w);
    }
    let win_prob: Vec<Real> = bid_levels
        .iter()
        .map(|&b| {
            let idx = leader_bids.partition_point(|(bid, _)| *bid <= b);
            cum[idx]
        })
        .collect();
    let pw: Vec<Real> = bid_levels.iter().map(|&b| p.rule.p_winning(b)).collect();
    let pp: Vec<Real> = bid_levels.iter().map(|&b| p.rule.p_participation(b)).collect();

    followers
        .par_iter()
        .map(|&(y, _)| {
            let mut best = Real::NEG_INFINITY;
            let mut best_j = 0usize;
            for j in 0..bid_levels.len() {
                let u = (y - pw[j]) * win_prob[j] - pp[j];
                if u > best {
                    best = u;
                    best_j = j;
                }
            }
            bid_levels[best_j]
        })
        .collect()
}

/// Discretized leader utility against the best-responding follower.
pub fn brute_force_leader_utility(
    p: &CommitmentProblem,
    s: &MonotoneCurve,
    grid: &GridSpec,
) -> Real {
    brute_force_utility_of_bids(p, |x| s.eval_clamped(x), grid)
}

/// Same discretized game for a not-necessarily-monotone strategy (used to
/// compare a raw strategy against its rearrangement).
pub fn brute_force_raw_utility(p: &CommitmentProblem, s: &RawStrategy, grid: &GridSpec) -> Real {
    brute_force_utility_of_bids(p, |x| s.eval(x), grid)
}

fn brute_force_utility_of_bids(
    p: &CommitmentProblem,
    bid_of: impl Fn(Real) -> Real,
    grid: &GridSpec,
) -> Real {
    let leaders = leader_cells(p, grid.leader_types);
    let followers = follower_cells(p, grid.follower_types);
    let mut leader_bids: Vec<(Real, Real)> =
        leaders.iter().map(|&(x, w)| (bid_of(x), w)).collect();
    let sorted_bids = {
        leader_bids.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        leader_bids
    };
    let responses = grid_best_responses(p, &sorted_bids, &followers, grid);
    leader_utility_against_bids(p, &bid_of, &leaders, &followers, &responses)
}

/// Discretized leader utility when *both* sides play fixed strategies
/// (used for equilibrium baselines; no best-response computation).
pub fn fixed_pair_leader_utility(
    p: &CommitmentProblem,
    s_leader: &MonotoneCurve,
    s_follower: &MonotoneCurve,
    grid: &GridSpec,
) -> Real {
    let leaders = leader_cells(p, grid.leader_types);
    let followers = follower_cells(p, grid.follower_types);
    let responses: Vec<Real> =
        followers.iter().map(|&(y, _)| s_follower.eval_clamped(y)).collect();
    leader_utility_against_bids(p, &|x| s_leader.eval_clamped(x), &leaders, &followers, &responses)
}

fn leader_utility_against_bids(
    p: &CommitmentProblem,
    bid_of: &impl Fn(Real) -> Real,
    leaders: &[(Real, Real)],
    followers: &[(Real, Real)],
    responses: &[Real],
) -> Real {
    // Sort follower bids with their masses for P_A lookups.
    let mut resp: Vec<(Real, Real)> = responses
        .iter()
        .zip(followers)
        .map(|(&b, &(_, w))| (b, w))
        .collect();
    resp.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut cum = Vec::with_capacity(resp.len() + 1);
    cum.push(0.0);
    for (_, w) in &resp {
        cum.push(cum.last().unwrap() + w);
    }
    leaders
        .iter()
        .map(|&(x, w)| {
            let bid = bid_of(x);
            // strict: the leader only beats follower bids strictly below his
            let idx = resp.partition_point(|(b, _)| *b < bid);
            let p_win = cum[idx];
            w * ((x - p.rule.p_winning(bid)) * p_win - p.rule.p_participation(bid))
        })
        .sum()
}

/// Winning probability of a leader type as measured by the grid oracle,
/// together with the follower mass bidding within quantization distance of
/// the leader's bid. That boundary mass is unresolvable at grid scale (the
/// tie rule decides it), so identity checks should allow for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WinProbSample {
    pub prob: Real,
    pub boundary_mass: Real,
}

/// Oracle-measured winning probability of leader types `xs` (mass of
/// follower cells whose grid best response falls strictly below the leader's
/// bid, plus the mass within three bid-grid steps of it).
pub fn brute_force_win_prob(
    p: &CommitmentProblem,
    s: &MonotoneCurve,
    grid: &GridSpec,
    xs: &[Real],
) -> Vec<WinProbSample> {
    let leaders = leader_cells(p, grid.leader_types);
    let followers = follower_cells(p, grid.follower_types);
    let mut leader_bids: Vec<(Real, Real)> =
        leaders.iter().map(|&(x, w)| (s.eval_clamped(x), w)).collect();
    leader_bids.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let responses = grid_best_responses(p, &leader_bids, &followers, grid);
    let mut resp: Vec<(Real, Real)> = responses
        .iter()
        .zip(&followers)
        .map(|(&b, &(_, w))| (b, w))
        .collect();
    resp.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut cum = Vec::with_capacity(resp.len() + 1);
    cum.push(0.0);
    for (_, w) in &resp {
        cum.push(cum.last().unwrap() + w);
    }
    let window = 3.0 * grid.bid_ceiling / grid.bids as Real;
    xs.iter()
        .map(|&x| {
            let bid = s.eval_clamped(x);
            let idx = resp.partition_point(|(b, _)| *b < bid);
            let lo = resp.partition_point(|(b, _)| *b < bid - window);
            let hi = resp.partition_point(|(b, _)| *b <= bid + window);
            WinProbSample { prob: cum[idx], boundary_mass: cum[hi] - cum[lo] }
        })
        .collect()
}

/// Utility of every two-piece commitment with cut `t` in `t_grid`, plus the
/// maximizing grid point. Adjudicates cut-point equations independently of
/// any root solving.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub argmax: Real,
    pub max_utility: Real,
    pub curve: Vec<(Real, Real)>,
}

impl SweepResult {
    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "t,utility")?;
        for (t, u) in &self.curve {
            writeln!(w, "{t},{u}")?;
        }
        Ok(())
    }

    /// True if the curve rises to a single peak and falls afterwards, up to
    /// `slack` of numerical wiggle.
    pub fn is_single_peaked(&self, slack: Real) -> bool {
        let peak = self
            .curve
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        let rising_ok = self.curve[..=peak].windows(2).all(|w| w[1].1 >= w[0].1 - slack);
        let falling_ok = self.curve[peak..].windows(2).all(|w| w[1].1 <= w[0].1 + slack);
        rising_ok && falling_ok
    }
}

/// Evaluates the analytic objective of the two-piece `g` (0 below `t`, `b2`
/// above) at every cut in `t_grid`.
pub fn sweep_cut_point(p: &CommitmentProblem, t_grid: &[Real]) -> SweepResult {
    let (a1, a2) = p.leader_support();
    let (_, b2) = p.follower_support();
    let curve: Vec<(Real, Real)> = t_grid
        .par_iter()
        .filter(|&&t| t > a1 && t < a2)
        .map(|&t| {
            let g = EqualBid::step(a1, a2, &[t], &[0.0, b2], b2).expect("two-piece step");
            (t, crate::optimizer::leader_utility(p, &g))
        })
        .collect();
    let (argmax, max_utility) = curve
        .iter()
        .copied()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap_or((a1, 0.0));
    SweepResult { argmax, max_utility, curve }
}

/// Uniformly spaced sweep grid over the open leader support.
pub fn sweep_grid(p: &CommitmentProblem, n: usize) -> Vec<Real> {
    let (a1, a2) = p.leader_support();
    let n = n.max(2);
    (1..n).map(|i| a1 + (a2 - a1) * i as Real / n as Real).collect()
}

/// One perturbation trial that improved on the base utility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationGain {
    pub trial: u64,
    pub gain: Real,
    pub description: String,
}

/// Report of a seeded random-perturbation audit of a solution's equal-bid
/// function. `max_gain` at or below the audit threshold certifies local
/// optimality at the evaluation accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub seed: u64,
    pub trials: u64,
    pub base_utility: Real,
    pub max_gain: Real,
    pub best_improvement: Option<PerturbationGain>,
}

/// Random monotone perturbations of a step equal-bid function: jitter a cut,
/// jitter a level (magnitude up to 5% of the relevant span), or split a
/// segment. Deterministic in `seed`.
pub fn perturbation_audit(
    p: &CommitmentProblem,
    g: &EqualBid,
    base_utility: Real,
    trials: u64,
    seed: u64,
) -> AuditReport {
    let (a1, a2) = p.leader_support();
    let (_, b2) = p.follower_support();
    let span = a2 - a1;
    let (cuts, levels) = step_form(g);

    let results: Vec<Option<PerturbationGain>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial.wrapping_mul(0x9e37)));
            let mut cuts = cuts.clone();
            let mut levels = levels.clone();
            let description;
            match rng.random_range(0..3u8) {
                0 if !cuts.is_empty() => {
                    let j = rng.random_range(0..cuts.len());
                    let delta = (rng.random::<Real>() - 0.5) * 0.1 * span;
                    let lo = if j == 0 { a1 } else { cuts[j - 1] };
                    let hi = if j + 1 == cuts.len() { a2 } else { cuts[j + 1] };
                    cuts[j] = (cuts[j] + delta)
                        .clamp(lo + 1e-6 * span, hi - 1e-6 * span);
                    description = format!("moved cut {j} to {:.6}", cuts[j]);
                }
                1 => {
                    let j = rng.random_range(0..levels.len());
                    let delta = (rng.random::<Real>() - 0.5) * 0.1 * b2;
                    let lo = if j == 0 { 0.0 } else { levels[j - 1] };
                    let hi = if j + 1 == levels.len() { b2 } else { levels[j + 1] };
                    levels[j] = (levels[j] + delta).clamp(lo, hi);
                    description = format!("moved level {j} to {:.6}", levels[j]);
                }
                _ => {
                    // split a random segment at a random point
                    let seg = rng.random_range(0..levels.len());
                    let lo = if seg == 0 { a1 } else { cuts[seg - 1] };
                    let hi = if seg == cuts.len() { a2 } else { cuts[seg] };
                    let c = lo + (0.25 + 0.5 * rng.random::<Real>()) * (hi - lo);
                    if c <= lo + 1e-9 * span || c >= hi - 1e-9 * span {
                        return None;
                    }
                    let level_lo = levels[seg];
                    let level_hi = if seg + 1 == levels.len() { b2 } else { levels[seg + 1] };
                    let new_level =
                        (level_lo + (level_hi - level_lo) * rng.random::<Real>()).min(b2);
                    cuts.insert(seg, c);
                    levels.insert(seg + 1, new_level.max(level_lo));
                    description =
                        format!("split segment {seg} at {:.6} with level {:.6}", c, new_level);
                }
            }
            let trial_g = EqualBid::step(a1, a2, &cuts, &levels, b2).ok()?;
            let u = crate::optimizer::leader_utility(p, &trial_g);
            let gain = u - base_utility;
            if gain > 0.0 {
                Some(PerturbationGain { trial, gain, description })
            } else {
                None
            }
        })
        .collect();

    let best_improvement = results
        .into_iter()
        .flatten()
        .max_by(|a, b| a.gain.partial_cmp(&b.gain).unwrap());
    AuditReport {
        seed,
        trials,
        base_utility,
        max_gain: best_improvement.as_ref().map_or(0.0, |g| g.gain),
        best_improvement,
    }
}

/// Cuts and levels of a step-mode equal-bid function (merging repeated
/// levels); polyline functions are snapped to their grid steps.
fn step_form(g: &EqualBid) -> (Vec<Real>, Vec<Real>) {
    let grid = g.curve.grid();
    let values = g.curve.values();
    let mut cuts = Vec::new();
    let mut levels = vec![values[1.min(values.len() - 1)]];
    for i in 1..grid.len() {
        let v = values[i];
        let last = *levels.last().unwrap();
        if v > last + 1e-12 {
            cuts.push(grid[i - 1]);
            levels.push(v);
        }
    }
    (cuts, levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::PaymentRule;
    use crate::distributions::PiecewiseDensity;
    use crate::testutil;

    fn uniform_fp() -> CommitmentProblem {
        CommitmentProblem::new(
            PiecewiseDensity::uniform(0.0, 1.0),
            PiecewiseDensity::uniform(0.0, 1.0),
            PaymentRule::first_price(),
        )
        .unwrap()
    }

    #[test]
    fn example_commitment_value() {
        let p = uniform_fp();
        let s = MonotoneCurve::from_fn(0.0, 1.0, 4001, &[], |x| x * x / 2.0).unwrap();
        let grid = GridSpec::default_for(&p, &s);
        let u = brute_force_leader_utility(&p, &s, &grid);
        let expected = testutil::example1_commitment_value();
        assert!((u - expected).abs() < 2e-3, "{u} vs {expected}");
        assert!((u - 0.2029).abs() < 2e-3);
    }

    #[test]
    fn equilibrium_baseline_value() {
        let p = uniform_fp();
        let half_leader = MonotoneCurve::from_fn(0.0, 1.0, 101, &[], |x| x / 2.0).unwrap();
        let half_follower = MonotoneCurve::from_fn(0.0, 1.0, 101, &[], |y| y / 2.0).unwrap();
        let grid = GridSpec::default_for(&p, &half_leader);
        let u = fixed_pair_leader_utility(&p, &half_leader, &half_follower, &grid);
        assert!((u - 1.0 / 6.0).abs() < 2e-3, "{u}");
    }

    #[test]
    fn zero_strategy_never_wins() {
        let p = uniform_fp();
        let s = MonotoneCurve::constant(0.0, 1.0, 0.0);
        let grid = GridSpec::with_ceiling(500, 500, 500, 1.0);
        assert_eq!(brute_force_leader_utility(&p, &s, &grid), 0.0);
    }

    #[test]
    fn sweep_finds_first_price_cut() {
        let p = uniform_fp();
        let sweep = sweep_cut_point(&p, &sweep_grid(&p, 500));
        assert!((sweep.argmax - testutil::omega()).abs() < 3e-3, "argmax {}", sweep.argmax);
        assert!(sweep.is_single_peaked(1e-7));
    }

    #[test]
    fn sweep_finds_all_pay_cut() {
        let p = CommitmentProblem::new(
            PiecewiseDensity::uniform(0.0, 1.0),
            PiecewiseDensity::uniform(0.0, 1.0),
            PaymentRule::all_pay(),
        )
        .unwrap();
        let sweep = sweep_cut_point(&p, &sweep_grid(&p, 500));
        assert!((sweep.argmax - 0.5).abs() < 3e-3);
        assert!(sweep.is_single_peaked(1e-7));
    }

    #[test]
    fn audit_accepts_optimum_and_rejects_zero() {
        let p = uniform_fp();
        let t0 = testutil::omega();
        let g = EqualBid::step(0.0, 1.0, &[t0], &[0.0, 1.0], 1.0).unwrap();
        let base = crate::optimizer::leader_utility(&p, &g);
        let report = perturbation_audit(&p, &g, base, 200, 7);
        assert!(report.max_gain <= 1e-4, "gain {}", report.max_gain);

        let g0 = EqualBid::step(0.0, 1.0, &[], &[0.0], 1.0).unwrap();
        let report = perturbation_audit(&p, &g0, 0.0, 200, 7);
        assert!(report.max_gain > 1e-3, "zero commitment should be improvable");
    }

    #[test]
    fn brute_force_agrees_with_analytic_objective() {
        // For a smoothed strategy, the discretized game and the equal-bid
        // objective are two independent routes to the same utility.
        let p = uniform_fp();
        let s = MonotoneCurve::from_fn(0.0, 1.0, 4001, &[0.4], |x| {
            if x <= 0.4 { x / 4.0 } else { x - 0.3 }
        })
        .unwrap();
        let s_star = crate::smoothing::smooth(&p, &s);
        let g = crate::smoothing::equal_bid(&p, &s_star);
        let analytic = crate::optimizer::leader_utility(&p, &g);
        let grid = GridSpec::default_for(&p, &s_star);
        let brute = brute_force_leader_utility(&p, &s_star, &grid);
        let rho = grid.resolution(&p);
        assert!(
            (brute - analytic).abs() <= 3.0 * rho,
            "brute {brute} vs analytic {analytic} (rho {rho})"
        );
    }

    #[test]
    fn sorting_weakly_improves_oracle_utility() {
        // quantile rearrangement keeps the bid distribution and reallocates
        // wins toward high types
        let p = uniform_fp();
        let grid = GridSpec::with_ceiling(1500, 1500, 1500, 1.0);
        let rho = grid.resolution(&p);
        for seed in 0..5u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let coeffs: Vec<Real> = (0..4).map(|_| rng.random::<Real>()).collect();
            let raw = crate::strategy::RawStrategy::from_fn(0.0, 1.0, 801, |x| {
                0.3 * (coeffs[0] + coeffs[1] * ((4.0 + 4.0 * coeffs[2]) * x + coeffs[3]).sin().abs())
            });
            let sorted = crate::strategy::sort_strategy(&raw, &p.f1);
            let u_sorted = brute_force_leader_utility(&p, &sorted, &grid);
            let u_raw = brute_force_raw_utility(&p, &raw, &grid);
            assert!(
                u_sorted >= u_raw - 3.0 * rho,
                "seed {seed}: sorted {u_sorted} < raw {u_raw}"
            );
        }
    }

    #[test]
    fn grid_convergence_is_first_order() {
        let p = uniform_fp();
        let s = MonotoneCurve::from_fn(0.0, 1.0, 4001, &[], |x| x * x / 2.0).unwrap();
        let u = |n: usize| {
            brute_force_leader_utility(&p, &s, &GridSpec::with_ceiling(n, n, n, 1.0))
        };
        let (u500, u1000, u2000) = (u(500), u(1000), u(2000));
        let change1 = (u1000 - u500).abs();
        let change2 = (u2000 - u1000).abs();
        assert!(change2 <= 2.0 * change1 + 1e-6, "{change1} then {change2}");
    }

    #[test]
    fn win_prob_matches_equal_bid_cdf() {
        let p = uniform_fp();
        let t0 = testutil::omega();
        let g = EqualBid::step(0.0, 1.0, &[t0], &[0.0, 1.0], 1.0).unwrap();
        let s = crate::smoothing::reconstruct(&p, &g);
        let grid = GridSpec::with_ceiling(2000, 2000, 2000, 1.0);
        let xs = vec![0.2, 0.4, 0.7, 0.9];
        let probs = brute_force_win_prob(&p, &s, &grid, &xs);
        for (&x, sample) in xs.iter().zip(&probs) {
            let expected = p.f2.cdf(g.eval(x));
            assert!(
                (sample.prob - expected).abs() < 5e-3 + sample.boundary_mass,
                "P_win({x}) = {} vs {expected}",
                sample.prob
            );
        }
    }
}
