//! Leader-utility objective over equal-bid functions, the stationarity
//! function `h`, closed-form cut-point solvers for first-price (uniform
//! follower types) and all-pay auctions, and a general discretized step
//! search for everything else.
//!
//! The objective is
//! `u_A(g) = integral over [a1,a2] of {[x - p^w(s*(x))] F2[g(x)] - p^p(s*(x))} f1(x) dx`
//! with `s*` rebuilt from `g`. Eliminating the multiplier from the
//! variational conditions yields a function `h` whose sign pins the optimal
//! `g` to its bounds: `g = 0` where `h < 0`, `g = b2` where `h > 0`, so the
//! optimum is a step function with values in `{0} union [b1, b2]`.

use crate::follower::CommitmentProblem;
use crate::numerics::{find_root, integrate, integrate_split, scan_sign_changes, Tolerance};
use crate::smoothing::{reconstruct, BidMassTable, EqualBid, QSolver};
use crate::strategy::{Interpolation, MonotoneCurve};
use crate::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Random restarts of the general search.
const RESTARTS: usize = 16;

/// Grid the restart samples snap to.
const SNAP_GRID: usize = 2001;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("problem outside this solver's preconditions: {reason}")]
    UnsupportedProblem { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FirstPriceUniform,
    AllPay,
    GeneralSearch,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FirstPriceUniform => "first_price_uniform",
            Method::AllPay => "all_pay",
            Method::GeneralSearch => "general_search",
        }
    }
}

/// Solver output: the equal-bid function, the strategy rebuilt from it, the
/// step abscissae, the achieved objective, and stationarity diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    pub method: Method,
    pub cut_points: Vec<Real>,
    pub leader_utility: Real,
    pub stationarity_residual: Real,
    pub g: EqualBid,
    pub s_star: MonotoneCurve,
    pub notes: Vec<String>,
}

/// The objective evaluated at an equal-bid function: rebuilds `s*` through
/// the bid-mass identity and integrates the leader's payoff cell by cell
/// (cells are cut at density breakpoints, at the function's own grid, and
/// where it crosses follower-density breakpoints, so each panel is smooth).
pub fn leader_utility(p: &CommitmentProblem, g: &EqualBid) -> Real {
    let crossings = follower_breakpoint_crossings(p, g);
    let table = BidMassTable::new(p, g, &crossings);
    let solver = QSolver::new(&p.rule);
    let span = {
        let (a1, a2) = p.leader_support();
        a2 - a1
    };
    let step_mode = g.curve.interpolation() == Interpolation::LeftStep;
    let mut total = 0.0;
    for w in table.xs.windows(2) {
        // Within a cell the density is constant and, for step functions, so
        // is the winning probability; evaluating both per cell keeps the
        // integrand smooth up to the cell boundary (g itself is only
        // left-continuous there).
        let dens = p.f1.density(0.5 * (w[0] + w[1]));
        let cell_win = if step_mode { Some(p.f2.cdf(g.eval(w[1]))) } else { None };
        let integrand = |x: Real| {
            let f = p.f1.cdf(x);
            let s = if f > 0.0 { solver.solve(f, -table.at(x)) } else { 0.0 };
            let win = cell_win.unwrap_or_else(|| p.f2.cdf(g.eval(x)));
            ((x - p.rule.p_winning(s)) * win - p.rule.p_participation(s)) * dens
        };
        let cell_tol = Tolerance {
            abs_tol: (p.tol.abs_tol * ((w[1] - w[0]) / span)).max(1e-15),
            rel_tol: p.tol.rel_tol,
            max_iter: 40,
        };
        total += match integrate(integrand, w[0], w[1], &cell_tol) {
            Ok(v) => v,
            Err(crate::numerics::NumericsError::NonConvergence { estimate, .. }) => estimate,
            Err(_) => 0.0,
        };
    }
    total
}

/// Abscissae where a piecewise-linear `g` crosses an interior breakpoint of
/// the follower density (there `F2[g(x)]` kinks).
fn follower_breakpoint_crossings(p: &CommitmentProblem, g: &EqualBid) -> Vec<Real> {
    if g.curve.interpolation() != Interpolation::Linear {
        return Vec::new();
    }
    let mut out = Vec::new();
    let grid = g.curve.grid();
    let values = g.curve.values();
    let breaks = p.f2.breakpoints();
    for i in 0..grid.len() - 1 {
        let (v0, v1) = (values[i], values[i + 1]);
        if v1 <= v0 {
            continue;
        }
        for &b in breaks {
            if v0 < b && b <= v1 {
                out.push(grid[i] + (b - v0) / (v1 - v0) * (grid[i + 1] - grid[i]));
            }
        }
    }
    out
}

/// The stationarity function `h(x)`: the payoff gradient with respect to
/// `g(x)` after the multiplier is eliminated.
///
/// First-price:
/// `h = f1(x) (x f2(g) - f2(g)/F1[x] * I(x) - integral_x^a2 F2[g] f1/F1 dt)`,
/// all-pay: `h = f1(x) (x f2(g) - 1 + F1[x])`; for custom rules the
/// multiplier is eliminated numerically from the same two conditions.
pub fn stationarity_h(p: &CommitmentProblem, g: &EqualBid, x: Real) -> Real {
    let table = BidMassTable::new(p, g, &[]);
    stationarity_h_with_table(p, g, &table, x)
}

fn stationarity_h_with_table(
    p: &CommitmentProblem,
    g: &EqualBid,
    table: &BidMassTable,
    x: Real,
) -> Real {
    if p.rule.is_all_pay() {
        let f1x = p.f1.density(x);
        let f2g = p.f2.density(g.eval(x));
        return f1x * (x * f2g - 1.0 + p.f1.cdf(x));
    }
    if p.rule.is_first_price() {
        let (_, a2) = p.leader_support();
        let f1x = p.f1.density(x);
        let f2g = p.f2.density(g.eval(x));
        let cdf = p.f1.cdf(x);
        let own = if cdf > 0.0 { f2g / cdf * table.at(x) } else { 0.0 };
        let tail = integrate_best(
            |t| p.f2.cdf(g.eval(t)) * p.f1.density(t) / p.f1.cdf(t).max(1e-300),
            x,
            a2,
            &table.xs,
            &relaxed_tol(&p.tol),
        );
        return f1x * (x * f2g - own - tail);
    }
    h_generic(p, g, table, x)
}

/// `h` assembled from the raw variational conditions with the multiplier
/// eliminated numerically:
/// `h = (x - p^w(s*)) f2(g) f1 + f1 * integral_x^a2 R(t) dt`,
/// `R(t) = -f1 [(p^w)'(s*) F2[g] + (p^p)'(s*)] / [(p^w)'(s*) F1 + (p^p)'(s*)]`.
pub(crate) fn h_generic(
    p: &CommitmentProblem,
    g: &EqualBid,
    table: &BidMassTable,
    x: Real,
) -> Real {
    let (_, a2) = p.leader_support();
    let f1x = p.f1.density(x);
    let f2g = p.f2.density(g.eval(x));
    let solver = QSolver::new(&p.rule);
    let s_at = |t: Real| {
        let f = p.f1.cdf(t);
        if f > 0.0 {
            solver.solve(f, -table.at(t))
        } else {
            0.0
        }
    };
    let r = |t: Real| {
        let s = s_at(t);
        let ws = p.rule.winning().slope_right(s);
        let ps = p.rule.participation().slope_right(s);
        let denom = ws * p.f1.cdf(t) + ps;
        if denom <= 0.0 {
            return 0.0;
        }
        -p.f1.density(t) * (ws * p.f2.cdf(g.eval(t)) + ps) / denom
    };
    let tail = integrate_best(r, x, a2, &table.xs, &relaxed_tol(&p.tol));
    let s = s_at(x);
    (x - p.rule.p_winning(s)) * f2g * f1x + f1x * tail
}

fn relaxed_tol(tol: &Tolerance<Real>) -> Tolerance<Real> {
    Tolerance { abs_tol: tol.abs_tol.max(1e-12), rel_tol: tol.rel_tol, max_iter: 30 }
}

/// Quadrature that falls back to the best estimate when a (log-singular)
/// integrand exhausts the subdivision budget near the support edge.
fn integrate_best(
    f: impl Fn(Real) -> Real,
    lo: Real,
    hi: Real,
    splits: &[Real],
    tol: &Tolerance<Real>,
) -> Real {
    match integrate_split(&f, lo, hi, splits, tol) {
        Ok(v) => v,
        Err(crate::numerics::NumericsError::NonConvergence { estimate, .. }) => estimate,
        Err(_) => 0.0,
    }
}

/// Stationarity diagnostics of a step solution, in the units of `h`.
///
/// Two families of first-order conditions apply to a step configuration:
/// moving a cut (always feasible both ways, so the objective derivative in
/// the cut position must vanish; dividing it by the level gap puts it in
/// `h` units and reduces to `|h(cut)|` for two-piece solutions), and moving
/// a whole level (the mean of `h` over the segment must vanish when the
/// level is interior, must not favor the blocked direction when the level
/// sits on a bound). The residual is the largest violation found.
fn step_residual(p: &CommitmentProblem, g: &EqualBid, cuts: &[Real], levels: &[Real]) -> Real {
    let (a1, a2) = p.leader_support();
    let (b1, b2) = p.follower_support();
    let span = a2 - a1;
    let table = BidMassTable::new(p, g, &[]);
    let eps = 1e-7 * span;
    let mut res: Real = 0.0;

    for (j, &c) in cuts.iter().enumerate() {
        let lo = if j == 0 { a1 } else { cuts[j - 1] };
        let hi = if j + 1 == cuts.len() { a2 } else { cuts[j + 1] };
        let delta = (1e-5 * span).min(0.4 * (c - lo)).min(0.4 * (hi - c));
        if delta <= 0.0 {
            continue;
        }
        let utility_at = |cut: Real| {
            let mut moved = cuts.to_vec();
            moved[j] = cut;
            match EqualBid::step(a1, a2, &moved, levels, b2) {
                Ok(trial) => leader_utility(p, &trial),
                Err(_) => Real::NAN,
            }
        };
        let slope = (utility_at(c + delta) - utility_at(c - delta)) / (2.0 * delta);
        let gap = (levels[j + 1] - levels[j]).max(1e-12);
        if slope.is_finite() {
            res = res.max(slope.abs() / gap);
        }
    }

    let bounds: Vec<Real> =
        std::iter::once(a1).chain(cuts.iter().copied()).chain(std::iter::once(a2)).collect();
    for (i, &level) in levels.iter().enumerate() {
        let (lo, hi) = (bounds[i], bounds[i + 1]);
        if hi - lo <= 2.0 * eps {
            continue;
        }
        let mean = integrate_best(
            |t| stationarity_h_with_table(p, g, &table, t),
            lo + eps,
            hi,
            &table.xs,
            &relaxed_tol(&p.tol),
        ) / (hi - lo);
        let pinned_below = level <= b1.max(0.0) + 1e-12 || level == 0.0;
        let pinned_above = level >= b2 - 1e-12;
        let violation = if pinned_below && pinned_above {
            0.0
        } else if pinned_below {
            mean.max(0.0) // raising the level must not help
        } else if pinned_above {
            (-mean).max(0.0) // lowering must not help
        } else {
            mean.abs()
        };
        res = res.max(violation);
    }
    res
}

fn base_notes(p: &CommitmentProblem) -> Vec<String> {
    p.diagnostics()
}

fn make_solution(
    p: &CommitmentProblem,
    method: Method,
    cuts: Vec<Real>,
    levels: Vec<Real>,
    mut notes: Vec<String>,
) -> Solution {
    let (a1, a2) = p.leader_support();
    let (_, b2) = p.follower_support();
    let g = EqualBid::step(a1, a2, &cuts, &levels, b2)
        .expect("solver-produced step functions are valid");
    let s_star = reconstruct(p, &g);
    let utility = leader_utility(p, &g);
    let residual = step_residual(p, &g, &cuts, &levels);
    notes.splice(0..0, base_notes(p));
    Solution {
        method,
        cut_points: cuts,
        leader_utility: utility,
        stationarity_residual: residual,
        g,
        s_star,
        notes,
    }
}

/// Closed-form solver for first-price auctions with follower types uniform
/// on `[0, b2]`: the optimal `g` bids passively below a cut point `t0` and
/// jumps to `b2` above it, where `t0` solves
/// `t = b2 * integral_t^a2 f1/F1 = -b2 ln F1[t]`.
///
/// All sign changes of the cut equation are enumerated; each candidate (plus
/// the no-cut fallback `g = b2` everywhere) is evaluated through the
/// objective and the best one is returned.
pub fn solve_first_price_uniform_f2(p: &CommitmentProblem) -> Result<Solution, SolverError> {
    if !p.rule.is_first_price() {
        return Err(SolverError::UnsupportedProblem {
            reason: "payment rule is not first-price".into(),
        });
    }
    if p.f2.breakpoints().len() != 2 {
        return Err(SolverError::UnsupportedProblem {
            reason: "follower distribution is not uniform".into(),
        });
    }
    let (b1, b2) = p.follower_support();
    if b1.abs() > 1e-12 {
        return Err(SolverError::UnsupportedProblem {
            reason: "follower support must start at 0".into(),
        });
    }
    let (a1, a2) = p.leader_support();
    let span = a2 - a1;
    let phi = |t: Real| t + b2 * p.f1.cdf(t).ln();
    let lo = a1 + span * 1e-9;
    let mut candidates: Vec<Vec<Real>> = scan_sign_changes(phi, lo, a2, 4096)
        .into_iter()
        .filter_map(|(l, h)| find_root(phi, l, h, &p.tol).ok())
        .filter(|t| *t > a1 + span * 1e-9 && *t < a2 - span * 1e-12)
        .map(|t| vec![t])
        .collect();
    candidates.push(Vec::new()); // g = b2 everywhere
    let best = candidates
        .into_iter()
        .map(|cuts| {
            let levels: Vec<Real> =
                if cuts.is_empty() { vec![b2] } else { vec![0.0, b2] };
            let g = EqualBid::step(a1, a2, &cuts, &levels, b2).expect("valid two-piece step");
            let u = leader_utility(p, &g);
            (cuts, levels, u)
        })
        .max_by(|x, y| x.2.partial_cmp(&y.2).unwrap())
        .expect("at least the no-cut candidate exists");

    let mut notes = Vec::new();
    // Root of the variant equation with the leader-ceiling coefficient, kept
    // for cross-checking against the sweep oracle.
    let phi_alt = |t: Real| t + a2 * p.f1.cdf(t).ln();
    if let Some(alt) = scan_sign_changes(phi_alt, lo, a2, 4096)
        .into_iter()
        .filter_map(|(l, h)| find_root(phi_alt, l, h, &p.tol).ok())
        .next()
    {
        notes.push(format!(
            "cut equation uses the follower-ceiling coefficient b2; the leader-ceiling variant \
             has root {alt:.6}"
        ));
    }
    if best.0.is_empty() {
        notes.push("cut equation has no interior root; bidding against the whole follower \
                    range is optimal"
            .into());
    }
    Ok(make_solution(p, Method::FirstPriceUniform, best.0, best.1, notes))
}

/// Closed-form solver for all-pay auctions with weakly increasing follower
/// density: the optimal `g` is a two-piece step whose cut solves
/// `b2 - t - b2 F1[t] = 0` (strictly decreasing, so the root is unique).
/// With uniform leader types this reduces to `t0 = b2 a2 / (b2 + a2 - a1)`.
pub fn solve_all_pay(p: &CommitmentProblem) -> Result<Solution, SolverError> {
    if !p.rule.is_all_pay() {
        return Err(SolverError::UnsupportedProblem { reason: "payment rule is not all-pay".into() });
    }
    let increasing = p
        .f2
        .segments()
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[0].2 <= w[1].2 + 1e-12);
    if !increasing {
        return Err(SolverError::UnsupportedProblem {
            reason: "follower density must be weakly increasing".into(),
        });
    }
    let (a1, a2) = p.leader_support();
    let (_, b2) = p.follower_support();
    let psi = |t: Real| b2 - t - b2 * p.f1.cdf(t);
    let mut notes = Vec::new();
    let cuts: Vec<Real> = if psi(a1) <= 0.0 {
        notes.push("cut equation has no interior root; bidding against the whole follower \
                    range is optimal"
            .into());
        Vec::new()
    } else {
        let t0 = find_root(psi, a1, a2, &p.tol)
            .expect("psi changes sign on the support when psi(a1) > 0");
        vec![t0]
    };
    if p.f1.breakpoints().len() == 2 {
        notes.push(format!(
            "uniform leader types: closed form b2*a2/(b2+a2-a1) = {:.9}",
            b2 * a2 / (b2 + a2 - a1)
        ));
    }
    let levels = if cuts.is_empty() { vec![b2] } else { vec![0.0, b2] };
    Ok(make_solution(p, Method::AllPay, cuts, levels, notes))
}

/// A step configuration under optimization: `levels[i]` on the segment
/// between consecutive cuts.
#[derive(Debug, Clone)]
struct StepConfig {
    cuts: Vec<Real>,
    levels: Vec<Real>,
}

impl StepConfig {
    fn objective(&self, p: &CommitmentProblem) -> Real {
        let (a1, a2) = p.leader_support();
        let (_, b2) = p.follower_support();
        let span = a2 - a1;
        // merge segments whose cuts collide
        let mut cuts = Vec::new();
        let mut levels = vec![self.levels[0]];
        for (i, &c) in self.cuts.iter().enumerate() {
            if c > a1 + 1e-9 * span
                && c < a2 - 1e-9 * span
                && cuts.last().map_or(true, |&prev| c > prev + 1e-9 * span)
            {
                cuts.push(c);
                levels.push(self.levels[i + 1]);
            } else {
                let last = levels.last_mut().unwrap();
                *last = (*last).max(self.levels[i + 1]);
            }
        }
        match EqualBid::step(a1, a2, &cuts, &levels, b2) {
            Ok(g) => leader_utility(p, &g),
            Err(_) => Real::NEG_INFINITY,
        }
    }
}

/// Coordinate-ascent search over monotone step functions with at most
/// `max_steps` levels, values restricted to `{0} union [b1, b2]`. Runs
/// seeded random restarts in parallel and keeps the best configuration; the
/// result is a heuristic optimum, flagged in the notes when its stationarity
/// residual is large.
pub fn solve_general(p: &CommitmentProblem, max_steps: usize) -> Solution {
    solve_general_seeded(p, max_steps, 0)
}

pub fn solve_general_seeded(p: &CommitmentProblem, max_steps: usize, seed: u64) -> Solution {
    let k = max_steps.max(1);
    let (a1, a2) = p.leader_support();
    let (b1, b2) = p.follower_support();
    let span = a2 - a1;
    let snap = |v: Real| {
        let step = span / (SNAP_GRID - 1) as Real;
        a1 + ((v - a1) / step).round() * step
    };

    let best = (0..RESTARTS)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
            let mut cuts: Vec<Real> = (0..k - 1)
                .map(|_| snap(a1 + rng.random::<Real>() * span).clamp(a1 + span * 1e-6, a2 - span * 1e-6))
                .collect();
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut levels: Vec<Real> = (0..k)
                .map(|_| {
                    if rng.random::<Real>() < 0.5 {
                        0.0
                    } else {
                        b1.max(0.0) + rng.random::<Real>() * (b2 - b1.max(0.0))
                    }
                })
                .collect();
            levels.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut config = StepConfig { cuts, levels };
            let mut value = config.objective(p);
            for _pass in 0..8 {
                let before = value;
                value = ascend_pass(p, &mut config, value, b1, b2, a1, a2);
                if value - before <= 1e-10 {
                    break;
                }
            }
            (value, config)
        })
        .max_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
        .expect("at least one restart");

    let (_, config) = best;
    // canonical form: drop collided cuts and cuts between equal levels
    let (a1s, a2s) = (a1 + 1e-9 * span, a2 - 1e-9 * span);
    let mut cuts = Vec::new();
    let mut levels = vec![config.levels[0]];
    for (i, &c) in config.cuts.iter().enumerate() {
        let level = config.levels[i + 1];
        let is_jump = level > *levels.last().unwrap() + 1e-12 * b2.max(1.0);
        if is_jump && c > a1s && c < a2s && cuts.last().map_or(true, |&prev| c > prev + 1e-9 * span)
        {
            cuts.push(c);
            levels.push(level);
        } else {
            let last = levels.last_mut().unwrap();
            *last = (*last).max(level);
        }
    }
    let mut notes = vec![format!("coordinate ascent, {RESTARTS} restarts, seed {seed}")];
    let sol = make_solution(p, Method::GeneralSearch, cuts, levels, notes.clone());
    if sol.stationarity_residual > 1e-3 {
        notes.push(format!(
            "stationarity residual {:.3e} exceeds tolerance; best-found heuristic",
            sol.stationarity_residual
        ));
        return Solution { notes, ..sol };
    }
    sol
}

fn ascend_pass(
    p: &CommitmentProblem,
    config: &mut StepConfig,
    mut value: Real,
    b1: Real,
    b2: Real,
    a1: Real,
    a2: Real,
) -> Real {
    let tol = Tolerance { abs_tol: 1e-7 * (a2 - a1), rel_tol: 0.0, max_iter: 60 };
    for j in 0..config.cuts.len() {
        let lo = if j == 0 { a1 } else { config.cuts[j - 1] };
        let hi = if j + 1 == config.cuts.len() { a2 } else { config.cuts[j + 1] };
        let (best_c, best_v) = crate::numerics::golden_max(
            |c| {
                let mut trial = config.clone();
                trial.cuts[j] = c;
                trial.objective(p)
            },
            lo,
            hi,
            &tol,
        );
        if best_v > value {
            config.cuts[j] = best_c;
            value = best_v;
        }
    }
    let level_tol = Tolerance { abs_tol: 1e-7 * b2.max(1.0), rel_tol: 0.0, max_iter: 60 };
    for j in 0..config.levels.len() {
        let floor = if j == 0 { b1.max(0.0) } else { config.levels[j - 1].max(b1.max(0.0)) };
        let ceil = if j + 1 == config.levels.len() { b2 } else { config.levels[j + 1] };
        let mut best_l = config.levels[j];
        let mut best_v = value;
        if ceil >= floor {
            let (l, v) = crate::numerics::golden_max(
                |l| {
                    let mut trial = config.clone();
                    trial.levels[j] = l;
                    trial.objective(p)
                },
                floor,
                ceil,
                &level_tol,
            );
            if v > best_v {
                best_l = l;
                best_v = v;
            }
        }
        // a level may also sit at exactly 0 if everything below it does
        if j == 0 || config.levels[j - 1] == 0.0 {
            let mut trial = config.clone();
            trial.levels[j] = 0.0;
            let v = trial.objective(p);
            if v > best_v {
                best_l = 0.0;
                best_v = v;
            }
        }
        if best_v > value {
            config.levels[j] = best_l;
            value = best_v;
        }
    }
    value
}

/// Dispatches to the closed form whose preconditions hold, falling back to
/// the general search with up to three levels.
pub fn solve_auto(p: &CommitmentProblem, seed: u64) -> Solution {
    match solve_first_price_uniform_f2(p) {
        Ok(sol) => return sol,
        Err(SolverError::UnsupportedProblem { .. }) => {}
    }
    match solve_all_pay(p) {
        Ok(sol) => return sol,
        Err(SolverError::UnsupportedProblem { reason }) => {
            let mut sol = solve_general_seeded(p, 3, seed);
            sol.notes.push(format!("closed forms not applicable ({reason}); used general search"));
            sol
        }
    }
}
