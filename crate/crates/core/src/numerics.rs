//! Shared numeric kernels: adaptive quadrature, bracketed root finding and
//! golden-section maximization.
//!
//! The kernels are generic over [`num_traits::Float`] so they can be reused
//! at `f32` or `f64`; the rest of the crate instantiates them at
//! [`crate::Real`]. All functions are pure and callable from any thread.

use num_traits::Float;
use thiserror::Error;

/// Convergence targets shared by the kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance<F> {
    /// Absolute error bound (quadrature error, bracket width).
    pub abs_tol: F,
    /// Relative error bound, scaled by the magnitude of the estimate.
    pub rel_tol: F,
    /// Iteration / subdivision-depth cap.
    pub max_iter: usize,
}

impl<F: Float> Tolerance<F> {
    pub fn new(abs_tol: F, rel_tol: F, max_iter: usize) -> Result<Self, NumericsError<F>> {
        if !(abs_tol > F::zero()) || !(rel_tol >= F::zero()) || max_iter < 1 {
            return Err(NumericsError::InvalidTolerance);
        }
        Ok(Self { abs_tol, rel_tol, max_iter })
    }

    fn cast(x: f64) -> F {
        F::from(x).expect("tolerance constant must be representable")
    }
}

/// abs_tol 1e-9, rel_tol 1e-9, 200 iterations: the reference values this
/// crate reproduces are quoted to 3-4 digits, which leaves ample headroom.
impl<F: Float> Default for Tolerance<F> {
    fn default() -> Self {
        Self {
            abs_tol: Self::cast(1e-9),
            rel_tol: Self::cast(1e-9),
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericsError<F> {
    #[error("tolerance fields out of range (abs_tol > 0, rel_tol >= 0, max_iter >= 1)")]
    InvalidTolerance,
    #[error("quadrature did not converge; best estimate {estimate:?}, residual {residual:?}")]
    NonConvergence { estimate: F, residual: F },
    #[error("no sign change on bracket [{lo:?}, {hi:?}]: f(lo)={f_lo:?}, f(hi)={f_hi:?}")]
    NoRoot { lo: F, hi: F, f_lo: F, f_hi: F },
    #[error("invalid bracket: lo {lo:?} must not exceed hi {hi:?}")]
    InvalidBracket { lo: F, hi: F },
}

fn simpson<F: Float>(f: &impl Fn(F) -> F, a: F, fa: F, b: F, fb: F) -> (F, F, F) {
    let two = F::one() + F::one();
    let six = F::from(6.0).unwrap();
    let m = (a + b) / two;
    let fm = f(m);
    ((b - a) / six * (fa + F::from(4.0).unwrap() * fm + fb), m, fm)
}

struct AdaptiveState<F> {
    worst_residual: F,
    exhausted: bool,
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Float>(
    f: &impl Fn(F) -> F,
    a: F,
    fa: F,
    b: F,
    fb: F,
    whole: F,
    m: F,
    fm: F,
    eps: F,
    depth: usize,
    force: usize,
    state: &mut AdaptiveState<F>,
) -> F {
    let fifteen = F::from(15.0).unwrap();
    let two = F::one() + F::one();
    let (left, lm, flm) = simpson(f, a, fa, m, fm);
    let (right, rm, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    // The error estimate can cancel by accident on coarse panels, so the
    // first few levels always subdivide.
    if force == 0 && delta.abs() <= fifteen * eps {
        return left + right + delta / fifteen;
    }
    if depth == 0 {
        state.exhausted = true;
        state.worst_residual = state.worst_residual.max(delta.abs() / fifteen);
        return left + right + delta / fifteen;
    }
    let force = force.saturating_sub(1);
    adaptive(f, a, fa, m, fm, left, lm, flm, eps / two, depth - 1, force, state)
        + adaptive(f, m, fm, b, fb, right, rm, frm, eps / two, depth - 1, force, state)
}

/// Adaptive Simpson quadrature of `f` over `[lo, hi]`.
///
/// The integrand must be bounded and piecewise continuous; interior
/// breakpoints should be passed through [`integrate_split`] so each panel is
/// smooth. Integrating over an empty interval yields zero. On subdivision
/// exhaustion the error carries the best estimate and its residual.
pub fn integrate<F: Float>(
    f: impl Fn(F) -> F,
    lo: F,
    hi: F,
    tol: &Tolerance<F>,
) -> Result<F, NumericsError<F>> {
    if lo > hi {
        return Err(NumericsError::InvalidBracket { lo, hi });
    }
    if lo == hi {
        return Ok(F::zero());
    }
    let fa = f(lo);
    let fb = f(hi);
    let (whole, m, fm) = simpson(&f, lo, fa, hi, fb);
    let eps = tol.abs_tol.max(tol.rel_tol * whole.abs());
    let mut state = AdaptiveState { worst_residual: F::zero(), exhausted: false };
    // max_iter caps the bisection depth of each panel.
    let force = 3.min(tol.max_iter.saturating_sub(1));
    let estimate =
        adaptive(&f, lo, fa, hi, fb, whole, m, fm, eps, tol.max_iter, force, &mut state);
    if state.exhausted && state.worst_residual > eps {
        return Err(NumericsError::NonConvergence { estimate, residual: state.worst_residual });
    }
    Ok(estimate)
}

/// [`integrate`] with caller-supplied split points at integrand breakpoints.
/// Splits outside `(lo, hi)` are ignored; they need not be sorted.
pub fn integrate_split<F: Float>(
    f: impl Fn(F) -> F,
    lo: F,
    hi: F,
    splits: &[F],
    tol: &Tolerance<F>,
) -> Result<F, NumericsError<F>> {
    if lo > hi {
        return Err(NumericsError::InvalidBracket { lo, hi });
    }
    if lo == hi {
        return Ok(F::zero());
    }
    let mut cuts: Vec<F> = splits.iter().copied().filter(|&s| s > lo && s < hi).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("split points must not be NaN"));
    cuts.dedup();
    let mut total = F::zero();
    let mut left = lo;
    for cut in cuts.into_iter().chain(std::iter::once(hi)) {
        total = total + integrate(&f, left, cut, tol)?;
        left = cut;
    }
    Ok(total)
}

/// Root of `f` on `[lo, hi]` together with the final bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketedRoot<F> {
    pub root: F,
    pub bracket_lo: F,
    pub bracket_hi: F,
}

/// Bracketed root finding: bisection with regula-falsi acceleration.
///
/// Requires `f(lo) * f(hi) <= 0`; returns once the bracket width drops below
/// `abs_tol` (relative to the bracket scale). Every target equation in this
/// crate is monotone on its bracket, so acceleration is safe; bisection steps
/// guarantee convergence regardless.
pub fn find_root_bracketed<F: Float>(
    f: impl Fn(F) -> F,
    lo: F,
    hi: F,
    tol: &Tolerance<F>,
) -> Result<BracketedRoot<F>, NumericsError<F>> {
    if lo > hi {
        return Err(NumericsError::InvalidBracket { lo, hi });
    }
    let mut a = lo;
    let mut b = hi;
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == F::zero() {
        return Ok(BracketedRoot { root: a, bracket_lo: a, bracket_hi: a });
    }
    if fb == F::zero() {
        return Ok(BracketedRoot { root: b, bracket_lo: b, bracket_hi: b });
    }
    if fa * fb > F::zero() {
        return Err(NumericsError::NoRoot { lo, hi, f_lo: fa, f_hi: fb });
    }
    let two = F::one() + F::one();
    let width_goal = tol.abs_tol * F::one().max(a.abs().max(b.abs()));
    for iter in 0..tol.max_iter {
        if b - a <= width_goal {
            break;
        }
        // Alternate regula falsi with plain bisection so a flat secant can
        // never stall the bracket.
        let mid = (a + b) / two;
        let x = if iter % 2 == 0 {
            let secant = a - fa * (b - a) / (fb - fa);
            if secant > a && secant < b {
                secant
            } else {
                mid
            }
        } else {
            mid
        };
        let fx = f(x);
        if fx == F::zero() {
            return Ok(BracketedRoot { root: x, bracket_lo: x, bracket_hi: x });
        }
        if fa * fx < F::zero() {
            b = x;
            fb = fx;
        } else {
            a = x;
            fa = fx;
        }
    }
    Ok(BracketedRoot { root: (a + b) / two, bracket_lo: a, bracket_hi: b })
}

/// Convenience wrapper around [`find_root_bracketed`] returning the root.
pub fn find_root<F: Float>(
    f: impl Fn(F) -> F,
    lo: F,
    hi: F,
    tol: &Tolerance<F>,
) -> Result<F, NumericsError<F>> {
    find_root_bracketed(f, lo, hi, tol).map(|r| r.root)
}

/// Sample `f` at `n + 1` equispaced points and return every sub-bracket on
/// which the sign changes. Used by the solvers to enumerate candidate roots
/// before bisecting each bracket.
pub fn scan_sign_changes<F: Float>(f: impl Fn(F) -> F, lo: F, hi: F, n: usize) -> Vec<(F, F)> {
    let n = n.max(1);
    let step = (hi - lo) / F::from(n).unwrap();
    let mut brackets = Vec::new();
    let mut x_prev = lo;
    let mut f_prev = f(lo);
    for i in 1..=n {
        let x = if i == n { hi } else { lo + step * F::from(i).unwrap() };
        let fx = f(x);
        if f_prev == F::zero() || f_prev * fx < F::zero() {
            brackets.push((x_prev, x));
        }
        x_prev = x;
        f_prev = fx;
    }
    if f_prev == F::zero() {
        brackets.push((x_prev, x_prev));
    }
    brackets
}

/// Golden-section maximization of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F: Float>(f: impl Fn(F) -> F, lo: F, hi: F, tol: &Tolerance<F>) -> (F, F) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let phi = F::from(0.618_033_988_749_894_9).unwrap();
    let mut a = lo;
    let mut b = hi;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..tol.max_iter {
        if b - a <= tol.abs_tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    // Endpoints can beat the interior probes when the max sits on the boundary.
    let two = F::one() + F::one();
    let m = (a + b) / two;
    let fm = f(m);
    let mut best = (m, fm);
    for (x, v) in [(c, fc), (d, fd), (lo, f(lo)), (hi, f(hi))] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}
