//! Continuous type distributions with piecewise-constant density.
//!
//! Every distribution in scope (uniform, two-level step) has a
//! piecewise-constant density, so the CDF is piecewise linear and both the
//! CDF and its inverse are exact. Queries below the support return 0 and
//! above it return 1, matching how the follower distribution is extended
//! below its lower endpoint.

use crate::numerics::{self, NumericsError, Tolerance};
use crate::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Density values may be off by JSON rounding up to this much before the
/// constructor rejects instead of renormalizing.
const NORMALIZATION_SLACK: Real = 1e-6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DistributionError {
    #[error("breakpoints must be strictly increasing and at least two")]
    BadBreakpoints,
    #[error("need exactly one density per segment ({segments} segments, {densities} densities)")]
    LengthMismatch { segments: usize, densities: usize },
    #[error("densities must be strictly positive on the support")]
    NonPositiveDensity,
    #[error("total mass {total} is not within {NORMALIZATION_SLACK} of 1")]
    NotNormalized { total: Real },
    #[error("quantile argument {q} outside [0, 1]")]
    QuantileDomain { q: Real },
    #[error(transparent)]
    Numerics(#[from] NumericsError<Real>),
}

/// A continuous distribution with piecewise-constant density on a bounded
/// support. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecewiseDensityRaw", into = "PiecewiseDensityRaw")]
pub struct PiecewiseDensity {
    breakpoints: Vec<Real>,
    densities: Vec<Real>,
    /// CDF at each breakpoint; cum[0] = 0, last = 1.
    cum: Vec<Real>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PiecewiseDensityRaw {
    breakpoints: Vec<Real>,
    densities: Vec<Real>,
}

impl TryFrom<PiecewiseDensityRaw> for PiecewiseDensity {
    type Error = DistributionError;
    fn try_from(raw: PiecewiseDensityRaw) -> Result<Self, Self::Error> {
        PiecewiseDensity::new(raw.breakpoints, raw.densities)
    }
}

impl From<PiecewiseDensity> for PiecewiseDensityRaw {
    fn from(d: PiecewiseDensity) -> Self {
        Self { breakpoints: d.breakpoints, densities: d.densities }
    }
}

impl PiecewiseDensity {
    /// Builds a distribution from sorted breakpoints and per-segment
    /// densities. Densities whose total mass is within 1e-6 of 1 are
    /// renormalized; anything further off is rejected as user error.
    pub fn new(breakpoints: Vec<Real>, densities: Vec<Real>) -> Result<Self, DistributionError> {
        if breakpoints.len() < 2
            || breakpoints.windows(2).any(|w| !(w[0] < w[1]))
            || breakpoints.iter().any(|b| !b.is_finite())
        {
            return Err(DistributionError::BadBreakpoints);
        }
        if densities.len() != breakpoints.len() - 1 {
            return Err(DistributionError::LengthMismatch {
                segments: breakpoints.len() - 1,
                densities: densities.len(),
            });
        }
        if densities.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(DistributionError::NonPositiveDensity);
        }
        let total: Real = densities
            .iter()
            .zip(breakpoints.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum();
        if (total - 1.0).abs() > NORMALIZATION_SLACK {
            return Err(DistributionError::NotNormalized { total });
        }
        let densities: Vec<Real> = densities.iter().map(|d| d / total).collect();
        let mut cum = Vec::with_capacity(breakpoints.len());
        cum.push(0.0);
        for (d, w) in densities.iter().zip(breakpoints.windows(2)) {
            cum.push(cum.last().unwrap() + d * (w[1] - w[0]));
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self { breakpoints, densities, cum })
    }

    pub fn uniform(lo: Real, hi: Real) -> Self {
        Self::new(vec![lo, hi], vec![1.0 / (hi - lo)]).expect("uniform support must be nonempty")
    }

    pub fn support(&self) -> (Real, Real) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn lo(&self) -> Real {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> Real {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[Real] {
        &self.breakpoints
    }

    /// Iterator over `(segment_lo, segment_hi, density)`.
    pub fn segments(&self) -> impl Iterator<Item = (Real, Real, Real)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.densities)
            .map(|(w, d)| (w[0], w[1], *d))
    }

    /// Exact piecewise-linear CDF. Queries below the support return 0 and
    /// above it 1, so the extension of the follower distribution below its
    /// lower endpoint comes for free.
    pub fn cdf(&self, x: Real) -> Real {
        if x <= self.lo() {
            return 0.0;
        }
        if x >= self.hi() {
            return 1.0;
        }
        let i = self.segment_index(x);
        (self.cum[i] + self.densities[i] * (x - self.breakpoints[i])).min(1.0)
    }

    /// Density at `x`; zero outside the support. At interior breakpoints the
    /// left segment's value is returned, at the lower endpoint the first
    /// segment's.
    pub fn density(&self, x: Real) -> Real {
        if x < self.lo() || x > self.hi() {
            return 0.0;
        }
        if x == self.lo() {
            return self.densities[0];
        }
        let i = match self.breakpoints.binary_search_by(|b| b.partial_cmp(&x).unwrap()) {
            Ok(i) => i.saturating_sub(1).min(self.densities.len() - 1),
            Err(i) => i - 1,
        };
        self.densities[i]
    }

    /// Inverse CDF; unique because densities are strictly positive.
    pub fn quantile(&self, q: Real) -> Result<Real, DistributionError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(DistributionError::QuantileDomain { q });
        }
        if q >= 1.0 {
            return Ok(self.hi());
        }
        match self.cum.binary_search_by(|c| c.partial_cmp(&q).unwrap()) {
            Ok(i) => Ok(self.breakpoints[i]),
            Err(i) => Ok(self.breakpoints[i - 1] + (q - self.cum[i - 1]) / self.densities[i - 1]),
        }
    }

    /// Probability mass of `(lo, hi]`, exact.
    pub fn mass_between(&self, lo: Real, hi: Real) -> Real {
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }

    /// Density-weighted integral of `w` over `[lo, hi]` (intersected with the
    /// support, where the density vanishes anyway). Breakpoints of `w` go in
    /// `splits`; the density's own breakpoints are added automatically.
    pub fn integrate_weighted(
        &self,
        w: impl Fn(Real) -> Real,
        lo: Real,
        hi: Real,
        splits: &[Real],
        tol: &Tolerance<Real>,
    ) -> Result<Real, DistributionError> {
        let lo = lo.max(self.lo());
        let hi = hi.min(self.hi());
        if lo >= hi {
            return Ok(0.0);
        }
        let mut cuts: Vec<Real> = splits.to_vec();
        cuts.extend_from_slice(&self.breakpoints);
        let v = numerics::integrate_split(|t| w(t) * self.density(t), lo, hi, &cuts, tol)?;
        Ok(v)
    }

    fn segment_index(&self, x: Real) -> usize {
        debug_assert!(x > self.lo() && x < self.hi());
        match self.breakpoints.binary_search_by(|b| b.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.densities.len() - 1),
            Err(i) => i - 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;
    use proptest::prelude::*;

    fn tol() -> Tolerance<Real> {
        Tolerance::default()
    }

    /// Leader distribution of the overbidding example: density 2/3 on (0, 1],
    /// 1/3 on (1, 2].
    pub(crate) fn two_level() -> PiecewiseDensity {
        PiecewiseDensity::new(vec![0.0, 1.0, 2.0], vec![2.0 / 3.0, 1.0 / 3.0]).unwrap()
    }

    #[test]
    fn uniform_cdf_midpoint() {
        let d = PiecewiseDensity::uniform(0.0, 1.0);
        assert_eq!(d.cdf(0.5), 0.5);
    }

    #[test]
    fn two_level_cdf_at_kink() {
        let d = two_level();
        assert!((d.cdf(1.0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_clamps_outside_support() {
        let d = two_level();
        assert_eq!(d.cdf(-0.5), 0.0);
        assert_eq!(d.cdf(2.5), 1.0);
    }

    #[test]
    fn quantile_inverts_two_level() {
        let d = two_level();
        assert!((d.quantile(2.0 / 3.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(d.quantile(1.0).unwrap(), 2.0);
        assert!(d.quantile(1.5).is_err());
    }

    #[test]
    fn uniform_quantile_quarter() {
        let d = PiecewiseDensity::uniform(0.0, 1.0);
        assert!((d.quantile(0.25).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn weighted_integral_normalization_and_mean() {
        let d = PiecewiseDensity::uniform(0.0, 1.0);
        let one = d.integrate_weighted(|_| 1.0, 0.0, 1.0, &[], &tol()).unwrap();
        assert!((one - 1.0).abs() < 1e-9);
        let mean = d.integrate_weighted(|t| t, 0.0, 1.0, &[], &tol()).unwrap();
        assert!((mean - 0.5).abs() < 1e-9);
    }

    #[test]
    fn weighted_integral_of_step_commitment() {
        // w = 0 below the cut point, 1 above: integral is 1 - t0.
        let t0 = testutil::omega();
        let d = PiecewiseDensity::uniform(0.0, 1.0);
        let w = |t: Real| if t <= t0 { 0.0 } else { 1.0 };
        let v = d.integrate_weighted(w, 0.0, 1.0, &[t0], &tol()).unwrap();
        assert!((v - (1.0 - t0)).abs() < 1e-9);
        assert!((v - 0.432857).abs() < 1e-6);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            PiecewiseDensity::new(vec![0.0, 1.0], vec![0.9]),
            Err(DistributionError::NotNormalized { .. })
        ));
        assert!(PiecewiseDensity::new(vec![0.0, 1.0], vec![1.0 + 5e-7]).is_ok());
        assert!(matches!(
            PiecewiseDensity::new(vec![1.0, 0.0], vec![1.0]),
            Err(DistributionError::BadBreakpoints)
        ));
        assert!(matches!(
            PiecewiseDensity::new(vec![0.0, 0.5, 1.0], vec![0.0, 2.0]),
            Err(DistributionError::NonPositiveDensity)
        ));
    }

    #[test]
    fn json_round_trip() {
        let d = two_level();
        let json = serde_json::to_string(&d).unwrap();
        let back: PiecewiseDensity = serde_json::from_str(&json).unwrap();
        assert_eq!(d, back);
        let parsed: PiecewiseDensity =
            serde_json::from_str(r#"{"breakpoints":[0.0,1.0],"densities":[1.0]}"#).unwrap();
        assert_eq!(parsed.cdf(0.25), 0.25);
        assert!(serde_json::from_str::<PiecewiseDensity>(
            r#"{"breakpoints":[0.0,1.0],"densities":[0.5]}"#
        )
        .is_err());
    }

    prop_compose! {
        pub(crate) fn arb_density()(
            lo in -1.0f64..2.0,
            widths in proptest::collection::vec(0.05f64..1.5, 1..4),
            raw in proptest::collection::vec(0.1f64..4.0, 4),
        ) -> PiecewiseDensity {
            let mut breakpoints = vec![lo];
            for w in &widths {
                breakpoints.push(breakpoints.last().unwrap() + w);
            }
            let densities: Vec<Real> = raw[..widths.len()].to_vec();
            let total: Real = densities.iter().zip(breakpoints.windows(2))
                .map(|(d, w)| d * (w[1] - w[0])).sum();
            let densities = densities.iter().map(|d| d / total).collect();
            PiecewiseDensity::new(breakpoints, densities).unwrap()
        }
    }

    proptest! {
        #[test]
        fn quantile_cdf_round_trip(d in arb_density(), q in 0.0f64..=1.0) {
            let x = d.quantile(q).unwrap();
            prop_assert!((d.cdf(x) - q).abs() < 1e-9);
        }

        #[test]
        fn cdf_quantile_round_trip(d in arb_density(), frac in 0.0f64..=1.0) {
            let (lo, hi) = d.support();
            let x = lo + frac * (hi - lo);
            let q = d.cdf(x);
            prop_assert!((d.quantile(q).unwrap() - x).abs() < 1e-9);
        }

        #[test]
        fn cdf_monotone_and_lipschitz(d in arb_density(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = d.support();
            let (x1, x2) = if a <= b { (a, b) } else { (b, a) };
            let (x1, x2) = (lo + x1 * (hi - lo), lo + x2 * (hi - lo));
            let dmax = d.segments().map(|(_, _, den)| den).fold(0.0, Real::max);
            let rise = d.cdf(x2) - d.cdf(x1);
            prop_assert!(rise >= 0.0);
            prop_assert!(rise <= dmax * (x2 - x1) + 1e-12);
        }
    }
}
