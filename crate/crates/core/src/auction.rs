//! Rank-and-bid payment rules: a participation payment charged on every bid
//! plus a winning payment charged on top when the bid wins.
//!
//! Rules are piecewise linear, which covers first-price, all-pay and their
//! convex combinations exactly and keeps the indifference equation
//! `b + a*p^w(t) + p^p(t) = 0` solvable segment by segment. At the finitely
//! many kinks both one-sided slopes are exposed; the right slope is the
//! default derivative.

use crate::Real;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RuleError {
    #[error("knots must start at 0 and strictly increase")]
    BadKnots,
    #[error("need one slope per knot ({knots} knots, {slopes} slopes)")]
    LengthMismatch { knots: usize, slopes: usize },
    #[error("knots and slopes must be finite")]
    NonFinite,
}

/// A weakly increasing piecewise-linear payment function on the nonnegative
/// bids, extended linearly beyond the last knot. Negative bids pay nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecewiseLinearRaw", into = "PiecewiseLinearRaw")]
pub struct PiecewiseLinearFn {
    /// Segment start points; `knots[0] == 0`.
    knots: Vec<Real>,
    /// Slope on `[knots[i], knots[i+1])`; the last slope extends to infinity.
    slopes: Vec<Real>,
    /// Payment at bid 0. Zero for every valid rule; kept as data so that
    /// `validate` can report the violation instead of refusing to construct.
    value_at_zero: Real,
    /// Function values at the knots, cached.
    vals: Vec<Real>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PiecewiseLinearRaw {
    knots: Vec<Real>,
    slopes: Vec<Real>,
    #[serde(default)]
    value_at_zero: Real,
}

impl TryFrom<PiecewiseLinearRaw> for PiecewiseLinearFn {
    type Error = RuleError;
    fn try_from(raw: PiecewiseLinearRaw) -> Result<Self, Self::Error> {
        PiecewiseLinearFn::with_offset(raw.knots, raw.slopes, raw.value_at_zero)
    }
}

impl From<PiecewiseLinearFn> for PiecewiseLinearRaw {
    fn from(f: PiecewiseLinearFn) -> Self {
        Self { knots: f.knots, slopes: f.slopes, value_at_zero: f.value_at_zero }
    }
}

impl PiecewiseLinearFn {
    pub fn new(knots: Vec<Real>, slopes: Vec<Real>) -> Result<Self, RuleError> {
        Self::with_offset(knots, slopes, 0.0)
    }

    pub fn with_offset(
        knots: Vec<Real>,
        slopes: Vec<Real>,
        value_at_zero: Real,
    ) -> Result<Self, RuleError> {
        if knots.is_empty() || knots[0] != 0.0 || knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(RuleError::BadKnots);
        }
        if knots.len() != slopes.len() {
            return Err(RuleError::LengthMismatch { knots: knots.len(), slopes: slopes.len() });
        }
        if knots.iter().chain(slopes.iter()).any(|v| !v.is_finite()) || !value_at_zero.is_finite() {
            return Err(RuleError::NonFinite);
        }
        let mut vals = Vec::with_capacity(knots.len());
        vals.push(value_at_zero);
        for i in 1..knots.len() {
            vals.push(vals[i - 1] + slopes[i - 1] * (knots[i] - knots[i - 1]));
        }
        Ok(Self { knots, slopes, value_at_zero, vals })
    }

    /// The zero function.
    pub fn zero() -> Self {
        Self::new(vec![0.0], vec![0.0]).unwrap()
    }

    /// The identity function.
    pub fn identity() -> Self {
        Self::new(vec![0.0], vec![1.0]).unwrap()
    }

    pub fn is_zero(&self) -> bool {
        self.value_at_zero == 0.0 && self.slopes.iter().all(|s| *s == 0.0)
    }

    pub fn is_identity(&self) -> bool {
        self.value_at_zero == 0.0 && self.slopes.iter().all(|s| *s == 1.0)
    }

    pub fn knots(&self) -> &[Real] {
        &self.knots
    }

    /// Payment at bid `t`; zero on negative bids.
    pub fn eval(&self, t: Real) -> Real {
        if t < 0.0 {
            return 0.0;
        }
        let i = self.segment_index(t);
        self.vals[i] + self.slopes[i] * (t - self.knots[i])
    }

    /// The function extended *linearly* below zero with the first segment's
    /// slope. This is the extension under which the indifference equation
    /// always has a solution; actual payments use [`eval`](Self::eval).
    pub fn eval_extended(&self, t: Real) -> Real {
        if t < 0.0 {
            return self.value_at_zero + self.slopes[0] * t;
        }
        self.eval(t)
    }

    /// Right-hand slope at `t` (the default derivative).
    pub fn slope_right(&self, t: Real) -> Real {
        if t < 0.0 {
            return 0.0;
        }
        self.slopes[self.segment_index(t)]
    }

    /// Left-hand slope at `t`.
    pub fn slope_left(&self, t: Real) -> Real {
        if t <= 0.0 {
            return 0.0;
        }
        match self.knots.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(i) => self.slopes[i.saturating_sub(1)],
            Err(i) => self.slopes[i - 1],
        }
    }

    fn segment_index(&self, t: Real) -> usize {
        match self.knots.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }
}

/// Which named auction a rule encodes; `Custom` for anything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    FirstPrice,
    AllPay,
    Custom,
}

/// The pair of payment functions of a rank-and-bid auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PaymentRuleRaw", into = "PaymentRuleRaw")]
pub struct PaymentRule {
    participation: PiecewiseLinearFn,
    winning: PiecewiseLinearFn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PaymentRuleRaw {
    kind: RuleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    participation: Option<PiecewiseLinearFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    winning: Option<PiecewiseLinearFn>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PaymentRuleParseError {
    #[error("custom rules must supply both participation and winning functions")]
    MissingFunctions,
    #[error(transparent)]
    Rule(#[from] RuleError),
}

impl TryFrom<PaymentRuleRaw> for PaymentRule {
    type Error = PaymentRuleParseError;
    fn try_from(raw: PaymentRuleRaw) -> Result<Self, Self::Error> {
        match raw.kind {
            RuleKind::FirstPrice => Ok(PaymentRule::first_price()),
            RuleKind::AllPay => Ok(PaymentRule::all_pay()),
            RuleKind::Custom => match (raw.participation, raw.winning) {
                (Some(p), Some(w)) => Ok(PaymentRule::custom(p, w)),
                _ => Err(PaymentRuleParseError::MissingFunctions),
            },
        }
    }
}

impl From<PaymentRule> for PaymentRuleRaw {
    fn from(rule: PaymentRule) -> Self {
        let kind = rule.kind();
        match kind {
            RuleKind::Custom => Self {
                kind,
                participation: Some(rule.participation),
                winning: Some(rule.winning),
            },
            _ => Self { kind, participation: None, winning: None },
        }
    }
}

/// A broken rule invariant, reported as data with the offending bid interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuleViolation {
    pub message: String,
    pub interval: (Real, Real),
}

impl fmt::Display for RuleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on [{}, {}]", self.message, self.interval.0, self.interval.1)
    }
}

impl PaymentRule {
    /// Winners pay their bid, losers pay nothing.
    pub fn first_price() -> Self {
        Self { participation: PiecewiseLinearFn::zero(), winning: PiecewiseLinearFn::identity() }
    }

    /// Everyone pays their bid.
    pub fn all_pay() -> Self {
        Self { participation: PiecewiseLinearFn::identity(), winning: PiecewiseLinearFn::zero() }
    }

    pub fn custom(participation: PiecewiseLinearFn, winning: PiecewiseLinearFn) -> Self {
        Self { participation, winning }
    }

    pub fn kind(&self) -> RuleKind {
        if self.is_first_price() {
            RuleKind::FirstPrice
        } else if self.is_all_pay() {
            RuleKind::AllPay
        } else {
            RuleKind::Custom
        }
    }

    pub fn is_first_price(&self) -> bool {
        self.participation.is_zero() && self.winning.is_identity()
    }

    pub fn is_all_pay(&self) -> bool {
        self.participation.is_identity() && self.winning.is_zero()
    }

    pub fn participation(&self) -> &PiecewiseLinearFn {
        &self.participation
    }

    pub fn winning(&self) -> &PiecewiseLinearFn {
        &self.winning
    }

    /// p^p(t): paid by any bidder.
    pub fn p_participation(&self, t: Real) -> Real {
        self.participation.eval(t)
    }

    /// p^w(t): paid on top by the winner.
    pub fn p_winning(&self, t: Real) -> Real {
        self.winning.eval(t)
    }

    /// p^p(t) + p^w(t): strictly increasing for every valid rule.
    pub fn total(&self, t: Real) -> Real {
        self.participation.eval(t) + self.winning.eval(t)
    }

    /// Union of both functions' knots, sorted.
    pub fn knots(&self) -> Vec<Real> {
        let mut k: Vec<Real> =
            self.participation.knots.iter().chain(self.winning.knots.iter()).copied().collect();
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        k.dedup();
        k
    }

    /// True if either function has an interior kink. The closed-form theory
    /// assumes continuously differentiable payments; kinked rules are allowed
    /// here but surfaced in solver diagnostics.
    pub fn has_kinks(&self) -> bool {
        self.participation.knots.len() > 1 || self.winning.knots.len() > 1
    }

    /// Checks every rule invariant and returns the violations found.
    pub fn validate(&self) -> Vec<RuleViolation> {
        let mut out = Vec::new();
        if self.participation.value_at_zero != 0.0 {
            out.push(RuleViolation {
                message: "participation payment nonzero at origin".into(),
                interval: (0.0, 0.0),
            });
        }
        if self.winning.value_at_zero != 0.0 {
            out.push(RuleViolation {
                message: "winning payment nonzero at origin".into(),
                interval: (0.0, 0.0),
            });
        }
        let knots = self.knots();
        for (i, &k) in knots.iter().enumerate() {
            let hi = knots.get(i + 1).copied().unwrap_or(Real::INFINITY);
            let ps = self.participation.slope_right(k);
            let ws = self.winning.slope_right(k);
            if ps < 0.0 {
                out.push(RuleViolation {
                    message: "participation payment decreasing".into(),
                    interval: (k, hi),
                });
            }
            if ws < 0.0 {
                out.push(RuleViolation {
                    message: "winning payment decreasing".into(),
                    interval: (k, hi),
                });
            }
            if ps + ws <= 0.0 {
                out.push(RuleViolation {
                    message: "sum not strictly increasing".into(),
                    interval: (k, hi),
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_price_payments() {
        let r = PaymentRule::first_price();
        assert_eq!(r.p_winning(0.3), 0.3);
        assert_eq!(r.p_participation(0.3), 0.0);
        assert_eq!(r.total(0.3), 0.3);
        assert!(r.validate().is_empty());
        assert_eq!(r.kind(), RuleKind::FirstPrice);
    }

    #[test]
    fn all_pay_payments() {
        let r = PaymentRule::all_pay();
        assert_eq!(r.p_participation(0.3), 0.3);
        assert_eq!(r.p_winning(0.3), 0.0);
        assert_eq!(r.total(0.3), 0.3);
        assert!(r.validate().is_empty());
        assert_eq!(r.kind(), RuleKind::AllPay);
    }

    #[test]
    fn negative_bids_pay_nothing() {
        let r = PaymentRule::all_pay();
        assert_eq!(r.total(-1.0), 0.0);
        assert_eq!(r.participation().eval_extended(-1.0), -1.0);
    }

    #[test]
    fn validate_reports_nonzero_origin() {
        let p = PiecewiseLinearFn::with_offset(vec![0.0], vec![1.0], 0.1).unwrap();
        let r = PaymentRule::custom(p, PiecewiseLinearFn::zero());
        let violations = r.validate();
        assert!(violations.iter().any(|v| v.message.contains("nonzero at origin")));
    }

    #[test]
    fn validate_reports_flat_total() {
        // both functions flat on [0.2, 0.3]
        let p = PiecewiseLinearFn::new(vec![0.0, 0.2, 0.3], vec![1.0, 0.0, 1.0]).unwrap();
        let r = PaymentRule::custom(p, PiecewiseLinearFn::zero());
        let violations = r.validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("sum not strictly increasing"));
        assert_eq!(violations[0].interval, (0.2, 0.3));
    }

    #[test]
    fn one_sided_slopes_at_kink() {
        let f = PiecewiseLinearFn::new(vec![0.0, 1.0], vec![2.0, 3.0]).unwrap();
        assert_eq!(f.slope_left(1.0), 2.0);
        assert_eq!(f.slope_right(1.0), 3.0);
        assert_eq!(f.eval(1.5), 2.0 + 1.5);
        assert!(PaymentRule::custom(f, PiecewiseLinearFn::zero()).has_kinks());
    }

    #[test]
    fn json_round_trip_named_and_custom() {
        let fp: PaymentRule = serde_json::from_str(r#"{"kind":"first_price"}"#).unwrap();
        assert!(fp.is_first_price());
        let custom = PaymentRule::custom(
            PiecewiseLinearFn::new(vec![0.0], vec![1.0]).unwrap(),
            PiecewiseLinearFn::new(vec![0.0], vec![1.0]).unwrap(),
        );
        let json = serde_json::to_string(&custom).unwrap();
        let back: PaymentRule = serde_json::from_str(&json).unwrap();
        assert_eq!(custom, back);
    }

    prop_compose! {
        fn arb_valid_rule()(
            pk in proptest::collection::vec(0.05f64..0.8, 0..3),
            wk in proptest::collection::vec(0.05f64..0.8, 0..3),
            ps in proptest::collection::vec(0.0f64..2.0, 3),
            ws in proptest::collection::vec(0.05f64..2.0, 3),
        ) -> PaymentRule {
            let build = |extra: &[f64], slopes: &[f64]| {
                let mut knots = vec![0.0];
                for e in extra {
                    knots.push(knots.last().unwrap() + e);
                }
                let slopes = slopes[..knots.len()].to_vec();
                PiecewiseLinearFn::new(knots, slopes).unwrap()
            };
            // winning slopes strictly positive so the total strictly increases
            PaymentRule::custom(build(&pk, &ps), build(&wk, &ws))
        }
    }

    proptest! {
        #[test]
        fn total_strictly_increasing(rule in arb_valid_rule(), b1 in 0.0f64..3.0, d in 1e-6f64..2.0) {
            prop_assume!(rule.validate().is_empty());
            let b2 = b1 + d;
            prop_assert!(rule.total(b2) > rule.total(b1));
        }
    }
}
