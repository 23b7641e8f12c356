//! Solver for optimal leader commitments in two-bidder rank-and-bid auctions.
//!
//! A *rank-and-bid* auction allocates a single item to the highest bidder and
//! charges each bidder a participation payment `p^p(bid)` plus, on winning, a
//! winning payment `p^w(bid)`. First-price (`p^p = 0`, `p^w = id`) and all-pay
//! (`p^p = id`, `p^w = 0`) auctions are the two classic members. The leader
//! announces a type-to-bid map before the follower moves; the follower knows
//! the map (not the realized type) and best responds.
//!
//! The pipeline implemented here: sort an arbitrary strategy into a monotone
//! one ([`strategy::sort_strategy`]), smooth it through equal-utility curves
//! ([`smoothing::smooth`]), extract the equal-bid function `g`
//! ([`smoothing::equal_bid`]), and optimize over step-valued `g`
//! ([`optimizer`]). An independent discretized game ([`oracle`]) verifies
//! every solver output by brute force.

pub mod auction;
pub mod distributions;
pub mod follower;
pub mod numerics;
pub mod oracle;
pub mod optimizer;
pub mod smoothing;
pub mod strategy;

/// Scalar type used by the domain layer. The kernels in [`numerics`] stay
/// generic over `num_traits::Float`; everything above them works in `Real`
/// because the accuracy contracts (1e-6..1e-9) need double precision.
pub type Real = f64;

/// Concrete tolerance bundle for the domain layer.
pub type Tol = numerics::Tolerance<Real>;

#[cfg(test)]
pub(crate) mod testutil;

pub use auction::{PaymentRule, PiecewiseLinearFn, RuleViolation};
pub use distributions::PiecewiseDensity;
pub use follower::{CommitmentProblem, ResponseProfile};
pub use numerics::Tolerance;
pub use optimizer::{Method, Solution};
pub use smoothing::EqualBid;
pub use strategy::{Interpolation, MonotoneCurve, RawStrategy};
