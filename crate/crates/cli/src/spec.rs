//! Problem specification JSON: distributions, payment rule and optional
//! numeric overrides.

use anyhow::{bail, Context, Result};
use rankbid::follower::TieBreaking;
use rankbid::oracle::GridSpec;
use rankbid::{CommitmentProblem, PaymentRule, PiecewiseDensity, Real, Tolerance};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub f1: PiecewiseDensity,
    pub f2: PiecewiseDensity,
    pub auction: PaymentRule,
    #[serde(default)]
    pub tie_breaking: Option<TieBreaking>,
    #[serde(default)]
    pub tolerances: Option<ToleranceSpec>,
    #[serde(default)]
    pub grids: Option<GridSpecOverride>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    pub abs_tol: Option<Real>,
    pub rel_tol: Option<Real>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpecOverride {
    pub leader_types: Option<usize>,
    pub follower_types: Option<usize>,
    pub bids: Option<usize>,
    pub bid_ceiling: Option<Real>,
}

impl ProblemSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read problem spec {}", path.display()))?;
        let spec: ProblemSpec = serde_json::from_str(&text)
            .with_context(|| format!("invalid problem spec {}", path.display()))?;
        Ok(spec)
    }

    /// Builds the validated problem, applying tolerance overrides.
    pub fn into_problem(self, tol_flag: Option<Real>) -> Result<(CommitmentProblem, GridSpecOverride)> {
        let mut tol = Tolerance::default();
        if let Some(t) = &self.tolerances {
            if let Some(v) = t.abs_tol {
                tol.abs_tol = v;
            }
            if let Some(v) = t.rel_tol {
                tol.rel_tol = v;
            }
            if let Some(v) = t.max_iter {
                tol.max_iter = v;
            }
        }
        if let Some(v) = tol_flag {
            tol.abs_tol = v;
            tol.rel_tol = v;
        }
        if !(tol.abs_tol > 0.0) || tol.rel_tol < 0.0 || tol.max_iter == 0 {
            bail!("tolerances must satisfy abs_tol > 0, rel_tol >= 0, max_iter >= 1");
        }
        let grids = self.grids.unwrap_or_default();
        let mut problem = CommitmentProblem::new(self.f1, self.f2, self.auction)
            .map_err(|e| anyhow::anyhow!("{e}"))?
            .with_tolerance(tol);
        if let Some(ties) = self.tie_breaking {
            problem = problem.with_tie_breaking(ties).map_err(|e| anyhow::anyhow!("{e}"))?;
        }
        Ok((problem, grids))
    }
}

/// Resolves the grid specification from spec-file defaults and CLI flags
/// (flags win).
pub fn resolve_grid(
    p: &CommitmentProblem,
    base: GridSpecOverride,
    n: Option<usize>,
    k: Option<usize>,
    m: Option<usize>,
    max_bid: Real,
) -> GridSpec {
    let (_, b2) = p.follower_support();
    GridSpec::with_ceiling(
        n.or(base.leader_types).unwrap_or(2000),
        k.or(base.follower_types).unwrap_or(2000),
        m.or(base.bids).unwrap_or(2000),
        base.bid_ceiling.unwrap_or(b2.max(max_bid).max(1e-9)),
    )
}
