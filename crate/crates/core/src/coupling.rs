//! Pathwise comparison of a walk excursion and its branching shadow.
//!
//! One excursion from 1 down to 0 and one `simulate_v` run, driven by the
//! same [`CoinSource`], consume the same flips. On excursions that finish
//! within the horizon the upcrossing counts must reproduce the branching
//! generations exactly while the branching process is alive, and collapse
//! to zero after it dies; on horizon-truncated excursions the upcrossings
//! can only lag the generations. [`couple_excursion`] runs both sides and
//! records the comparison level by level, with zero tolerance.

use serde::{Deserialize, Serialize};

use crate::branching::{simulate_v, BranchingPath, Population, VSimOptions};
use crate::env::{CoinSource, SiteSource};
use crate::error::CoreError;
use crate::walk::{excursion_upcrossings, TerminatedBy, WalkSummary};

/// One level of the comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupleLevel {
    pub k: i64,
    /// `U_k` from the walk.
    pub upcrossings: u64,
    /// `V_k` from the branching side.
    pub population: Population,
    /// Whether every generation before `k` was positive.
    pub alive_before: bool,
    /// Whether this level satisfied its identity.
    pub matched: bool,
}

/// Outcome of one coupled pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupleOutcome {
    pub summary: WalkSummary,
    pub path: BranchingPath,
    pub levels: Vec<CoupleLevel>,
    /// True when the excursion reached 0 within the horizon.
    pub finished: bool,
    /// Levels whose identity failed. Always 0 unless something is broken.
    pub violations: u64,
    /// On finished excursions: the branching side died at some level within
    /// the walk's range, as return-to-zero requires. Vacuously true on
    /// horizon-truncated pairs.
    pub extinction_matches: bool,
}

/// Runs the excursion and its branching shadow on shared coins and checks
/// the level-by-level identities.
///
/// On a finished excursion, level `k` must satisfy `U_k = V_k` while all
/// earlier generations are positive and `U_k = 0` afterwards; every level
/// is exact there, because an alive generation equals an upcrossing count
/// and the walk took at most `horizon` steps. On a truncated excursion the
/// requirement is `U_k <= V_k`, checked against the exact value or the
/// certified lower bound.
pub fn couple_excursion<S: SiteSource>(
    src: &S,
    coins: &CoinSource,
    horizon: u64,
) -> Result<CoupleOutcome, CoreError> {
    let summary = excursion_upcrossings(src, coins, horizon)?;
    let finished = summary.terminated_by == TerminatedBy::HitTarget;
    let k_max = summary.max_position.max(1);
    let path = simulate_v(
        src,
        coins,
        k_max as u64,
        VSimOptions::for_walk_horizon(horizon),
    )?;

    let mut levels = Vec::with_capacity(k_max as usize);
    let mut violations = 0u64;
    let mut alive = true; // V_0 = 1
    for k in 1..=k_max {
        let u_k = summary.upcrossings.get(&k).copied().unwrap_or(0);
        let v_k = path.values[k as usize];
        let matched = if finished {
            // Finished excursions admit no slack in either direction.
            if alive {
                v_k.is_exact() && v_k.value() == u_k
            } else {
                u_k == 0
            }
        } else {
            u_k <= v_k.value()
        };
        if !matched {
            violations += 1;
        }
        levels.push(CoupleLevel {
            k,
            upcrossings: u_k,
            population: v_k,
            alive_before: alive,
            matched,
        });
        alive = alive && v_k.value() > 0 && v_k.is_exact();
    }

    let extinction_matches = if finished {
        path.first_zero.is_some_and(|k| k as i64 <= k_max)
    } else {
        true
    };

    Ok(CoupleOutcome {
        summary,
        path,
        levels,
        finished,
        violations,
        extinction_matches,
    })
}
