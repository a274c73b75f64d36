//! The excited walk itself: stepping, stopping, and summary bookkeeping.
//!
//! A walk on the integers starts at `start` and, on the i-th visit to site
//! `z`, steps right if `i` is within the site's cookie count and otherwise
//! flips the site's background coin. Runs stop at the first step that lands
//! on a stop target, or at the step horizon.
//!
//! Because steps are nearest-neighbor, the visited set is always the
//! contiguous interval `[min_position, max_position]`, so per-site state
//! (cached site values, visit counters, upcrossing counters) lives in a
//! deque indexed by offset from the lowest visited site. Memory stays
//! proportional to the visited range no matter how long the run is.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::env::{flip_given_site, CoinSource, Site, SiteSource};
use crate::error::CoreError;

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminatedBy {
    /// The walk landed on one of the stop targets.
    HitTarget,
    /// The step cap was reached first.
    Horizon,
}

/// Live state of one walk.
#[derive(Debug, Clone)]
pub struct WalkState {
    position: i64,
    steps: u64,
    lo: i64,
    cells: VecDeque<Cell>,
}

#[derive(Debug, Clone)]
struct Cell {
    site: Site,
    visits: u64,
    ups: u64,
}

/// Everything recorded about one finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSummary {
    pub start: i64,
    pub final_position: i64,
    pub steps_taken: u64,
    /// First hitting step for each stop target; `None` means never hit.
    pub hit_times: BTreeMap<i64, Option<u64>>,
    /// First step `n >= 1` with `S_n = 0`, whether or not 0 was a target.
    pub t0: Option<u64>,
    /// Number of steps `n >= 1` with `S_n = start`.
    pub returns_to_origin: u64,
    pub min_position: i64,
    pub max_position: i64,
    /// Upcrossing counts `U_k`, recorded only for runs started at 1.
    ///
    /// `U_k` is the number of steps from `k` to `k+1` before termination.
    /// Only nonzero entries are stored, plus the conventional `U_0 = 1`.
    pub upcrossings: BTreeMap<i64, u64>,
    pub terminated_by: TerminatedBy,
}

impl WalkState {
    /// A walk standing at `start`, with the start counted as one arrival.
    pub fn new<S: SiteSource>(src: &S, start: i64) -> Self {
        let mut cells = VecDeque::with_capacity(64);
        cells.push_back(Cell {
            site: src.site(start),
            visits: 1,
            ups: 0,
        });
        WalkState {
            position: start,
            steps: 0,
            lo: start,
            cells,
        }
    }

    pub fn position(&self) -> i64 {
        self.position
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Completed arrivals at `z`, including the start but not pending moves.
    pub fn visits(&self, z: i64) -> u64 {
        let idx = z - self.lo;
        if idx < 0 || idx as usize >= self.cells.len() {
            0
        } else {
            self.cells[idx as usize].visits
        }
    }

    /// Right-steps taken from `z` so far.
    pub fn upcrossings_at(&self, z: i64) -> u64 {
        let idx = z - self.lo;
        if idx < 0 || idx as usize >= self.cells.len() {
            0
        } else {
            self.cells[idx as usize].ups
        }
    }

    pub fn min_position(&self) -> i64 {
        self.lo
    }

    pub fn max_position(&self) -> i64 {
        self.lo + self.cells.len() as i64 - 1
    }

    fn cell_index<S: SiteSource>(&mut self, src: &S, z: i64) -> usize {
        if z < self.lo {
            // Nearest-neighbor moves extend the range one site at a time.
            debug_assert_eq!(z, self.lo - 1);
            self.cells.push_front(Cell {
                site: src.site(z),
                visits: 0,
                ups: 0,
            });
            self.lo = z;
            return 0;
        }
        let idx = (z - self.lo) as usize;
        if idx >= self.cells.len() {
            debug_assert_eq!(idx, self.cells.len());
            self.cells.push_back(Cell {
                site: src.site(z),
                visits: 0,
                ups: 0,
            });
        }
        idx
    }

    /// Advances one step; returns the signed move.
    pub fn step<S: SiteSource>(&mut self, src: &S, coins: &CoinSource) -> i64 {
        let z = self.position;
        let idx = (z - self.lo) as usize;
        let cell = &mut self.cells[idx];
        let i = cell.visits;
        let dir = flip_given_site(&cell.site, coins, z, i);
        if dir == 1 {
            cell.ups += 1;
        }
        let dest = z + dir;
        self.position = dest;
        self.steps += 1;
        let dest_idx = self.cell_index(src, dest);
        self.cells[dest_idx].visits += 1;
        dir
    }
}

/// One step of the walk dynamics, exposed as a free function.
pub fn walk_step<S: SiteSource>(state: &mut WalkState, src: &S, coins: &CoinSource) -> i64 {
    state.step(src, coins)
}

/// Runs a walk from `start` until it lands on a stop target or exhausts
/// `horizon` steps.
///
/// A stop target equal to the start only counts from step 1 on, so
/// `run_walk(.., start, .., &[start])` measures the first return. When
/// `start = 1`, upcrossing counts are recorded (sparsely, `U_0 = 1` by
/// convention); for any other start the table is left empty.
pub fn run_walk<S: SiteSource>(
    src: &S,
    coins: &CoinSource,
    start: i64,
    horizon: u64,
    stop_targets: &[i64],
) -> Result<WalkSummary, CoreError> {
    if horizon == 0 {
        return Err(CoreError::InvalidArgument(
            "horizon must be at least 1".into(),
        ));
    }
    let mut targets: Vec<i64> = stop_targets.to_vec();
    targets.sort_unstable();
    targets.dedup();

    let mut state = WalkState::new(src, start);
    let mut hit_times: BTreeMap<i64, Option<u64>> =
        targets.iter().map(|&t| (t, None)).collect();
    let mut t0: Option<u64> = None;
    let mut returns_to_origin = 0u64;
    let mut terminated_by = TerminatedBy::Horizon;

    while state.steps < horizon {
        state.step(src, coins);
        let pos = state.position;
        let n = state.steps;
        if pos == 0 && t0.is_none() {
            t0 = Some(n);
        }
        if pos == start {
            returns_to_origin += 1;
        }
        if targets.binary_search(&pos).is_ok() {
            if let Some(slot) = hit_times.get_mut(&pos) {
                if slot.is_none() {
                    *slot = Some(n);
                }
            }
            terminated_by = TerminatedBy::HitTarget;
            break;
        }
    }

    let mut upcrossings = BTreeMap::new();
    if start == 1 {
        upcrossings.insert(0, 1);
        for z in state.min_position()..=state.max_position() {
            if z >= 1 {
                let ups = state.upcrossings_at(z);
                if ups > 0 {
                    upcrossings.insert(z, ups);
                }
            }
        }
    }

    Ok(WalkSummary {
        start,
        final_position: state.position,
        steps_taken: state.steps,
        hit_times,
        t0,
        returns_to_origin,
        min_position: state.min_position(),
        max_position: state.max_position(),
        upcrossings,
        terminated_by,
    })
}

/// One excursion from 1 down to 0, with the full upcrossing table.
///
/// `U_k` counts the steps from `k` to `k+1` before the walk first hits 0,
/// with `U_0 = 1` by convention.
pub fn excursion_upcrossings<S: SiteSource>(
    src: &S,
    coins: &CoinSource,
    horizon: u64,
) -> Result<WalkSummary, CoreError> {
    run_walk(src, coins, 1, horizon, &[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{
        coin_flip, CookieLaw, Environment, EnvironmentSpec, HalfLineMask, PLaw,
    };

    fn env(p_law: PLaw, cookie_law: CookieLaw, mask: HalfLineMask, seed: u64) -> Environment {
        let spec = EnvironmentSpec::new(p_law, cookie_law, mask).unwrap();
        Environment::new(spec, seed).unwrap()
    }

    fn plain_env(p: f64, seed: u64) -> Environment {
        env(
            PLaw::Fixed { p },
            CookieLaw::NoCookies,
            HalfLineMask::Everywhere,
            seed,
        )
    }

    #[test]
    fn horizon_zero_is_rejected() {
        let e = plain_env(0.5, 1);
        let coins = CoinSource::new(1, 0);
        assert!(run_walk(&e, &coins, 0, 0, &[]).is_err());
    }

    #[test]
    fn cookie_sites_always_step_right() {
        let e = env(
            PLaw::Fixed { p: 0.01 },
            CookieLaw::FixedCount { m: 40 },
            HalfLineMask::Everywhere,
            9,
        );
        let coins = CoinSource::new(9, 0);
        // Every site holds 40 cookies, so the first 40 steps are all forced
        // right: the walk arrives at each new site with its cookies intact.
        let summary = run_walk(&e, &coins, 0, 40, &[]).unwrap();
        assert_eq!(summary.final_position, 40);
        assert_eq!(summary.min_position, 0);
    }

    #[test]
    fn visit_counters_increment_once_per_arrival() {
        let e = plain_env(0.5, 33);
        let coins = CoinSource::new(33, 0);
        let mut state = WalkState::new(&e, 0);
        assert_eq!(state.visits(0), 1);
        let mut expected: BTreeMap<i64, u64> = BTreeMap::new();
        expected.insert(0, 1);
        for _ in 0..5000 {
            state.step(&e, &coins);
            *expected.entry(state.position()).or_insert(0) += 1;
        }
        for (&z, &count) in &expected {
            assert_eq!(state.visits(z), count, "site {z}");
        }
        let total: u64 = expected.values().sum();
        assert_eq!(total, state.steps() + 1);
    }

    #[test]
    fn near_certain_right_steps_match_their_probability() {
        let p = 0.99;
        let e = plain_env(p, 77);
        let coins = CoinSource::new(77, 0);
        let n = 100_000u64;
        // Flip the background coin at one site across visit indices.
        let rights = (1..=n).filter(|&i| coin_flip(&e, &coins, 0, i) == 1).count() as f64;
        let freq = rights / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * se, "freq {freq}");
    }

    #[test]
    fn left_drift_background_sends_the_walk_down() {
        // p = 1/3 gives E[log rho] = ln 2 > 0: walks drift to -infinity.
        let mut negative = 0;
        for rep in 0..200u64 {
            let e = plain_env(1.0 / 3.0, 0x50F0);
            let coins = CoinSource::new(0x50F0, rep);
            let summary = run_walk(&e, &coins, 0, 100_000, &[]).unwrap();
            if summary.final_position < 0 {
                negative += 1;
            }
        }
        assert!(negative >= 198, "only {negative}/200 ended negative");
    }

    #[test]
    fn symmetric_walk_has_centered_endpoint_distribution() {
        let n_reps = 10_000u64;
        let steps = 1000u64;
        let mut sum = 0i64;
        for rep in 0..n_reps {
            let e = plain_env(0.5, 0xA11CE);
            let coins = CoinSource::new(0xA11CE, rep);
            let summary = run_walk(&e, &coins, 0, steps, &[]).unwrap();
            sum += summary.final_position;
        }
        let mean = sum as f64 / n_reps as f64;
        // sd of one endpoint is sqrt(steps); four standard errors of the mean.
        let tol = 4.0 * (steps as f64).sqrt() / (n_reps as f64).sqrt();
        assert!(mean.abs() < tol, "mean {mean} tol {tol}");
    }

    #[test]
    fn one_step_excursion_has_empty_upcrossing_table() {
        let e = plain_env(1.0 / 3.0, 0);
        // Find a replica whose first flip at site 1 is a failure.
        let coins = (0..64)
            .map(|tag| CoinSource::new(0, tag))
            .find(|c| coin_flip(&e, c, 1, 1) == -1)
            .expect("some stream starts with a left step");
        let summary = excursion_upcrossings(&e, &coins, 1000).unwrap();
        assert_eq!(summary.steps_taken, 1);
        assert_eq!(summary.t0, Some(1));
        assert_eq!(summary.final_position, 0);
        assert_eq!(summary.terminated_by, TerminatedBy::HitTarget);
        assert_eq!(summary.upcrossings.len(), 1);
        assert_eq!(summary.upcrossings.get(&0), Some(&1));
        assert_eq!(summary.returns_to_origin, 0);
    }

    #[test]
    fn upcrossings_count_right_steps_above_zero() {
        let e = env(
            PLaw::Fixed { p: 0.45 },
            CookieLaw::FixedCount { m: 1 },
            HalfLineMask::PositiveOnly,
            0xE5C,
        );
        for tag in 0..20u64 {
            let coins = CoinSource::new(0xE5C, tag);
            let summary = excursion_upcrossings(&e, &coins, 200_000).unwrap();
            // Replay the same path and count right-steps from sites >= 1.
            let mut state = WalkState::new(&e, 1);
            let mut rights = 0u64;
            for _ in 0..summary.steps_taken {
                let z = state.position();
                let dir = state.step(&e, &coins);
                if z >= 1 && dir == 1 {
                    rights += 1;
                }
            }
            let table_sum: u64 = summary
                .upcrossings
                .iter()
                .filter(|&(&k, _)| k >= 1)
                .map(|(_, &u)| u)
                .sum();
            assert_eq!(table_sum, rights, "tag {tag}");
            for (&k, &u) in &summary.upcrossings {
                assert!(u <= summary.steps_taken, "U_{k} = {u} too large");
            }
        }
    }

    #[test]
    fn replaying_a_seed_reproduces_the_summary_exactly() {
        let e = env(
            PLaw::Fixed { p: 1.0 / 3.0 },
            CookieLaw::ExampleLaw {
                lambda: 1.0,
                beta: 1.0,
            },
            HalfLineMask::Everywhere,
            0xD00D,
        );
        let coins = CoinSource::new(0xD00D, 4);
        let a = run_walk(&e, &coins, 0, 50_000, &[-40]).unwrap();
        let b = run_walk(&e, &coins, 0, 50_000, &[-40]).unwrap();
        assert_eq!(a, b);
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn stop_targets_freeze_the_first_hit_time() {
        let e = plain_env(1.0 / 3.0, 0xCAFE);
        let coins = CoinSource::new(0xCAFE, 0);
        let summary = run_walk(&e, &coins, 0, 1_000_000, &[-5, 5]).unwrap();
        assert_eq!(summary.terminated_by, TerminatedBy::HitTarget);
        let hit = summary.hit_times.get(&summary.final_position).unwrap();
        assert_eq!(*hit, Some(summary.steps_taken));
        assert!(summary.final_position == -5 || summary.final_position == 5);
        // The other target was never reached.
        let other = if summary.final_position == -5 { 5 } else { -5 };
        assert_eq!(summary.hit_times.get(&other), Some(&None));
        assert!(summary.min_position >= -5 && summary.max_position <= 5);
    }

    #[test]
    fn returns_to_origin_counts_every_revisit() {
        let e = plain_env(0.5, 0xFACE);
        let coins = CoinSource::new(0xFACE, 2);
        let summary = run_walk(&e, &coins, 0, 10_000, &[]).unwrap();
        // Replay and count by hand.
        let mut state = WalkState::new(&e, 0);
        let mut manual = 0u64;
        let mut first: Option<u64> = None;
        for _ in 0..10_000 {
            state.step(&e, &coins);
            if state.position() == 0 {
                manual += 1;
                first.get_or_insert(state.steps());
            }
        }
        assert_eq!(summary.returns_to_origin, manual);
        assert_eq!(summary.t0, first);
        assert!(manual > 0, "symmetric walk should revisit 0 in 10^4 steps");
    }

    #[test]
    fn negative_cookie_mask_still_lets_the_walk_descend() {
        // Cookies on the negative half line slow the left drift but do not
        // stop it: the walk still reaches every site down to -10.
        let e = env(
            PLaw::Fixed { p: 1.0 / 3.0 },
            CookieLaw::ExampleLaw {
                lambda: 2.0,
                beta: 3.0,
            },
            HalfLineMask::NegativeOnly,
            0x0DD5,
        );
        let mut reached = 0;
        for rep in 0..100u64 {
            let coins = CoinSource::new(0x0DD5, rep);
            let summary = run_walk(&e, &coins, 0, 10_000_000, &[-10]).unwrap();
            if summary.terminated_by == TerminatedBy::HitTarget {
                assert_eq!(summary.final_position, -10);
                assert_eq!(summary.min_position, -10);
                reached += 1;
            }
        }
        assert!(reached >= 99, "only {reached}/100 runs reached -10");
    }

    #[test]
    fn walks_started_away_from_one_skip_the_upcrossing_table() {
        let e = plain_env(0.5, 5);
        let coins = CoinSource::new(5, 0);
        let summary = run_walk(&e, &coins, 0, 1000, &[]).unwrap();
        assert!(summary.upcrossings.is_empty());
    }
}
