//! Simulation and analysis of excited random walks in random environments.
//!
//! The model: a nearest-neighbour walk on the integers where site `z` carries
//! an i.i.d. background transition probability `p_z` and a stack of `M_z`
//! cookies. Each of the first `M_z` visits to `z` forces a step to the right;
//! afterwards the walk moves right with probability `p_z`. The background is
//! drawn so that the cookie-free walk drifts to the left, and the interesting
//! question is whether the cookie stacks are heavy enough to turn that drift
//! around.
//!
//! The crate provides four building blocks:
//!
//! * [`env`] — environments as pure functions of a master seed, plus the
//!   counter-based coin flips that make every path replayable;
//! * [`walk`] — the walk engine with visit counts, hitting times and
//!   upcrossing records;
//! * [`branching`] — the subcritical branching process with immigration that
//!   mirrors the walk's excursions, and the random difference equation it
//!   converges to;
//! * [`analysis`] — closed-form hitting probabilities, a linear-solve oracle
//!   for them, recurrence/transience classifiers and small statistical tools.
//!
//! [`coupling`] ties the first three together: it runs a walk excursion and
//! the branching process on the *same* coin flips and checks the upcrossing
//! identity pathwise.

pub mod analysis;
pub mod branching;
pub mod coupling;
pub mod env;
pub mod error;
pub mod seedmix;
pub mod walk;

pub use analysis::{
    binomial_interval, classify_regime, example_tail_descriptor, hit_prob_closed,
    hit_prob_oracle, power_series_diagnostic, prob_a_n, two_sample_test, EnvWindow, RegimeLabel,
    TailDescriptor, TestOutcome, WindowRecord,
};
pub use branching::{
    bpre_classify, bpre_step, offspring_rng, rde_step, sample_generation_env, simulate_rde,
    simulate_v, simulate_w, simulate_z, simulate_z_decomposed, BranchingPath, Population,
    RDEPath, VSimOptions,
};
pub use coupling::{couple_excursion, CoupleLevel, CoupleOutcome};
pub use env::{
    coin_flip, cookie_log_tail, flip_given_site, mean_log_rho, parse_kv_text, rho,
    sample_cookie_example, CoinSource, CookieLaw, Environment, EnvironmentSpec, HalfLineMask,
    PLaw, Site, SiteSource, COOKIE_CAP,
};
pub use error::CoreError;
pub use walk::{
    excursion_upcrossings, run_walk, walk_step, TerminatedBy, WalkState, WalkSummary,
};
