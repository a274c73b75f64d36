//! Branching processes with immigration, and the walk-coupled variant.
//!
//! Three related processes live here:
//!
//! * `simulate_z` / `bpre_step`: a branching process in random environment
//!   with immigration. Generation `n` is the sum of one geometric offspring
//!   draw per parent plus that generation's immigrants.
//! * `simulate_v`: the same kind of process, but driven by the identical
//!   coin flips a single walk excursion consumes. Offspring counts are read
//!   off as runs of successes between consecutive failures at each site, so
//!   a walk and a `simulate_v` call sharing one [`CoinSource`] can be
//!   compared flip for flip.
//! * `rde_step` / `simulate_w`: the real-valued difference equation
//!   `X_{n+1} = a_{n+1} X_n + M_{n+1}` and its reordered partner series
//!   `W_n`, which share one distribution per fixed `n`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::RegimeLabel;
use crate::env::{CoinSource, EnvironmentSpec, SiteSource};
use crate::error::CoreError;
use crate::seedmix::{mix, stream, unit_open};

/// A generation size that may be known only as a lower bound.
///
/// Walk-coupled runs cap their flip scanning (see [`VSimOptions`]); a level
/// whose scan hit the cap reports `AtLeast(b)`, meaning the true size is
/// `>= b` and `b` already exceeds anything the coupled walk could have used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Population {
    Exact(u64),
    AtLeast(u64),
}

impl Population {
    /// The exact size or the certified lower bound.
    pub fn value(&self) -> u64 {
        match *self {
            Population::Exact(v) | Population::AtLeast(v) => v,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Population::Exact(_))
    }
}

/// Trajectory of one branching run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingPath {
    /// Generation sizes, starting with the single ancestor at index 0.
    pub values: Vec<Population>,
    /// First generation with exactly zero individuals, if any.
    pub first_zero: Option<usize>,
    /// Offspring parameter used by generation `k` (index `k - 1`).
    pub offspring_params: Vec<f64>,
    /// Immigrants joining generation `k` (index `k - 1`).
    pub immigrations: Vec<u64>,
    /// Coin flips scanned per generation by walk-coupled runs; all zeros
    /// for draws that use an ordinary RNG.
    pub flips_scanned: Vec<u64>,
}

impl BranchingPath {
    fn push(&mut self, value: Population, p: f64, m: u64, flips: u64) {
        if self.first_zero.is_none() && value == Population::Exact(0) {
            self.first_zero = Some(self.values.len());
        }
        self.values.push(value);
        self.offspring_params.push(p);
        self.immigrations.push(m);
        self.flips_scanned.push(flips);
    }

    fn with_ancestor() -> Self {
        BranchingPath {
            values: vec![Population::Exact(1)],
            first_zero: None,
            offspring_params: Vec::new(),
            immigrations: Vec::new(),
            flips_scanned: Vec::new(),
        }
    }
}

/// Trajectory of the difference equation together with its partner series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDEPath {
    /// `X_0 = 0, X_1, ..., X_n`.
    pub x_values: Vec<f64>,
    /// `W_n` for the same multipliers and immigrations.
    pub w_value: f64,
    pub alphas: Vec<f64>,
    pub immigrations: Vec<f64>,
}

/// Controls how much flip scanning a walk-coupled run may do per level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VSimOptions {
    /// Per-level cap on scanned successes and on scanned failures.
    ///
    /// A level that reaches the cap in either count stops scanning and
    /// reports [`Population::AtLeast`]. For comparison against a walk run
    /// with step horizon `h`, any cap `>= h + 1` keeps the reported bound at
    /// or above every upcrossing count the walk can produce.
    pub scan_cap: u64,
    /// Stop at the first generation that is exactly zero instead of
    /// continuing to `k_max`. Coupling checks want the full trajectory;
    /// extinction studies only need the prefix.
    pub stop_at_extinction: bool,
}

impl Default for VSimOptions {
    fn default() -> Self {
        // Effectively uncapped: every level is scanned exactly.
        VSimOptions {
            scan_cap: u64::MAX,
            stop_at_extinction: false,
        }
    }
}

impl VSimOptions {
    /// Cap suitable for comparing against a walk with the given horizon.
    pub fn for_walk_horizon(horizon: u64) -> Self {
        VSimOptions {
            scan_cap: horizon.saturating_add(1),
            ..VSimOptions::default()
        }
    }
}

/// One generation of branching: `z` parents with geometric offspring plus
/// `m` immigrants.
///
/// The offspring law is geometric on `{0, 1, 2, ...}` with
/// `P[xi = n] = p^n (1 - p)`, so one parent expects `p / (1 - p)` children.
/// The sum over `z` parents is drawn as one negative binomial variate:
/// directly for small `z`, through a gamma-Poisson mixture for large `z`,
/// and through a normal tail approximation once the mean passes 10^12
/// (far outside any regime the library studies; results saturate at
/// `u64::MAX` rather than wrapping).
pub fn bpre_step<R: Rng + ?Sized>(
    z: u64,
    p: f64,
    m: u64,
    rng: &mut R,
) -> Result<u64, CoreError> {
    if !(p.is_finite() && p > 0.0 && p < 1.0) {
        return Err(CoreError::OutOfDomain {
            name: "p",
            range: "(0, 1)",
            value: p,
        });
    }
    Ok(negative_binomial(z, p, rng).saturating_add(m))
}

/// Sum of `r` iid geometric(`p`) draws on `{0, 1, ...}`.
fn negative_binomial<R: Rng + ?Sized>(r: u64, p: f64, rng: &mut R) -> u64 {
    if r == 0 {
        return 0;
    }
    if r <= 16 {
        let ln_p = p.ln();
        let mut total = 0u64;
        for _ in 0..r {
            let u: f64 = rng.sample(rand::distributions::OpenClosed01);
            total = total.saturating_add((u.ln() / ln_p).floor() as u64);
        }
        return total;
    }
    let mean = r as f64 * p / (1.0 - p);
    if mean <= 1e12 {
        // Negative binomial as a gamma-mixed Poisson.
        let gamma = rand_distr::Gamma::new(r as f64, p / (1.0 - p))
            .expect("gamma parameters are positive");
        let lambda: f64 = rng.sample(gamma);
        if lambda <= 0.0 || !lambda.is_finite() {
            return 0;
        }
        let poisson = rand_distr::Poisson::new(lambda).expect("lambda is positive and finite");
        let draw: f64 = rng.sample(poisson);
        return draw as u64;
    }
    // Central-limit tail: relative error O(r^{-1/2}) with r > 10^12 / mu.
    let sd = (r as f64 * p).sqrt() / (1.0 - p);
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    let draw = mean + sd * z;
    if draw <= 0.0 {
        0
    } else {
        draw.round() as u64
    }
}

/// Runs the immigration process through the given per-generation
/// environment: `Z_0 = 1`, then one [`bpre_step`] per `(p, m)` pair.
pub fn simulate_z<R: Rng + ?Sized>(
    p_seq: &[f64],
    m_seq: &[u64],
    rng: &mut R,
) -> Result<BranchingPath, CoreError> {
    if p_seq.len() != m_seq.len() {
        return Err(CoreError::InvalidArgument(format!(
            "offspring and immigration sequences differ in length ({} vs {})",
            p_seq.len(),
            m_seq.len()
        )));
    }
    let mut path = BranchingPath::with_ancestor();
    let mut z = 1u64;
    for (&p, &m) in p_seq.iter().zip(m_seq) {
        z = bpre_step(z, p, m, rng)?;
        path.push(Population::Exact(z), p, m, 0);
    }
    Ok(path)
}

/// Generation `n` rebuilt from independent single-origin processes.
///
/// The ancestor founds one ordinary (immigration-free) branching process;
/// the immigrants of generation `j` found another, which reproduces only
/// through the remaining generations `j+1, ..., n`. The returned value is
/// the sum of the `n + 1` final generation sizes, which has the same law as
/// the direct recursion's `Z_n`.
pub fn simulate_z_decomposed<R: Rng + ?Sized>(
    p_seq: &[f64],
    m_seq: &[u64],
    n: usize,
    rng: &mut R,
) -> Result<u64, CoreError> {
    if p_seq.len() < n || m_seq.len() < n {
        return Err(CoreError::InvalidArgument(format!(
            "need at least {n} generations of environment, got {} and {}",
            p_seq.len(),
            m_seq.len()
        )));
    }
    // Founders: the ancestor at time 0, then each generation's immigrants.
    let mut total = plain_branching(1, &p_seq[..n], rng)?;
    for j in 1..=n {
        let founders = m_seq[j - 1];
        total = total.saturating_add(plain_branching(founders, &p_seq[j..n], rng)?);
    }
    Ok(total)
}

fn plain_branching<R: Rng + ?Sized>(
    start: u64,
    params: &[f64],
    rng: &mut R,
) -> Result<u64, CoreError> {
    let mut z = start;
    for &p in params {
        if z == 0 {
            break;
        }
        z = bpre_step(z, p, 0, rng)?;
    }
    Ok(z)
}

/// Runs the walk-coupled process over sites `1..=k_max`.
///
/// Level `k` reads the site's cookie count as its immigration and scans the
/// flips `coin_flip(k, i)` for `i` beyond the cookies, in increasing `i`,
/// exactly as a walk would consume them. The offspring sum for the level is
/// the number of successes seen before the `V_{k-1}`-th failure.
///
/// Levels whose parents are only known as a lower bound, or whose scan hits
/// `opts.scan_cap` successes or failures, report [`Population::AtLeast`];
/// see [`VSimOptions::for_walk_horizon`] for why the bound still dominates
/// the coupled walk's upcrossing counts. With the default options every
/// level is exact.
pub fn simulate_v<S: SiteSource>(
    src: &S,
    coins: &CoinSource,
    k_max: u64,
    opts: VSimOptions,
) -> Result<BranchingPath, CoreError> {
    if k_max == 0 {
        return Err(CoreError::InvalidArgument(
            "k_max must be at least 1".into(),
        ));
    }
    let cap = opts.scan_cap;
    let mut path = BranchingPath::with_ancestor();
    let mut prev = Population::Exact(1);
    for k in 1..=k_max as i64 {
        let site = src.site(k);
        let m = site.m;
        let parents = prev.value();
        let mut successes = 0u64;
        let mut failures = 0u64;
        let mut capped = false;
        let mut i = m; // next flip index is i + 1
        while failures < parents {
            if successes >= cap || failures >= cap {
                capped = true;
                break;
            }
            i += 1;
            if coins.unit(k, i) < site.p {
                successes += 1;
            } else {
                failures += 1;
            }
        }
        let total = successes.saturating_add(m);
        prev = if prev.is_exact() && !capped {
            Population::Exact(total)
        } else {
            Population::AtLeast(total)
        };
        path.push(prev, site.p, m, successes + failures);
        if opts.stop_at_extinction && prev == Population::Exact(0) {
            break;
        }
    }
    Ok(path)
}

/// One step of the difference equation: `a * x + m`.
pub fn rde_step(x: f64, alpha: f64, m: f64) -> f64 {
    debug_assert!(x >= 0.0 && alpha > 0.0 && m >= 0.0);
    alpha * x + m
}

/// The partner series `W_n = sum_{k=1..n} (prod_{j<k} a_j) m_k`,
/// accumulated left to right.
pub fn simulate_w(alphas: &[f64], ms: &[f64], n: usize) -> Result<f64, CoreError> {
    if alphas.len() < n || ms.len() < n {
        return Err(CoreError::InvalidArgument(format!(
            "need {n} terms, got {} multipliers and {} immigrations",
            alphas.len(),
            ms.len()
        )));
    }
    let mut prefix = 1.0;
    let mut w = 0.0;
    for k in 0..n {
        w += prefix * ms[k];
        prefix *= alphas[k];
    }
    Ok(w)
}

/// Runs the difference equation from `X_0 = 0` and records the partner
/// series for the same coefficients.
pub fn simulate_rde(alphas: &[f64], ms: &[f64]) -> Result<RDEPath, CoreError> {
    if alphas.len() != ms.len() {
        return Err(CoreError::InvalidArgument(format!(
            "multiplier and immigration sequences differ in length ({} vs {})",
            alphas.len(),
            ms.len()
        )));
    }
    let mut x_values = Vec::with_capacity(alphas.len() + 1);
    let mut x = 0.0;
    x_values.push(x);
    for (&a, &m) in alphas.iter().zip(ms) {
        x = rde_step(x, a, m);
        x_values.push(x);
    }
    let w_value = simulate_w(alphas, ms, alphas.len())?;
    Ok(RDEPath {
        x_values,
        w_value,
        alphas: alphas.to_vec(),
        immigrations: ms.to_vec(),
    })
}

/// Classifies a subcritical immigration process from the tail behavior of
/// `t * P[log M > t]` against the decay rate `-E[log mu]`.
///
/// Growth wins (the process escapes to infinity, reported as
/// [`RegimeLabel::RightTransient`]) when the liminf exceeds the decay rate;
/// decay wins ([`RegimeLabel::Recurrent`]) when the limsup stays below it.
/// Between the two nothing is claimed.
pub fn bpre_classify(
    tail_liminf: f64,
    tail_limsup: f64,
    mean_log_mu: f64,
) -> Result<RegimeLabel, CoreError> {
    if !(mean_log_mu < 0.0) {
        return Err(CoreError::Unsupported(format!(
            "only subcritical offspring means are handled (E[log mu] = {mean_log_mu} >= 0)"
        )));
    }
    if tail_liminf < 0.0 || tail_limsup < 0.0 || tail_liminf > tail_limsup {
        return Err(CoreError::InvalidArgument(format!(
            "tail bounds must satisfy 0 <= liminf <= limsup, got ({tail_liminf}, {tail_limsup})"
        )));
    }
    let threshold = -mean_log_mu;
    if tail_liminf > threshold {
        Ok(RegimeLabel::RightTransient)
    } else if tail_limsup < threshold {
        Ok(RegimeLabel::Recurrent)
    } else {
        Ok(RegimeLabel::Indeterminate)
    }
}

/// Per-generation environment draws for annealed branching runs.
///
/// Generation `j` (1-based) uses `p_j` and `M_j` derived from the master
/// seed, the replica index, and `j`, so replicas are independent and any
/// generation can be re-derived without storing the sequence. The spec's
/// half-line mask is ignored: generations are not sites.
pub fn sample_generation_env(
    spec: &EnvironmentSpec,
    master_seed: u64,
    replica: u64,
    n: usize,
) -> (Vec<f64>, Vec<u64>) {
    let mut p_seq = Vec::with_capacity(n);
    let mut m_seq = Vec::with_capacity(n);
    for j in 1..=n as u64 {
        let u_p = unit_open(mix(&[master_seed, stream::GEN_P, replica, j]));
        let u_m = unit_open(mix(&[master_seed, stream::GEN_M, replica, j]));
        p_seq.push(spec.p_law.sample(u_p));
        m_seq.push(spec.cookie_law.sample(u_m));
    }
    (p_seq, m_seq)
}

/// Deterministic offspring RNG for a replica.
pub fn offspring_rng(master_seed: u64, replica: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(&[master_seed, stream::OFFSPRING_RNG, replica]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::two_sample_test;
    use crate::env::{CookieLaw, Environment, HalfLineMask, PLaw};
    use proptest::prelude::*;

    #[test]
    fn extinction_absorbs_without_immigration() {
        let mut rng = offspring_rng(1, 0);
        assert_eq!(bpre_step(0, 0.5, 0, &mut rng).unwrap(), 0);
        assert_eq!(bpre_step(0, 0.5, 7, &mut rng).unwrap(), 7);
        assert!(bpre_step(1, 0.0, 0, &mut rng).is_err());
        assert!(bpre_step(1, 1.0, 0, &mut rng).is_err());
    }

    #[test]
    fn offspring_of_a_hundred_parents_average_fifty() {
        let mut rng = offspring_rng(2, 0);
        let n = 100_000u64;
        let mut sum = 0u64;
        for _ in 0..n {
            sum += bpre_step(100, 1.0 / 3.0, 0, &mut rng).unwrap();
        }
        let mean = sum as f64 / n as f64;
        // One step has mean 100 * (1/3)/(2/3) = 50 and variance 100 * 3/4.
        let se = (100.0f64 * 0.75).sqrt() / (n as f64).sqrt();
        assert!((mean - 50.0).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn geometric_offspring_moments_match() {
        let mut rng = offspring_rng(3, 0);
        let n = 1_000_000usize;
        let draws: Vec<f64> = (0..n)
            .map(|_| bpre_step(1, 1.0 / 3.0, 0, &mut rng).unwrap() as f64)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        // Geometric with success weight 2/3: mean 1/2, variance 3/4, fourth
        // central moment 93/16; the sample variance then has standard error
        // sqrt((93/16 - 9/16)/n).
        let se_mean = 0.75f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se_mean, "mean {mean}");
        let se_var = ((5.8125 - 0.5625) / n as f64).sqrt();
        assert!((var - 0.75).abs() < 4.0 * se_var, "variance {var}");
    }

    #[test]
    fn large_parent_counts_use_consistent_tiers() {
        // The same law sampled through the direct, gamma-Poisson and normal
        // tiers: means must agree at statistical accuracy.
        let p = 0.4f64;
        let mu = p / (1.0 - p);
        for &r in &[12u64, 40, 4000] {
            let mut rng = offspring_rng(4, r);
            let n = 20_000;
            let mut sum = 0f64;
            for _ in 0..n {
                sum += negative_binomial(r, p, &mut rng) as f64;
            }
            let mean = sum / n as f64;
            let expected = r as f64 * mu;
            let sd = (r as f64 * p).sqrt() / (1.0 - p);
            let tol = 4.0 * sd / (n as f64).sqrt();
            assert!(
                (mean - expected).abs() < tol,
                "r = {r}: mean {mean} vs {expected}"
            );
        }
        // Normal tier engages above mean 10^12 without panicking.
        let mut rng = offspring_rng(4, 99);
        let big = negative_binomial(1 << 62, 0.5, &mut rng);
        let expected = (1u64 << 62) as f64;
        assert!((big as f64 - expected).abs() < 1e-3 * expected);
    }

    #[test]
    fn direct_chain_respects_immigration_floor() {
        let mut rng = offspring_rng(5, 0);
        let (p_seq, m_seq) = sample_generation_env(
            &EnvironmentSpec::new(
                PLaw::Fixed { p: 1.0 / 3.0 },
                CookieLaw::ExampleLaw {
                    lambda: 1.0,
                    beta: 1.0,
                },
                HalfLineMask::Everywhere,
            )
            .unwrap(),
            5,
            0,
            200,
        );
        let path = simulate_z(&p_seq, &m_seq, &mut rng).unwrap();
        assert_eq!(path.values[0], Population::Exact(1));
        assert_eq!(path.values.len(), 201);
        for (k, value) in path.values.iter().enumerate().skip(1) {
            let m = path.immigrations[k - 1];
            assert!(value.value() >= m, "generation {k} below its immigration");
            if path.first_zero == Some(k) {
                assert_eq!(m, 0, "extinction recorded in an immigrating generation");
            }
        }
        if let Some(k) = path.first_zero {
            assert_eq!(path.values[k], Population::Exact(0));
            assert!(path.values[..k].iter().all(|v| v.value() > 0));
        }
    }

    #[test]
    fn decomposed_generation_matches_the_direct_law() {
        // Fixed environment, both simulators, two-sample comparison.
        let spec = EnvironmentSpec::new(
            PLaw::Fixed { p: 1.0 / 3.0 },
            CookieLaw::ExampleLaw {
                lambda: 1.0,
                beta: 2.0,
            },
            HalfLineMask::Everywhere,
        )
        .unwrap();
        let n = 8usize;
        let paths = 10_000usize;
        let mut direct = Vec::with_capacity(paths);
        let mut decomposed = Vec::with_capacity(paths);
        for rep in 0..paths as u64 {
            let (p_seq, m_seq) = sample_generation_env(&spec, 0xD1CE, rep, n);
            let mut rng_a = offspring_rng(0xD1CE, rep);
            let mut rng_b = offspring_rng(0x5EED, rep);
            let path = simulate_z(&p_seq, &m_seq, &mut rng_a).unwrap();
            direct.push(path.values[n].value() as f64);
            decomposed.push(simulate_z_decomposed(&p_seq, &m_seq, n, &mut rng_b).unwrap() as f64);
        }
        let outcome = two_sample_test(&direct, &decomposed, 0.01).unwrap();
        assert!(
            !outcome.reject,
            "distributions diverge: statistic {}",
            outcome.statistic
        );
    }

    #[test]
    fn coupled_run_with_no_cookies_can_die_immediately() {
        let spec = EnvironmentSpec::new(
            PLaw::Fixed { p: 1.0 / 3.0 },
            CookieLaw::NoCookies,
            HalfLineMask::Everywhere,
        )
        .unwrap();
        let env = Environment::new(spec, 0).unwrap();
        // Find a stream whose first flip at site 1 is a failure.
        let coins = (0..64)
            .map(|tag| CoinSource::new(0, tag))
            .find(|c| c.unit(1, 1) >= 1.0 / 3.0)
            .unwrap();
        let path = simulate_v(&env, &coins, 5, VSimOptions::default()).unwrap();
        assert_eq!(path.values[1], Population::Exact(0));
        assert_eq!(path.first_zero, Some(1));
        assert_eq!(path.flips_scanned[0], 1);
        // With extinction detection the trajectory is cut at the zero.
        let cut = simulate_v(
            &env,
            &coins,
            5,
            VSimOptions {
                stop_at_extinction: true,
                ..VSimOptions::default()
            },
        )
        .unwrap();
        assert_eq!(cut.values.len(), 2);
        assert_eq!(cut.first_zero, Some(1));
    }

    #[test]
    fn coupled_run_sits_above_immigration_and_tracks_flips() {
        // A bounded cookie law keeps every generation small, so the
        // uncapped scan below stays cheap; the bookkeeping identity itself
        // is law-independent. (Heavy-tailed laws would make an uncapped
        // scan wade through billions of flips after one giant stack.)
        let spec = EnvironmentSpec::new(
            PLaw::Fixed { p: 1.0 / 3.0 },
            CookieLaw::FixedCount { m: 3 },
            HalfLineMask::PositiveOnly,
        )
        .unwrap();
        let env = Environment::new(spec, 0xFEED).unwrap();
        for tag in 0..50u64 {
            let coins = CoinSource::new(0xFEED, tag);
            let path = simulate_v(&env, &coins, 40, VSimOptions::default()).unwrap();
            for k in 1..=40usize {
                let v = path.values[k];
                assert!(v.is_exact());
                assert!(v.value() >= path.immigrations[k - 1]);
                // Scanned flips = parents' failures plus own successes.
                let parents = path.values[k - 1].value();
                let successes = v.value() - path.immigrations[k - 1];
                assert_eq!(path.flips_scanned[k - 1], parents + successes);
            }
        }
    }

    #[test]
    fn scan_caps_turn_levels_into_lower_bounds() {
        let spec = EnvironmentSpec::new(
            // Success-heavy flips: each level has about 9 successes per
            // failure, so a small cap trips quickly.
            PLaw::Fixed { p: 0.9 },
            CookieLaw::FixedCount { m: 50 },
            HalfLineMask::PositiveOnly,
        )
        .unwrap();
        let env = Environment::new(spec, 7).unwrap();
        let coins = CoinSource::new(7, 0);
        let exact = simulate_v(&env, &coins, 6, VSimOptions::default()).unwrap();
        let capped = simulate_v(
            &env,
            &coins,
            6,
            VSimOptions {
                scan_cap: 30,
                ..VSimOptions::default()
            },
        )
        .unwrap();
        assert!(exact.values.iter().all(|v| v.is_exact()));
        let mut saw_bound = false;
        for (e, c) in exact.values.iter().zip(&capped.values) {
            assert!(c.value() <= e.value());
            if !c.is_exact() {
                saw_bound = true;
            }
        }
        assert!(saw_bound, "cap of 30 should have tripped");
        // Once capped, later levels stay lower bounds.
        let first_bound = capped.values.iter().position(|v| !v.is_exact()).unwrap();
        assert!(capped.values[first_bound..].iter().all(|v| !v.is_exact()));
    }

    #[test]
    fn difference_equation_steps_are_exact() {
        assert_eq!(rde_step(0.0, 0.7, 5.0), 5.0);
        // alpha = 1 telescopes to a plain sum.
        let ms = [1.5, 0.25, 3.0, 0.75];
        let ones = [1.0; 4];
        let path = simulate_rde(&ones, &ms).unwrap();
        assert_eq!(*path.x_values.last().unwrap(), 1.5 + 0.25 + 3.0 + 0.75);
        assert_eq!(path.w_value, *path.x_values.last().unwrap());
        // Halving with unit immigration: X_10 = 2 - 2^-9, exactly.
        let alphas = [0.5; 10];
        let ms = [1.0; 10];
        let path = simulate_rde(&alphas, &ms).unwrap();
        assert_eq!(path.x_values[10], 1.998046875);
    }

    #[test]
    fn one_term_series_is_the_first_immigration() {
        assert_eq!(simulate_w(&[0.3], &[4.5], 1).unwrap(), 4.5);
        assert!(simulate_w(&[0.3], &[4.5], 2).is_err());
    }

    #[test]
    fn series_and_recursion_share_a_distribution() {
        // iid multipliers and immigrations; X_10 and W_10 over independent
        // replicas should be indistinguishable.
        let n = 10usize;
        let paths = 10_000usize;
        let mut xs = Vec::with_capacity(paths);
        let mut ws = Vec::with_capacity(paths);
        for rep in 0..paths as u64 {
            let draw = |tag: u64, j: u64| unit_open(mix(&[0xABCD, tag, rep, j]));
            let alphas_x: Vec<f64> = (0..n as u64).map(|j| 0.25 + 0.5 * draw(1, j)).collect();
            let ms_x: Vec<f64> = (0..n as u64).map(|j| draw(2, j) * 2.0).collect();
            let alphas_w: Vec<f64> = (0..n as u64).map(|j| 0.25 + 0.5 * draw(3, j)).collect();
            let ms_w: Vec<f64> = (0..n as u64).map(|j| draw(4, j) * 2.0).collect();
            xs.push(*simulate_rde(&alphas_x, &ms_x).unwrap().x_values.last().unwrap());
            ws.push(simulate_w(&alphas_w, &ms_w, n).unwrap());
        }
        let outcome = two_sample_test(&xs, &ws, 0.01).unwrap();
        assert!(
            !outcome.reject,
            "laws diverge: statistic {}",
            outcome.statistic
        );
    }

    #[test]
    fn classifier_follows_the_tail_against_the_decay_rate() {
        let ln2 = std::f64::consts::LN_2;
        assert_eq!(
            bpre_classify(1.0, 1.0, -ln2).unwrap(),
            RegimeLabel::RightTransient
        );
        assert_eq!(
            bpre_classify(1.0 / 3.0, 1.0 / 3.0, -ln2).unwrap(),
            RegimeLabel::Recurrent
        );
        assert_eq!(
            bpre_classify(0.5, 0.9, -ln2).unwrap(),
            RegimeLabel::Indeterminate
        );
        assert_eq!(
            bpre_classify(f64::INFINITY, f64::INFINITY, -0.1).unwrap(),
            RegimeLabel::RightTransient
        );
        assert!(bpre_classify(1.0, 1.0, 0.0).is_err());
        assert!(bpre_classify(1.0, 1.0, 0.5).is_err());
        assert!(bpre_classify(0.9, 0.5, -ln2).is_err());
    }

    proptest! {
        #[test]
        fn recursion_is_monotone_in_each_immigration(
            alphas in proptest::collection::vec(0.05f64..3.0, 6),
            ms in proptest::collection::vec(0.0f64..4.0, 6),
            bump_at in 0usize..6,
            bump in 0.1f64..2.0,
        ) {
            let base = simulate_rde(&alphas, &ms).unwrap();
            let mut bigger = ms.clone();
            bigger[bump_at] += bump;
            let bumped = simulate_rde(&alphas, &bigger).unwrap();
            let last = base.x_values.len() - 1;
            prop_assert!(bumped.x_values[last] >= base.x_values[last]);
            prop_assert!(base.x_values.iter().all(|&x| x >= 0.0));
            prop_assert!(base.w_value >= 0.0);
        }

        #[test]
        fn generation_draws_are_reproducible(seed in any::<u64>(), rep in 0u64..32) {
            let spec = EnvironmentSpec::new(
                PLaw::Fixed { p: 0.4 },
                CookieLaw::ExampleLaw { lambda: 1.0, beta: 1.0 },
                HalfLineMask::Everywhere,
            ).unwrap();
            let a = sample_generation_env(&spec, seed, rep, 50);
            let b = sample_generation_env(&spec, seed, rep, 50);
            prop_assert_eq!(a, b);
        }
    }
}
