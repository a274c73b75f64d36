//! Random environments and the coin flips driven by them.
//!
//! An [`Environment`] assigns every site `z` a [`Site`] value: the background
//! probability `p_z` of stepping right once the site is exhausted, and the
//! cookie count `m_z` of visits that are forced to the right. Sites are pure
//! functions of `(master_seed, z)`, so an environment never needs to be
//! stored; any site can be queried at any time, in any order, on any thread,
//! and the answer is always the same.
//!
//! A [`CoinSource`] plays the same role for the walk's coin flips: the flip
//! used on the i-th visit to site `z` is a pure function of
//! `(master_seed, stream_tag, z, i)`. Walk and branching engines that share a
//! coin source therefore consume literally identical randomness, which is
//! what the pathwise coupling checks rely on.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::seedmix::{mix, stream, unit_open};

/// Largest representable cookie count; samples above it saturate.
pub const COOKIE_CAP: u64 = 1 << 62;

/// Law of the background transition probabilities `p_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PLaw {
    /// Every site uses the same `p`.
    Fixed { p: f64 },
    /// `p_a` with probability `w`, else `p_b`.
    TwoPoint { p_a: f64, p_b: f64, w: f64 },
}

/// Law of the cookie counts `m_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CookieLaw {
    /// No excitement anywhere: plain random walk in a random environment.
    NoCookies,
    /// Every site carries exactly `m` cookies.
    FixedCount { m: u64 },
    /// Heavy-tailed law with `P[M >= k] = (1 + beta ln k)^(-lambda)` for
    /// `k >= 2` and no mass at 1.
    ExampleLaw { lambda: f64, beta: f64 },
    /// Uniform on `{0, 1, ..., m_max}`.
    BoundedUniform { m_max: u64 },
}

/// Restriction of cookies to a half line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HalfLineMask {
    /// Cookies wherever the law puts them.
    Everywhere,
    /// Cookies only on sites `z >= 1`.
    PositiveOnly,
    /// Cookies only on sites `z <= -1`.
    NegativeOnly,
}

/// Complete description of an environment law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub p_law: PLaw,
    pub cookie_law: CookieLaw,
    pub mask: HalfLineMask,
}

/// One materialized site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    /// Probability of stepping right after the cookies are gone.
    pub p: f64,
    /// Number of forced right steps.
    pub m: u64,
}

/// Anything that can answer "what does site `z` look like".
///
/// Implemented by [`Environment`] (hash-derived sites) and by
/// [`crate::analysis::EnvWindow`] (explicit fixtures).
pub trait SiteSource {
    fn site(&self, z: i64) -> Site;
}

/// A realized environment: the law plus the seed that pins down every site.
///
/// No site table is kept. Materialization costs two hashes and, for the
/// heavy-tailed law, one logarithm and one power, so callers that walk over
/// millions of steps keep their own per-site cache; recomputing is always
/// safe because the mapping is pure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Environment {
    spec: EnvironmentSpec,
    master_seed: u64,
}

/// Deterministic coin flips, keyed by `(site, visit index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoinSource {
    pub master_seed: u64,
    /// Replica or purpose discriminator; distinct tags give independent flips.
    pub stream_tag: u64,
}

impl PLaw {
    fn validate(&self) -> Result<(), CoreError> {
        match *self {
            PLaw::Fixed { p } => check_open_unit("p", p),
            PLaw::TwoPoint { p_a, p_b, w } => {
                check_open_unit("p_a", p_a)?;
                check_open_unit("p_b", p_b)?;
                if !(0.0..=1.0).contains(&w) {
                    return Err(CoreError::OutOfDomain {
                        name: "w",
                        range: "[0, 1]",
                        value: w,
                    });
                }
                Ok(())
            }
        }
    }

    /// Draws a `p` value from the law using one uniform variate.
    pub fn sample(&self, u: f64) -> f64 {
        match *self {
            PLaw::Fixed { p } => p,
            PLaw::TwoPoint { p_a, p_b, w } => {
                if u < w {
                    p_a
                } else {
                    p_b
                }
            }
        }
    }
}

impl CookieLaw {
    fn validate(&self) -> Result<(), CoreError> {
        match *self {
            CookieLaw::NoCookies => Ok(()),
            CookieLaw::FixedCount { m } => {
                if m > COOKIE_CAP {
                    return Err(CoreError::InvalidArgument(format!(
                        "fixed cookie count {m} exceeds the cap of 2^62"
                    )));
                }
                Ok(())
            }
            CookieLaw::ExampleLaw { lambda, beta } => {
                check_positive_finite("lambda", lambda)?;
                check_positive_finite("beta", beta)
            }
            CookieLaw::BoundedUniform { m_max } => {
                if m_max > COOKIE_CAP {
                    return Err(CoreError::InvalidArgument(format!(
                        "m_max {m_max} exceeds the cap of 2^62"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Draws a cookie count from the law using one uniform variate.
    ///
    /// Heavy-tailed draws that would exceed [`COOKIE_CAP`] saturate at the
    /// cap. The cap is astronomically larger than any reachable visit count,
    /// so saturation is invisible to every bounded-horizon observable; see
    /// [`sample_cookie_example`] for the raw, non-saturating sampler.
    pub fn sample(&self, u: f64) -> u64 {
        match *self {
            CookieLaw::NoCookies => 0,
            CookieLaw::FixedCount { m } => m,
            CookieLaw::ExampleLaw { lambda, beta } => {
                match sample_cookie_example(lambda, beta, u) {
                    Ok(m) => m,
                    Err(CoreError::CookieCapExceeded { .. }) => COOKIE_CAP,
                    // lambda, beta and u are validated by construction.
                    Err(e) => unreachable!("cookie sampler rejected valid input: {e}"),
                }
            }
            CookieLaw::BoundedUniform { m_max } => {
                let k = (u * (m_max as f64 + 1.0)) as u64;
                k.min(m_max)
            }
        }
    }
}

impl EnvironmentSpec {
    pub fn new(p_law: PLaw, cookie_law: CookieLaw, mask: HalfLineMask) -> Result<Self, CoreError> {
        let spec = EnvironmentSpec {
            p_law,
            cookie_law,
            mask,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        self.p_law.validate()?;
        self.cookie_law.validate()
    }

    /// `E[log rho_0]` of the background law.
    pub fn mean_log_rho(&self) -> Result<f64, CoreError> {
        mean_log_rho(&self.p_law)
    }

    /// True if `mask` allows cookies at `z`.
    pub fn cookies_allowed_at(&self, z: i64) -> bool {
        match self.mask {
            HalfLineMask::Everywhere => true,
            HalfLineMask::PositiveOnly => z >= 1,
            HalfLineMask::NegativeOnly => z <= -1,
        }
    }
}

impl Environment {
    pub fn new(spec: EnvironmentSpec, master_seed: u64) -> Result<Self, CoreError> {
        spec.validate()?;
        Ok(Environment { spec, master_seed })
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Materializes site `z`: `(p_z, m_z)` as a pure function of the seed.
    pub fn materialize_site(&self, z: i64) -> Site {
        let u_p = unit_open(mix(&[self.master_seed, stream::SITE_P, z as u64]));
        let p = self.p_law_sample(u_p);
        let m = if self.spec.cookies_allowed_at(z) {
            let u_m = unit_open(mix(&[self.master_seed, stream::SITE_M, z as u64]));
            self.spec.cookie_law.sample(u_m)
        } else {
            0
        };
        Site { p, m }
    }

    fn p_law_sample(&self, u: f64) -> f64 {
        self.spec.p_law.sample(u)
    }

    /// Exports the sites in `lo..=hi` as an explicit window fixture.
    pub fn window(&self, lo: i64, hi: i64) -> crate::analysis::EnvWindow {
        let sites = (lo..=hi).map(|z| self.site(z)).collect();
        crate::analysis::EnvWindow::new(lo, sites)
    }
}

impl SiteSource for Environment {
    fn site(&self, z: i64) -> Site {
        self.materialize_site(z)
    }
}

impl CoinSource {
    pub fn new(master_seed: u64, stream_tag: u64) -> Self {
        CoinSource {
            master_seed,
            stream_tag,
        }
    }

    /// Uniform variate behind the flip at `(z, i)`.
    #[inline]
    pub fn unit(&self, z: i64, i: u64) -> f64 {
        unit_open(mix(&[
            self.master_seed,
            stream::FLIP,
            self.stream_tag,
            z as u64,
            i,
        ]))
    }
}

/// The step taken on the i-th visit to `z`: `+1` or `-1`.
///
/// Visit indices are 1-based. The first `m_z` visits step right with
/// certainty and consume no hash; later visits compare the flip variate
/// against `p_z`.
#[inline]
pub fn coin_flip<S: SiteSource>(src: &S, coins: &CoinSource, z: i64, i: u64) -> i64 {
    debug_assert!(i >= 1, "visit indices are 1-based");
    let site = src.site(z);
    flip_given_site(&site, coins, z, i)
}

/// Same as [`coin_flip`], for callers that already hold the site.
#[inline]
pub fn flip_given_site(site: &Site, coins: &CoinSource, z: i64, i: u64) -> i64 {
    if i <= site.m {
        return 1;
    }
    if coins.unit(z, i) < site.p {
        1
    } else {
        -1
    }
}

/// Odds ratio `rho = (1 - p) / p`.
pub fn rho(p: f64) -> Result<f64, CoreError> {
    check_open_unit("p", p)?;
    Ok((1.0 - p) / p)
}

/// `E[log rho_0]` under the background law.
pub fn mean_log_rho(p_law: &PLaw) -> Result<f64, CoreError> {
    match *p_law {
        PLaw::Fixed { p } => Ok(rho(p)?.ln()),
        PLaw::TwoPoint { p_a, p_b, w } => {
            if !(0.0..=1.0).contains(&w) {
                return Err(CoreError::OutOfDomain {
                    name: "w",
                    range: "[0, 1]",
                    value: w,
                });
            }
            Ok(w * rho(p_a)?.ln() + (1.0 - w) * rho(p_b)?.ln())
        }
    }
}

/// Tail of the log cookie count, `P[log M_0 > t]`.
///
/// For the heavy-tailed law this is `(1 + beta t)^(-lambda)` once `e^t >= 2`,
/// and constant below that because the law has no mass on `{1}`.
pub fn cookie_log_tail(law: &CookieLaw, t: f64) -> Result<f64, CoreError> {
    if !t.is_finite() || t < 0.0 {
        return Err(CoreError::OutOfDomain {
            name: "t",
            range: "[0, inf)",
            value: t,
        });
    }
    match *law {
        CookieLaw::NoCookies => Ok(0.0),
        CookieLaw::FixedCount { m } => {
            if m == 0 {
                Ok(0.0)
            } else if (m as f64).ln() > t {
                Ok(1.0)
            } else {
                Ok(0.0)
            }
        }
        CookieLaw::ExampleLaw { lambda, beta } => {
            check_positive_finite("lambda", lambda)?;
            check_positive_finite("beta", beta)?;
            let t_eff = t.max(std::f64::consts::LN_2);
            Ok((1.0 + beta * t_eff).powf(-lambda))
        }
        CookieLaw::BoundedUniform { .. } => Err(CoreError::Unsupported(
            "cookie_log_tail is not defined for the bounded uniform law".into(),
        )),
    }
}

/// Inverse-CDF sampler for the heavy-tailed cookie law.
///
/// Returns 0 when `u` exceeds the tail at 2, otherwise the largest `k >= 2`
/// with `(1 + beta ln k)^(-lambda) >= u`; the value 1 is never produced. The
/// floating-point candidate `floor(exp((u^(-1/lambda) - 1) / beta))` can be
/// off by an ulp, so the exact boundary is settled by a short integer scan.
/// A draw that would exceed [`COOKIE_CAP`] reports
/// [`CoreError::CookieCapExceeded`]; law-level callers saturate instead, see
/// [`CookieLaw::sample`].
pub fn sample_cookie_example(lambda: f64, beta: f64, u: f64) -> Result<u64, CoreError> {
    check_positive_finite("lambda", lambda)?;
    check_positive_finite("beta", beta)?;
    if !(u > 0.0 && u < 1.0) {
        return Err(CoreError::OutOfDomain {
            name: "u",
            range: "(0, 1)",
            value: u,
        });
    }
    let tail = |k: u64| (1.0 + beta * (k as f64).ln()).powf(-lambda);
    if u > tail(2) {
        return Ok(0);
    }
    let k_star = ((u.powf(-1.0 / lambda) - 1.0) / beta).exp();
    if !k_star.is_finite() || k_star >= COOKIE_CAP as f64 {
        return Err(CoreError::CookieCapExceeded { u });
    }
    let mut k = (k_star as u64).saturating_add(2).max(2);
    while k > 2 && tail(k) < u {
        k -= 1;
    }
    Ok(k)
}

fn check_open_unit(name: &'static str, v: f64) -> Result<(), CoreError> {
    if !(v.is_finite() && v > 0.0 && v < 1.0) {
        return Err(CoreError::OutOfDomain {
            name,
            range: "(0, 1)",
            value: v,
        });
    }
    Ok(())
}

fn check_positive_finite(name: &'static str, v: f64) -> Result<(), CoreError> {
    if !(v.is_finite() && v > 0.0) {
        return Err(CoreError::OutOfDomain {
            name,
            range: "(0, inf)",
            value: v,
        });
    }
    Ok(())
}

// --- flat key=value config -------------------------------------------------

/// Parses flat `key = value` text into a map.
///
/// Blank lines and `#` comments are skipped; duplicate keys are rejected.
pub fn parse_kv_text(text: &str) -> Result<BTreeMap<String, String>, CoreError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CoreError::InvalidArgument(format!(
                "line {}: expected key = value, got {line:?}",
                idx + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(CoreError::InvalidArgument(format!(
                "duplicate key {key:?}"
            )));
        }
    }
    Ok(map)
}

impl EnvironmentSpec {
    /// Builds a spec from a key-value map, consuming the keys it understands.
    ///
    /// Recognized keys: `p_law`, `p`, `p_a`, `p_b`, `w`, `cookie_law`,
    /// `lambda`, `beta`, `m`, `m_max`, `mask`. `p_law` may be omitted when
    /// `p` alone pins down a fixed law, and a missing `cookie_law` means no
    /// cookies. Callers that own further keys (seeds, replica counts) pop
    /// them from the same map and treat leftovers as errors.
    pub fn from_kv(map: &mut BTreeMap<String, String>) -> Result<Self, CoreError> {
        let p_law_name = map.remove("p_law");
        let p = take_f64(map, "p")?;
        let p_a = take_f64(map, "p_a")?;
        let p_b = take_f64(map, "p_b")?;
        let w = take_f64(map, "w")?;
        let p_law = match p_law_name.as_deref() {
            Some("fixed") | None if p.is_some() => PLaw::Fixed { p: p.unwrap() },
            Some("two_point") => match (p_a, p_b, w) {
                (Some(p_a), Some(p_b), Some(w)) => PLaw::TwoPoint { p_a, p_b, w },
                _ => {
                    return Err(CoreError::InvalidArgument(
                        "p_law = two_point needs p_a, p_b and w".into(),
                    ))
                }
            },
            Some("fixed") => {
                return Err(CoreError::InvalidArgument("p_law = fixed needs p".into()))
            }
            Some(other) => {
                return Err(CoreError::InvalidArgument(format!(
                    "unknown p_law {other:?} (expected fixed or two_point)"
                )))
            }
            None => {
                return Err(CoreError::InvalidArgument(
                    "no background law: set p_law (or a bare p for a fixed law)".into(),
                ))
            }
        };

        let cookie_law_name = map.remove("cookie_law");
        let lambda = take_f64(map, "lambda")?;
        let beta = take_f64(map, "beta")?;
        let m = take_u64(map, "m")?;
        let m_max = take_u64(map, "m_max")?;
        let cookie_law = match cookie_law_name.as_deref() {
            None | Some("no_cookies") => {
                if lambda.is_some() || beta.is_some() {
                    return Err(CoreError::InvalidArgument(
                        "lambda/beta are only valid with cookie_law = example_law".into(),
                    ));
                }
                if m.is_some() || m_max.is_some() {
                    return Err(CoreError::InvalidArgument(
                        "m/m_max are only valid with fixed_count or bounded_uniform".into(),
                    ));
                }
                CookieLaw::NoCookies
            }
            Some("example_law") => {
                if m.is_some() || m_max.is_some() {
                    return Err(CoreError::InvalidArgument(
                        "m/m_max are only valid with fixed_count or bounded_uniform".into(),
                    ));
                }
                match (lambda, beta) {
                    (Some(lambda), Some(beta)) => CookieLaw::ExampleLaw { lambda, beta },
                    _ => {
                        return Err(CoreError::InvalidArgument(
                            "cookie_law = example_law needs lambda and beta".into(),
                        ))
                    }
                }
            }
            Some("fixed_count") => {
                if lambda.is_some() || beta.is_some() {
                    return Err(CoreError::InvalidArgument(
                        "lambda/beta are only valid with cookie_law = example_law".into(),
                    ));
                }
                if m_max.is_some() {
                    return Err(CoreError::InvalidArgument(
                        "m_max is only valid with cookie_law = bounded_uniform".into(),
                    ));
                }
                match m {
                    Some(m) => CookieLaw::FixedCount { m },
                    None => {
                        return Err(CoreError::InvalidArgument(
                            "cookie_law = fixed_count needs m".into(),
                        ))
                    }
                }
            }
            Some("bounded_uniform") => {
                if lambda.is_some() || beta.is_some() {
                    return Err(CoreError::InvalidArgument(
                        "lambda/beta are only valid with cookie_law = example_law".into(),
                    ));
                }
                if m.is_some() {
                    return Err(CoreError::InvalidArgument(
                        "m is only valid with cookie_law = fixed_count".into(),
                    ));
                }
                match m_max {
                    Some(m_max) => CookieLaw::BoundedUniform { m_max },
                    None => {
                        return Err(CoreError::InvalidArgument(
                            "cookie_law = bounded_uniform needs m_max".into(),
                        ))
                    }
                }
            }
            Some(other) => {
                return Err(CoreError::InvalidArgument(format!(
                    "unknown cookie_law {other:?}"
                )))
            }
        };

        let mask = match map.remove("mask").as_deref() {
            None | Some("everywhere") => HalfLineMask::Everywhere,
            Some("positive_only") => HalfLineMask::PositiveOnly,
            Some("negative_only") => HalfLineMask::NegativeOnly,
            Some(other) => {
                return Err(CoreError::InvalidArgument(format!(
                    "unknown mask {other:?}"
                )))
            }
        };

        EnvironmentSpec::new(p_law, cookie_law, mask)
    }

    /// Serializes the spec back to `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        match self.p_law {
            PLaw::Fixed { p } => {
                lines.push("p_law = fixed".into());
                lines.push(format!("p = {p}"));
            }
            PLaw::TwoPoint { p_a, p_b, w } => {
                lines.push("p_law = two_point".into());
                lines.push(format!("p_a = {p_a}"));
                lines.push(format!("p_b = {p_b}"));
                lines.push(format!("w = {w}"));
            }
        }
        match self.cookie_law {
            CookieLaw::NoCookies => lines.push("cookie_law = no_cookies".into()),
            CookieLaw::FixedCount { m } => {
                lines.push("cookie_law = fixed_count".into());
                lines.push(format!("m = {m}"));
            }
            CookieLaw::ExampleLaw { lambda, beta } => {
                lines.push("cookie_law = example_law".into());
                lines.push(format!("lambda = {lambda}"));
                lines.push(format!("beta = {beta}"));
            }
            CookieLaw::BoundedUniform { m_max } => {
                lines.push("cookie_law = bounded_uniform".into());
                lines.push(format!("m_max = {m_max}"));
            }
        }
        let mask = match self.mask {
            HalfLineMask::Everywhere => "everywhere",
            HalfLineMask::PositiveOnly => "positive_only",
            HalfLineMask::NegativeOnly => "negative_only",
        };
        lines.push(format!("mask = {mask}"));
        lines.push(String::new());
        lines.join("\n")
    }
}

fn take_f64(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<f64>, CoreError> {
    match map.remove(key) {
        None => Ok(None),
        Some(text) => text.parse::<f64>().map(Some).map_err(|_| {
            CoreError::InvalidArgument(format!("{key} = {text:?} is not a number"))
        }),
    }
}

fn take_u64(map: &mut BTreeMap<String, String>, key: &str) -> Result<Option<u64>, CoreError> {
    match map.remove(key) {
        None => Ok(None),
        Some(text) => text.parse::<u64>().map(Some).map_err(|_| {
            CoreError::InvalidArgument(format!("{key} = {text:?} is not a nonnegative integer"))
        }),
    }
}
