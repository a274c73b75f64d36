//! Closed-form quenched probabilities, an independent linear-solve oracle,
//! regime classification, and small statistical utilities.
//!
//! The two hitting-probability evaluators answer the same question two ways:
//! [`hit_prob_closed`] evaluates the product-sum formula in log space, and
//! [`hit_prob_oracle`] solves the first-step linear system by tridiagonal
//! elimination. They share nothing but site access, so agreement between
//! them is a real check rather than a tautology.

use serde::{Deserialize, Serialize};

use crate::env::{Site, SiteSource};
use crate::error::CoreError;

/// Long-run verdict for a walk or branching family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeLabel {
    /// Drifts to minus infinity.
    LeftTransient,
    /// Returns to the origin infinitely often.
    Recurrent,
    /// Escapes to plus infinity.
    RightTransient,
    /// The classifying conditions straddle the threshold; no verdict.
    Indeterminate,
}

/// Analytic tail summary of a cookie law: whether `E[(log M)_+]` is finite,
/// and the liminf/limsup of `t * P[log M > t]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailDescriptor {
    pub log_moment_finite: bool,
    pub tail_liminf: f64,
    pub tail_limsup: f64,
}

impl TailDescriptor {
    pub fn new(
        log_moment_finite: bool,
        tail_liminf: f64,
        tail_limsup: f64,
    ) -> Result<Self, CoreError> {
        if tail_liminf.is_nan()
            || tail_limsup.is_nan()
            || tail_liminf < 0.0
            || tail_liminf > tail_limsup
        {
            return Err(CoreError::InvalidArgument(format!(
                "tail bounds must satisfy 0 <= liminf <= limsup, got ({tail_liminf}, {tail_limsup})"
            )));
        }
        if log_moment_finite && tail_limsup != 0.0 {
            return Err(CoreError::InvalidArgument(
                "a finite log moment forces the tail limit to be 0".into(),
            ));
        }
        Ok(TailDescriptor {
            log_moment_finite,
            tail_liminf,
            tail_limsup,
        })
    }
}

/// Result of a two-sample distribution comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub critical: f64,
    pub reject: bool,
}

/// An explicit, finite strip of sites, usable wherever an environment is.
///
/// Windows serialize as a JSON array of `{z, p, m}` records so test
/// fixtures can be pinned down exactly. Sites must form a contiguous range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<WindowRecord>", into = "Vec<WindowRecord>")]
pub struct EnvWindow {
    lo: i64,
    sites: Vec<Site>,
}

/// One row of a serialized [`EnvWindow`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub z: i64,
    pub p: f64,
    pub m: u64,
}

impl EnvWindow {
    pub fn new(lo: i64, sites: Vec<Site>) -> Self {
        assert!(!sites.is_empty(), "a window needs at least one site");
        EnvWindow { lo, sites }
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.sites.len() as i64 - 1
    }

    /// Replaces one site, for controlled perturbation experiments.
    pub fn set_site(&mut self, z: i64, site: Site) {
        let idx = z - self.lo;
        assert!(
            idx >= 0 && (idx as usize) < self.sites.len(),
            "site {z} outside window [{}, {}]",
            self.lo(),
            self.hi()
        );
        self.sites[idx as usize] = site;
    }

    pub fn from_json(text: &str) -> Result<Self, CoreError> {
        serde_json::from_str(text)
            .map_err(|e| CoreError::InvalidArgument(format!("bad window JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("window serialization cannot fail")
    }
}

impl SiteSource for EnvWindow {
    fn site(&self, z: i64) -> Site {
        let idx = z - self.lo;
        assert!(
            idx >= 0 && (idx as usize) < self.sites.len(),
            "site {z} outside window [{}, {}]",
            self.lo(),
            self.hi()
        );
        self.sites[idx as usize]
    }
}

impl TryFrom<Vec<WindowRecord>> for EnvWindow {
    type Error = String;

    fn try_from(mut records: Vec<WindowRecord>) -> Result<Self, Self::Error> {
        if records.is_empty() {
            return Err("a window needs at least one site".into());
        }
        records.sort_by_key(|r| r.z);
        let lo = records[0].z;
        let mut sites = Vec::with_capacity(records.len());
        for (offset, r) in records.iter().enumerate() {
            if r.z != lo + offset as i64 {
                return Err(format!(
                    "window sites must be contiguous; missing site {}",
                    lo + offset as i64
                ));
            }
            if !(r.p.is_finite() && r.p > 0.0 && r.p < 1.0) {
                return Err(format!("site {}: p = {} is not in (0, 1)", r.z, r.p));
            }
            sites.push(Site { p: r.p, m: r.m });
        }
        Ok(EnvWindow { lo, sites })
    }
}

impl From<EnvWindow> for Vec<WindowRecord> {
    fn from(window: EnvWindow) -> Self {
        window
            .sites
            .iter()
            .enumerate()
            .map(|(offset, s)| WindowRecord {
                z: window.lo + offset as i64,
                p: s.p,
                m: s.m,
            })
            .collect()
    }
}

fn ln_rho_at<S: SiteSource>(src: &S, z: i64) -> f64 {
    let p = src.site(z).p;
    debug_assert!(p > 0.0 && p < 1.0);
    ((1.0 - p) / p).ln()
}

/// `log(sum exp(t))` over the given terms; empty input gives `-inf`.
fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// `log(1 + e^x)`, stable across the whole range.
fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `log S_t` where `S_t = sum_{l=-z+1..t} prod_{j=l..t} rho_{-j}`,
/// accumulated as suffix sums of `log rho` and combined by log-sum-exp.
fn log_barrier_sum<S: SiteSource>(src: &S, z: i64, t: i64) -> f64 {
    let lo = -z + 1;
    if t < lo {
        return f64::NEG_INFINITY; // empty sum
    }
    let mut logs = Vec::with_capacity((t - lo + 1) as usize);
    let mut acc = 0.0;
    for l in (lo..=t).rev() {
        acc += ln_rho_at(src, -l);
        logs.push(acc);
    }
    log_sum_exp(&logs)
}

/// Probability that a walk at `-k` hits `-k-1` before `z`, for the plain
/// (cookie-free) background dynamics.
///
/// Evaluates `1 - 1/(1 + S_k)` with `S_k = sum_{l=-z+1..k} prod_{j=l..k}
/// rho_{-j}` entirely in log space, so hundreds of strong-drift factors
/// cannot overflow. Cookie counts on the window are ignored.
pub fn hit_prob_closed<S: SiteSource>(src: &S, z: i64, k: i64) -> Result<f64, CoreError> {
    check_barrier_geometry(z, k)?;
    let lse = log_barrier_sum(src, z, k);
    // 1 - 1/(1+S) = 1 - exp(-log(1+S)).
    Ok(-(-softplus(lse)).exp_m1())
}

/// The same hitting probability, from first-step analysis.
///
/// Solves `h(-k-1) = 1`, `h(z) = 0`, `h(x) = p_x h(x+1) + (1-p_x) h(x-1)`
/// for `-k <= x <= z-1` by direct tridiagonal elimination and returns
/// `h(-k)`. Shares no arithmetic with [`hit_prob_closed`].
pub fn hit_prob_oracle<S: SiteSource>(src: &S, z: i64, k: i64) -> Result<f64, CoreError> {
    check_barrier_geometry(z, k)?;
    let n = (z + k) as usize;
    // Row i is the balance equation at site x_i = -k + i:
    //   -(1-p) h(x-1) + h(x) - p h(x+1) = 0,
    // with the two boundary terms moved to the right-hand side.
    let mut diag = vec![0.0f64; n];
    let mut upper = vec![0.0f64; n];
    let mut rhs = vec![0.0f64; n];
    let mut lower = vec![0.0f64; n];
    for i in 0..n {
        let x = -k + i as i64;
        let p = src.site(x).p;
        lower[i] = -(1.0 - p);
        diag[i] = 1.0;
        upper[i] = -p;
        rhs[i] = 0.0;
    }
    rhs[0] = 1.0 - src.site(-k).p; // h(-k-1) = 1
    // h(z) = 0 contributes nothing to the last row.
    for i in 1..n {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut h = vec![0.0f64; n];
    h[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        h[i] = (rhs[i] - upper[i] * h[i + 1]) / diag[i];
    }
    Ok(h[0].clamp(0.0, 1.0))
}

fn check_barrier_geometry(z: i64, k: i64) -> Result<(), CoreError> {
    if k < 1 {
        return Err(CoreError::InvalidArgument(format!(
            "k must be a positive depth, got {k}"
        )));
    }
    if -k >= z {
        return Err(CoreError::InvalidArgument(format!(
            "the start -{k} must lie left of the barrier z = {z}"
        )));
    }
    Ok(())
}

/// Probability that, from its first visit to `-n`, the walk slips to
/// `-n-1` before `z`, surviving all the cookies at `-n`.
///
/// Each of the `M_{-n}` cookies forces a step up, which must return to
/// `-n` before reaching `z`; afterwards the background walk must hit
/// `-n-1` before `z`. The product
/// `(1 - 1/(1+S_{n-1}))^{M_{-n}} * (1 - 1/(1+S_n))` is evaluated in log
/// space, with the power as `exp(M * log1p(-1/(1+S_{n-1})))` so that
/// astronomically large cookie counts keep full accuracy.
pub fn prob_a_n<S: SiteSource>(src: &S, z: i64, n: i64) -> Result<f64, CoreError> {
    if n <= 0.max(-z) {
        return Err(CoreError::InvalidArgument(format!(
            "n must exceed max(0, -z) = {}, got {n}",
            0.max(-z)
        )));
    }
    let m = src.site(-n).m;
    let lse_prev = log_barrier_sum(src, z, n - 1);
    let lse_n = log_barrier_sum(src, z, n);
    let escape_factor = -(-softplus(lse_n)).exp_m1();
    let q_prev = (-softplus(lse_prev)).exp(); // 1/(1 + S_{n-1})
    let cookie_factor = if m == 0 {
        1.0
    } else if q_prev >= 1.0 {
        0.0
    } else {
        ((m as f64) * (-q_prev).ln_1p()).exp()
    };
    Ok(cookie_factor * escape_factor)
}

/// Trichotomy for the walk: reads a cookie-tail summary against the
/// background drift strength `E[log rho] > 0`.
///
/// A finite `E[(log M)_+]` leaves the leftward drift in charge. With an
/// infinite log moment, the scaled tail `t * P[log M > t]` decides: staying
/// below the drift strength keeps the walk recurrent, exceeding it pushes
/// the walk to the right, and straddling it is left open.
pub fn classify_regime(
    tails: &TailDescriptor,
    mean_log_rho: f64,
) -> Result<RegimeLabel, CoreError> {
    if !(mean_log_rho > 0.0) {
        return Err(CoreError::Unsupported(format!(
            "classification needs a leftward background drift (E[log rho] = {mean_log_rho} <= 0)"
        )));
    }
    // Revalidate: the descriptor type is plain data.
    TailDescriptor::new(tails.log_moment_finite, tails.tail_liminf, tails.tail_limsup)?;
    if tails.log_moment_finite {
        Ok(RegimeLabel::LeftTransient)
    } else if tails.tail_limsup < mean_log_rho {
        Ok(RegimeLabel::Recurrent)
    } else if tails.tail_liminf > mean_log_rho {
        Ok(RegimeLabel::RightTransient)
    } else {
        Ok(RegimeLabel::Indeterminate)
    }
}

/// Tail summary of the heavy-tailed cookie law with
/// `P[M >= k] = (1 + beta ln k)^(-lambda)`.
///
/// For `lambda > 1` the log moment is finite and the scaled tail vanishes;
/// at `lambda = 1` the scaled tail converges to `1/beta`; below 1 it
/// diverges. The `lambda = 1` branch compares exactly, which is how the
/// boundary family is meant to be selected.
pub fn example_tail_descriptor(lambda: f64, beta: f64) -> Result<TailDescriptor, CoreError> {
    for (name, v) in [("lambda", lambda), ("beta", beta)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(CoreError::OutOfDomain {
                name,
                range: "(0, inf)",
                value: v,
            });
        }
    }
    if lambda > 1.0 {
        TailDescriptor::new(true, 0.0, 0.0)
    } else if lambda == 1.0 {
        TailDescriptor::new(false, 1.0 / beta, 1.0 / beta)
    } else {
        TailDescriptor::new(false, f64::INFINITY, f64::INFINITY)
    }
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic critical value
/// `c(level) * sqrt((n+m)/(n m))`, `c(a) = sqrt(-ln(a/2)/2)`.
pub fn two_sample_test(a: &[f64], b: &[f64], level: f64) -> Result<TestOutcome, CoreError> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::InvalidArgument(
            "both samples must be nonempty".into(),
        ));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CoreError::OutOfDomain {
            name: "level",
            range: "(0, 1)",
            value: level,
        });
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(CoreError::InvalidArgument("samples contain NaN".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let (n, m) = (sa.len() as f64, sb.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut statistic = 0.0f64;
    while i < sa.len() || j < sb.len() {
        let v = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        // Step both empirical CDFs past every copy of v before comparing,
        // so ties never produce a spurious gap.
        while i < sa.len() && sa[i] <= v {
            i += 1;
        }
        while j < sb.len() && sb[j] <= v {
            j += 1;
        }
        statistic = statistic.max((i as f64 / n - j as f64 / m).abs());
    }
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    let critical = c * ((n + m) / (n * m)).sqrt();
    Ok(TestOutcome {
        statistic,
        critical,
        reject: statistic > critical,
    })
}

/// Normal-approximation binomial interval `p_hat +/- z * sqrt(p_hat (1 -
/// p_hat) / trials)`, clipped to `[0, 1]`.
pub fn binomial_interval(
    successes: u64,
    trials: u64,
    z_mult: f64,
) -> Result<(f64, f64), CoreError> {
    if trials == 0 {
        return Err(CoreError::InvalidArgument(
            "need at least one trial".into(),
        ));
    }
    if successes > trials {
        return Err(CoreError::InvalidArgument(format!(
            "{successes} successes out of {trials} trials"
        )));
    }
    let p_hat = successes as f64 / trials as f64;
    let half = z_mult * (p_hat * (1.0 - p_hat) / trials as f64).sqrt();
    Ok(((p_hat - half).max(0.0), (p_hat + half).min(1.0)))
}

/// Partial sums `sum_{n=1..N} M_{-n} x^n` for `N = 1..n_terms`.
///
/// A visual divergence diagnostic: no convergence claim is made, the caller
/// just gets the sequence.
pub fn power_series_diagnostic(
    m_seq: &[u64],
    x: f64,
    n_terms: usize,
) -> Result<Vec<f64>, CoreError> {
    if !(x.is_finite() && x > 0.0 && x < 1.0) {
        return Err(CoreError::OutOfDomain {
            name: "x",
            range: "(0, 1)",
            value: x,
        });
    }
    if m_seq.len() < n_terms {
        return Err(CoreError::InvalidArgument(format!(
            "need {n_terms} cookie counts, got {}",
            m_seq.len()
        )));
    }
    let mut sums = Vec::with_capacity(n_terms);
    let mut pow = 1.0f64;
    let mut acc = 0.0f64;
    for &m in &m_seq[..n_terms] {
        pow *= x;
        acc += m as f64 * pow;
        sums.push(acc);
    }
    Ok(sums)
}

/// Stable per-site uniform helper for building randomized test windows.
#[cfg(test)]
pub(crate) fn window_unit(seed: u64, salt: u64, z: i64) -> f64 {
    crate::seedmix::unit_open(crate::seedmix::mix(&[seed, salt, z as u64]))
}
