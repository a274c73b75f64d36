//! Turns a resolved config into a report.
//!
//! Every experiment is a pure function of the config: replica `r` flips
//! coins on stream tag `r` and, where the environment is redrawn per
//! replica, seeds it from the master seed, the replica-environment stream
//! and `r`. Replicas run in parallel and are collected back in index order,
//! so the report — and therefore the emitted bytes — never depends on the
//! worker count.

use rayon::prelude::*;
use serde_json::{json, Value};

use cookiewalk::seedmix::{mix, stream};
use cookiewalk::{
    classify_regime, couple_excursion, example_tail_descriptor, hit_prob_closed,
    hit_prob_oracle, offspring_rng, run_walk, sample_generation_env, simulate_rde, simulate_w,
    simulate_z, two_sample_test, binomial_interval, CoinSource, CookieLaw, CoreError, CoupleOutcome,
    EnvWindow, Environment, EnvironmentSpec, RegimeLabel, Site, TerminatedBy, WalkSummary,
};

use crate::config::{ExperimentConfig, Subcommand};
use crate::report::{num, EnsembleReport};

/// Monte Carlo sample size per hitting-probability case.
pub const HITPROB_MC_TRIALS: u64 = 10_000;

/// Significance level of the distribution test in the `rde` report.
pub const RDE_TEST_LEVEL: f64 = 0.01;

/// Runs the configured experiment on a worker pool of the configured size
/// (0 = one worker per core) and returns its report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EnsembleReport, CoreError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| {
            CoreError::InvalidArgument(format!(
                "cannot build a pool of {} workers: {e}",
                cfg.workers
            ))
        })?;
    pool.install(|| match cfg.command {
        Subcommand::Walk => walk_like_report(cfg, 0, &[], "walk"),
        Subcommand::Excursion => walk_like_report(cfg, 1, &[0], "excursion"),
        Subcommand::Couple => couple_report(cfg),
        Subcommand::Bpre => bpre_report(cfg),
        Subcommand::Rde => rde_report(cfg),
        Subcommand::Hitprob => hitprob_report(cfg),
        Subcommand::Phase => phase_report(cfg),
    })
}

/// Environment seed for replica `r` of an annealed ensemble; extra words
/// separate independent axes such as grid points.
fn replica_env_seed(master: u64, words: &[u64]) -> u64 {
    let mut coords = Vec::with_capacity(2 + words.len());
    coords.push(master);
    coords.push(stream::REPLICA_ENV);
    coords.extend_from_slice(words);
    mix(&coords)
}

fn terminated_label(t: TerminatedBy) -> &'static str {
    match t {
        TerminatedBy::HitTarget => "hit_target",
        TerminatedBy::Horizon => "horizon",
    }
}

fn regime_name(label: RegimeLabel) -> &'static str {
    match label {
        RegimeLabel::LeftTransient => "left_transient",
        RegimeLabel::Recurrent => "recurrent",
        RegimeLabel::RightTransient => "right_transient",
        RegimeLabel::Indeterminate => "indeterminate",
    }
}

/// Median as a float (mean of the middle pair for even counts).
fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    values.sort_by(|a, b| a.partial_cmp(b).expect("report values are never NaN"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn median_of<T, F: Fn(&T) -> f64>(items: &[T], f: F) -> f64 {
    let mut values: Vec<f64> = items.iter().map(f).collect();
    median(&mut values)
}

fn frac_of<T, F: Fn(&T) -> bool>(items: &[T], f: F) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    items.iter().filter(|x| f(x)).count() as f64 / items.len() as f64
}

const WALK_COLUMNS: [&str; 10] = [
    "replica",
    "seed",
    "start",
    "steps",
    "final",
    "min",
    "max",
    "returns",
    "t0",
    "terminated_by",
];

/// `walk` and `excursion`: one walk per replica in a freshly seeded
/// environment, one row per replica.
fn walk_like_report(
    cfg: &ExperimentConfig,
    start: i64,
    stops: &[i64],
    command: &str,
) -> Result<EnsembleReport, CoreError> {
    let runs: Vec<(u64, WalkSummary)> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let env_seed = replica_env_seed(cfg.seed, &[r]);
            let env = Environment::new(cfg.env.clone(), env_seed)?;
            let coins = CoinSource::new(cfg.seed, r);
            let summary = run_walk(&env, &coins, start, cfg.horizon, stops)?;
            Ok((env_seed, summary))
        })
        .collect::<Result<_, CoreError>>()?;

    let mut report = EnsembleReport::new(command, cfg.echo(), &WALK_COLUMNS);
    for (r, (env_seed, s)) in runs.iter().enumerate() {
        report.push_row(vec![
            json!(r as u64),
            json!(env_seed),
            json!(s.start),
            json!(s.steps_taken),
            json!(s.final_position),
            json!(s.min_position),
            json!(s.max_position),
            json!(s.returns_to_origin),
            s.t0.map_or(Value::Null, |t| json!(t)),
            json!(terminated_label(s.terminated_by)),
        ]);
    }

    let finished = runs
        .iter()
        .filter(|(_, s)| s.terminated_by == TerminatedBy::HitTarget)
        .count() as u64;
    report.set_agg("replicas", json!(cfg.replicas));
    report.set_agg("finished", json!(finished));
    report.set_agg("timeouts", json!(cfg.replicas - finished));
    report.set_agg(
        "median_final",
        num(median_of(&runs, |(_, s)| s.final_position as f64)),
    );
    report.set_agg(
        "median_returns",
        num(median_of(&runs, |(_, s)| s.returns_to_origin as f64)),
    );
    report.set_agg(
        "min_final",
        json!(runs.iter().map(|(_, s)| s.final_position).min().unwrap()),
    );
    report.set_agg(
        "max_final",
        json!(runs.iter().map(|(_, s)| s.final_position).max().unwrap()),
    );

    if command == "excursion" {
        // Column-wise sums of the upcrossing tables, as [k, total] pairs.
        let mut totals: std::collections::BTreeMap<i64, u64> = std::collections::BTreeMap::new();
        for (_, s) in &runs {
            for (&k, &u) in &s.upcrossings {
                *totals.entry(k).or_insert(0) += u;
            }
        }
        let pairs: Vec<Value> = totals
            .iter()
            .map(|(&k, &u)| json!([k, u]))
            .collect();
        report.set_agg("upcrossing_totals", Value::Array(pairs));
    }
    Ok(report)
}

const COUPLE_COLUMNS: [&str; 7] = [
    "replica",
    "t0_or_timeout",
    "k",
    "U_k",
    "V_k",
    "indicator",
    "violation",
];

/// `couple`: one excursion and its branching shadow per replica, one row
/// per checked level.
fn couple_report(cfg: &ExperimentConfig) -> Result<EnsembleReport, CoreError> {
    let outcomes: Vec<CoupleOutcome> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let env_seed = replica_env_seed(cfg.seed, &[r]);
            let env = Environment::new(cfg.env.clone(), env_seed)?;
            let coins = CoinSource::new(cfg.seed, r);
            couple_excursion(&env, &coins, cfg.horizon)
        })
        .collect::<Result<_, CoreError>>()?;

    let mut report = EnsembleReport::new("couple", cfg.echo(), &COUPLE_COLUMNS);
    let mut violations = 0u64;
    let mut lower_bound_levels = 0u64;
    let mut levels_total = 0u64;
    let mut max_k = 0i64;
    for (r, out) in outcomes.iter().enumerate() {
        let t0_cell = match out.summary.t0 {
            Some(t) => json!(t),
            None => json!("timeout"),
        };
        for level in &out.levels {
            levels_total += 1;
            max_k = max_k.max(level.k);
            if !level.population.is_exact() {
                lower_bound_levels += 1;
            }
            if !level.matched {
                violations += 1;
            }
            report.push_row(vec![
                json!(r as u64),
                t0_cell.clone(),
                json!(level.k),
                json!(level.upcrossings),
                json!(level.population.value()),
                json!(u64::from(level.alive_before)),
                json!(u64::from(!level.matched)),
            ]);
        }
    }

    let finished = outcomes.iter().filter(|o| o.finished).count() as u64;
    let extinction_mismatches = outcomes
        .iter()
        .filter(|o| !o.extinction_matches)
        .count() as u64;
    report.set_agg("pairs", json!(cfg.replicas));
    report.set_agg("finished", json!(finished));
    report.set_agg("timeouts", json!(cfg.replicas - finished));
    report.set_agg("levels", json!(levels_total));
    report.set_agg("max_k", json!(max_k));
    report.set_agg("violations", json!(violations));
    report.set_agg("extinction_mismatches", json!(extinction_mismatches));
    report.set_agg("lower_bound_levels", json!(lower_bound_levels));
    Ok(report)
}

const BPRE_COLUMNS: [&str; 4] = ["replica", "n", "z_n", "extinct_at"];

/// `bpre`: the branching process with immigration in a freshly drawn
/// environment per replica, one row per generation.
fn bpre_report(cfg: &ExperimentConfig) -> Result<EnsembleReport, CoreError> {
    let paths: Vec<cookiewalk::BranchingPath> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let (p_seq, m_seq) =
                sample_generation_env(&cfg.env, cfg.seed, r, cfg.horizon as usize);
            let mut rng = offspring_rng(cfg.seed, r);
            simulate_z(&p_seq, &m_seq, &mut rng)
        })
        .collect::<Result<_, CoreError>>()?;

    let mut report = EnsembleReport::new("bpre", cfg.echo(), &BPRE_COLUMNS);
    for (r, path) in paths.iter().enumerate() {
        let extinct_cell = path
            .first_zero
            .map_or(Value::Null, |n| json!(n as u64));
        for (n, value) in path.values.iter().enumerate() {
            report.push_row(vec![
                json!(r as u64),
                json!(n as u64),
                json!(value.value()),
                extinct_cell.clone(),
            ]);
        }
    }

    let hit_zero = paths.iter().filter(|p| p.first_zero.is_some()).count() as u64;
    let final_positive = paths
        .iter()
        .filter(|p| p.values.last().is_some_and(|v| v.value() > 0))
        .count() as u64;
    report.set_agg("paths", json!(cfg.replicas));
    report.set_agg("generations", json!(cfg.horizon));
    report.set_agg("hit_zero", json!(hit_zero));
    report.set_agg("final_positive", json!(final_positive));
    let mut first_zeros: Vec<f64> = paths
        .iter()
        .filter_map(|p| p.first_zero.map(|n| n as f64))
        .collect();
    report.set_agg(
        "median_first_zero",
        if first_zeros.is_empty() {
            Value::Null
        } else {
            num(median(&mut first_zeros))
        },
    );
    let max_final = paths
        .iter()
        .map(|p| p.values.last().map_or(0, |v| v.value()))
        .max()
        .unwrap_or(0);
    report.set_agg("max_final", json!(max_final));
    Ok(report)
}

const RDE_COLUMNS: [&str; 3] = ["replica", "x_n", "w_n"];

/// `rde`: per replica, `X_n` from one environment draw and `W_n` from an
/// independent one, with a two-sample distribution test on the columns.
fn rde_report(cfg: &ExperimentConfig) -> Result<EnsembleReport, CoreError> {
    let n = cfg.k_max as usize;
    let pairs: Vec<(f64, f64)> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let (p_x, m_x) = sample_generation_env(&cfg.env, cfg.seed, r, n);
            let (p_w, m_w) = sample_generation_env(&cfg.env, cfg.seed, r + cfg.replicas, n);
            let to_mult = |ps: &[f64]| ps.iter().map(|&p| p / (1.0 - p)).collect::<Vec<f64>>();
            let to_float = |ms: &[u64]| ms.iter().map(|&m| m as f64).collect::<Vec<f64>>();
            let x_path = simulate_rde(&to_mult(&p_x), &to_float(&m_x))?;
            let x = *x_path.x_values.last().expect("n >= 1 values");
            let w = simulate_w(&to_mult(&p_w), &to_float(&m_w), n)?;
            Ok((x, w))
        })
        .collect::<Result<_, CoreError>>()?;

    let xs: Vec<f64> = pairs.iter().map(|&(x, _)| x).collect();
    let ws: Vec<f64> = pairs.iter().map(|&(_, w)| w).collect();
    let test = two_sample_test(&xs, &ws, RDE_TEST_LEVEL)?;

    let mut report = EnsembleReport::new("rde", cfg.echo(), &RDE_COLUMNS);
    for (r, &(x, w)) in pairs.iter().enumerate() {
        report.push_row(vec![json!(r as u64), num(x), num(w)]);
    }
    report.set_agg("samples", json!(cfg.replicas));
    report.set_agg("n", json!(cfg.k_max));
    report.set_agg("level", num(RDE_TEST_LEVEL));
    report.set_agg("ks_statistic", num(test.statistic));
    report.set_agg("ks_critical", num(test.critical));
    report.set_agg("reject", Value::Bool(test.reject));
    Ok(report)
}

const HITPROB_COLUMNS: [&str; 11] = [
    "env",
    "z",
    "k",
    "closed",
    "oracle",
    "abs_diff",
    "mc_hits",
    "mc_trials",
    "mc_low",
    "mc_high",
    "mc_consistent",
];

struct HitCase {
    env: u64,
    z: i64,
    k: i64,
    closed: f64,
    oracle: f64,
    hits: u64,
    timeouts: u64,
    low: f64,
    high: f64,
}

/// `hitprob`: per replica, one randomized cookie-free window; on it, the
/// closed-form slip probability against the linear-solve oracle and a
/// Monte Carlo estimate, for barriers `z` in {1, 2} and depths `k` up to
/// `k_max`. The Monte Carlo interval is the 4-standard-error binomial band.
fn hitprob_report(cfg: &ExperimentConfig) -> Result<EnsembleReport, CoreError> {
    let k_top = cfg.k_max as i64;
    let cases: Vec<Vec<HitCase>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|e| {
            let env_seed = replica_env_seed(cfg.seed, &[e]);
            let env = Environment::new(cfg.env.clone(), env_seed)?;
            // The slip probabilities describe the cookie-free background, so
            // the window keeps each site's p and drops its cookies.
            let lo = -k_top - 1;
            let hi = 2;
            let sites: Vec<Site> = (lo..=hi)
                .map(|z| {
                    use cookiewalk::SiteSource;
                    Site {
                        p: env.site(z).p,
                        m: 0,
                    }
                })
                .collect();
            let window = EnvWindow::new(lo, sites);

            let mut rows = Vec::with_capacity(2 * k_top as usize);
            for z in 1..=2i64 {
                for k in 1..=k_top {
                    let closed = hit_prob_closed(&window, z, k)?;
                    let oracle = hit_prob_oracle(&window, z, k)?;
                    let mut hits = 0u64;
                    let mut timeouts = 0u64;
                    for t in 0..HITPROB_MC_TRIALS {
                        let tag = mix(&[e, z as u64, k as u64, t]);
                        let coins = CoinSource::new(cfg.seed, tag);
                        let s = run_walk(&window, &coins, -k, cfg.horizon, &[-k - 1, z])?;
                        if s.terminated_by == TerminatedBy::Horizon {
                            timeouts += 1;
                        } else if s.final_position == -k - 1 {
                            hits += 1;
                        }
                    }
                    let (low, high) = binomial_interval(hits, HITPROB_MC_TRIALS, 4.0)?;
                    rows.push(HitCase {
                        env: e,
                        z,
                        k,
                        closed,
                        oracle,
                        hits,
                        timeouts,
                        low,
                        high,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_, CoreError>>()?;

    let mut report = EnsembleReport::new("hitprob", cfg.echo(), &HITPROB_COLUMNS);
    let mut max_abs_diff = 0.0f64;
    let mut consistent = 0u64;
    let mut timeouts_total = 0u64;
    let mut case_count = 0u64;
    for case in cases.iter().flatten() {
        let abs_diff = (case.closed - case.oracle).abs();
        max_abs_diff = max_abs_diff.max(abs_diff);
        let ok = case.closed >= case.low && case.closed <= case.high;
        if ok {
            consistent += 1;
        }
        timeouts_total += case.timeouts;
        case_count += 1;
        report.push_row(vec![
            json!(case.env),
            json!(case.z),
            json!(case.k),
            num(case.closed),
            num(case.oracle),
            num(abs_diff),
            json!(case.hits),
            json!(HITPROB_MC_TRIALS),
            num(case.low),
            num(case.high),
            json!(u64::from(ok)),
        ]);
    }
    report.set_agg("cases", json!(case_count));
    report.set_agg("max_abs_diff", num(max_abs_diff));
    report.set_agg("mc_trials_per_case", json!(HITPROB_MC_TRIALS));
    report.set_agg("mc_consistent", json!(consistent));
    report.set_agg(
        "mc_consistent_frac",
        num(consistent as f64 / case_count as f64),
    );
    report.set_agg("mc_timeouts", json!(timeouts_total));
    Ok(report)
}

const PHASE_COLUMNS: [&str; 8] = [
    "lambda",
    "beta",
    "predicted",
    "replica",
    "final_low",
    "final_high",
    "returns_low",
    "returns_high",
];

struct PhaseRun {
    final_low: i64,
    final_high: i64,
    returns_low: u64,
    returns_high: u64,
}

/// `phase`: for each cookie-law grid point, the predicted regime label and
/// an ensemble of walks observed at two horizons (`horizon/10` and
/// `horizon`), so drift and return-count trends are visible side by side.
/// The report never judges the prediction; it prints both.
fn phase_report(cfg: &ExperimentConfig) -> Result<EnsembleReport, CoreError> {
    let grid: Vec<(f64, f64)> = match cfg.env.cookie_law {
        CookieLaw::ExampleLaw { lambda, beta } => vec![(lambda, beta)],
        CookieLaw::NoCookies => vec![
            (0.5, 1.0),
            (0.5, 3.0),
            (1.0, 1.0),
            (1.0, 3.0),
            (2.0, 1.0),
            (2.0, 3.0),
        ],
        _ => {
            return Err(CoreError::InvalidArgument(
                "phase sweeps the logarithmic cookie family; give lambda/beta for one point or \
                 leave the cookie law unset for the default grid"
                    .into(),
            ))
        }
    };
    let mean_log_rho = cfg.env.mean_log_rho()?;
    let h_high = cfg.horizon;
    let h_low = cfg.horizon / 10;

    let mut predicted = Vec::with_capacity(grid.len());
    for &(lambda, beta) in &grid {
        let tails = example_tail_descriptor(lambda, beta)?;
        predicted.push(regime_name(classify_regime(&tails, mean_log_rho)?));
    }

    let total = grid.len() as u64 * cfg.replicas;
    let runs: Vec<PhaseRun> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let gi = (idx / cfg.replicas) as usize;
            let r = idx % cfg.replicas;
            let (lambda, beta) = grid[gi];
            let spec = EnvironmentSpec::new(
                cfg.env.p_law.clone(),
                CookieLaw::ExampleLaw { lambda, beta },
                cfg.env.mask,
            )?;
            let env_seed = replica_env_seed(cfg.seed, &[gi as u64, r]);
            let env = Environment::new(spec, env_seed)?;
            let coins = CoinSource::new(cfg.seed, idx);
            // Counter-based coins replay the same trajectory, so the short
            // run is a prefix of the long one.
            let low = run_walk(&env, &coins, 0, h_low, &[])?;
            let high = run_walk(&env, &coins, 0, h_high, &[])?;
            Ok(PhaseRun {
                final_low: low.final_position,
                final_high: high.final_position,
                returns_low: low.returns_to_origin,
                returns_high: high.returns_to_origin,
            })
        })
        .collect::<Result<_, CoreError>>()?;

    let mut report = EnsembleReport::new("phase", cfg.echo(), &PHASE_COLUMNS);
    report.set_agg("grid_points", json!(grid.len() as u64));
    report.set_agg("replicas_per_point", json!(cfg.replicas));
    report.set_agg("horizon_low", json!(h_low));
    report.set_agg("horizon_high", json!(h_high));
    report.set_agg("mean_log_rho", num(mean_log_rho));

    for (gi, &(lambda, beta)) in grid.iter().enumerate() {
        let slice = &runs[gi * cfg.replicas as usize..(gi + 1) * cfg.replicas as usize];
        for (r, run) in slice.iter().enumerate() {
            report.push_row(vec![
                num(lambda),
                num(beta),
                json!(predicted[gi]),
                json!(r as u64),
                json!(run.final_low),
                json!(run.final_high),
                json!(run.returns_low),
                json!(run.returns_high),
            ]);
        }
        let prefix = format!("l{lambda}_b{beta}");
        report.set_agg(&format!("{prefix}_predicted"), json!(predicted[gi]));
        report.set_agg(
            &format!("{prefix}_median_final_low"),
            num(median_of(slice, |x| x.final_low as f64)),
        );
        report.set_agg(
            &format!("{prefix}_median_final_high"),
            num(median_of(slice, |x| x.final_high as f64)),
        );
        report.set_agg(
            &format!("{prefix}_frac_final_above_1000"),
            num(frac_of(slice, |x| x.final_high > 1000)),
        );
        report.set_agg(
            &format!("{prefix}_frac_final_below_minus_1000"),
            num(frac_of(slice, |x| x.final_high < -1000)),
        );
        report.set_agg(
            &format!("{prefix}_median_returns_low"),
            num(median_of(slice, |x| x.returns_low as f64)),
        );
        report.set_agg(
            &format!("{prefix}_median_returns_high"),
            num(median_of(slice, |x| x.returns_high as f64)),
        );
        report.set_agg(
            &format!("{prefix}_frac_returns_increased"),
            num(frac_of(slice, |x| x.returns_high > x.returns_low)),
        );
    }
    Ok(report)
}
