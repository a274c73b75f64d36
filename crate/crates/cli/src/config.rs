//! Experiment configuration: flat key/value files with flag overrides.
//!
//! A config file is the same `key = value` format the environment spec
//! uses, extended with the run-level keys `subcommand`, `seed`, `replicas`,
//! `horizon`, `k_max`, `format`, `out` and `workers`. Command-line flags
//! override file values; whatever remains after both layers must be a
//! complete, valid experiment or assembly fails with a usage error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use cookiewalk::{parse_kv_text, CoreError, EnvironmentSpec};

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    /// Ensemble of walks started at 0.
    Walk,
    /// Ensemble of excursions started at 1 and stopped at 0, with
    /// upcrossing counts.
    Excursion,
    /// Excursions paired with their branching shadow on shared coins,
    /// checked level by level.
    Couple,
    /// Branching process with immigration in a freshly drawn environment
    /// per replica.
    Bpre,
    /// Paired samples of the forward recursion `X_n` and the backward sum
    /// `W_n`, with a two-sample distribution test.
    Rde,
    /// Closed-form hitting probabilities against a linear-solve oracle and
    /// a Monte Carlo estimate, on randomized windows.
    Hitprob,
    /// Walk ensembles across a grid of cookie-law parameters, with the
    /// predicted regime label next to empirical drift and return trends.
    Phase,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Walk => "walk",
            Subcommand::Excursion => "excursion",
            Subcommand::Couple => "couple",
            Subcommand::Bpre => "bpre",
            Subcommand::Rde => "rde",
            Subcommand::Hitprob => "hitprob",
            Subcommand::Phase => "phase",
        }
    }

    pub fn parse(name: &str) -> Result<Self, CoreError> {
        match name {
            "walk" => Ok(Subcommand::Walk),
            "excursion" => Ok(Subcommand::Excursion),
            "couple" => Ok(Subcommand::Couple),
            "bpre" => Ok(Subcommand::Bpre),
            "rde" => Ok(Subcommand::Rde),
            "hitprob" => Ok(Subcommand::Hitprob),
            "phase" => Ok(Subcommand::Phase),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown subcommand {other:?}"
            ))),
        }
    }

    /// Default step (or generation) budget.
    pub fn default_horizon(self) -> u64 {
        match self {
            Subcommand::Bpre => 10_000,
            _ => 100_000,
        }
    }

    /// Default ensemble size, kept small where each replica is expensive
    /// or emits one row per step.
    pub fn default_replicas(self) -> u64 {
        match self {
            Subcommand::Bpre => 20,
            Subcommand::Rde => 1_000,
            Subcommand::Hitprob => 20,
            _ => 100,
        }
    }
}

/// Output rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutFormat {
    Csv,
    Json,
}

impl OutFormat {
    pub fn name(self) -> &'static str {
        match self {
            OutFormat::Csv => "csv",
            OutFormat::Json => "json",
        }
    }

    fn parse(name: &str) -> Result<Self, CoreError> {
        match name {
            "csv" => Ok(OutFormat::Csv),
            "json" => Ok(OutFormat::Json),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown format {other:?} (expected csv or json)"
            ))),
        }
    }
}

/// Values taken from command-line flags; every field beats the config file.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub replicas: Option<u64>,
    pub horizon: Option<u64>,
    pub k_max: Option<u64>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub p: Option<f64>,
    pub mask: Option<String>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
    pub workers: Option<usize>,
}

/// A fully resolved experiment. Reports are pure functions of this value.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: Subcommand,
    pub env: EnvironmentSpec,
    pub seed: u64,
    pub replicas: u64,
    pub horizon: u64,
    pub k_max: u64,
    pub out_format: OutFormat,
    pub out_path: Option<PathBuf>,
    /// Worker threads; 0 lets the pool pick one per core. Never affects
    /// report bytes, only wall time.
    pub workers: usize,
}

impl ExperimentConfig {
    /// Layers command-line values over an optional config file and
    /// validates the result.
    pub fn assemble(
        argv_command: Option<Subcommand>,
        file_text: Option<&str>,
        over: &FlagOverrides,
    ) -> Result<Self, CoreError> {
        let mut map = match file_text {
            Some(text) => parse_kv_text(text)?,
            None => BTreeMap::new(),
        };

        let file_command = match map.remove("subcommand") {
            Some(name) => Some(Subcommand::parse(&name)?),
            None => None,
        };
        let command = argv_command.or(file_command).ok_or_else(|| {
            CoreError::InvalidArgument(
                "no subcommand: name one on the command line or set `subcommand` in the config file"
                    .into(),
            )
        })?;

        // Flag overrides land in the same map the file filled. A flag that
        // picks a law parameter also pins the law itself, so it genuinely
        // overrides rather than feeding a leftover key to a different law.
        if let Some(p) = over.p {
            map.insert("p_law".into(), "fixed".into());
            map.insert("p".into(), format!("{p}"));
            map.remove("p_a");
            map.remove("p_b");
            map.remove("w");
        }
        if over.lambda.is_some() || over.beta.is_some() {
            map.insert("cookie_law".into(), "example_law".into());
            map.remove("m");
            map.remove("m_max");
        }
        if let Some(lambda) = over.lambda {
            map.insert("lambda".into(), format!("{lambda}"));
        }
        if let Some(beta) = over.beta {
            map.insert("beta".into(), format!("{beta}"));
        }
        if let Some(mask) = &over.mask {
            map.insert("mask".into(), mask.clone());
        }

        let seed = pick(over.seed, &mut map, "seed")?.unwrap_or(0);
        let replicas =
            pick(over.replicas, &mut map, "replicas")?.unwrap_or_else(|| command.default_replicas());
        let horizon =
            pick(over.horizon, &mut map, "horizon")?.unwrap_or_else(|| command.default_horizon());
        let k_max = pick(over.k_max, &mut map, "k_max")?.unwrap_or(10);
        let workers = pick(over.workers, &mut map, "workers")?.unwrap_or(0);
        let format_name = match &over.format {
            Some(name) => Some(name.clone()),
            None => map.remove("format"),
        };
        let out_format = match format_name {
            Some(name) => OutFormat::parse(&name)?,
            None => OutFormat::Csv,
        };
        let out_path = match &over.out {
            Some(path) => Some(path.clone()),
            None => map.remove("out").map(PathBuf::from),
        };

        let env = EnvironmentSpec::from_kv(&mut map)?;
        if !map.is_empty() {
            let keys: Vec<&str> = map.keys().map(String::as_str).collect();
            return Err(CoreError::InvalidArgument(format!(
                "unknown config keys: {}",
                keys.join(", ")
            )));
        }

        if replicas == 0 {
            return Err(CoreError::InvalidArgument(
                "replicas must be at least 1".into(),
            ));
        }
        if horizon == 0 {
            return Err(CoreError::InvalidArgument(
                "horizon must be at least 1".into(),
            ));
        }
        if k_max == 0 {
            return Err(CoreError::InvalidArgument(
                "k_max must be at least 1".into(),
            ));
        }
        if command == Subcommand::Phase && horizon < 10 {
            return Err(CoreError::InvalidArgument(
                "phase compares two horizons (horizon/10 and horizon); give a horizon of at least 10"
                    .into(),
            ));
        }

        Ok(ExperimentConfig {
            command,
            env,
            seed,
            replicas,
            horizon,
            k_max,
            out_format,
            out_path,
            workers,
        })
    }

    /// The run-defining fields, echoed as flat text pairs. Output-routing
    /// knobs (`out`, `workers`) are deliberately absent: reports must be
    /// byte-identical no matter where they land or how many threads built
    /// them.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("subcommand".into(), self.command.name().into());
        map.insert("seed".into(), self.seed.to_string());
        map.insert("replicas".into(), self.replicas.to_string());
        map.insert("horizon".into(), self.horizon.to_string());
        map.insert("k_max".into(), self.k_max.to_string());
        for line in self.env.to_kv().lines() {
            if let Some((key, value)) = line.split_once('=') {
                map.insert(key.trim().into(), value.trim().into());
            }
        }
        map
    }
}

fn pick<T: FromStr>(
    flag: Option<T>,
    map: &mut BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, CoreError> {
    if flag.is_some() {
        map.remove(key);
        return Ok(flag);
    }
    match map.remove(key) {
        None => Ok(None),
        Some(text) => text.parse::<T>().map(Some).map_err(|_| {
            CoreError::InvalidArgument(format!("{key} = {text:?} is not a valid value"))
        }),
    }
}
