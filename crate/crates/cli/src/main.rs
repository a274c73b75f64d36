//! The `cookiewalk` binary: flag parsing and exit codes.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 assertion
//! failure (a coupling violation), 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};
use serde_json::Value;

use cookiewalk_cli::config::{ExperimentConfig, FlagOverrides, Subcommand};
use cookiewalk_cli::experiment::run_experiment;
use cookiewalk_cli::report::emit_report;

#[derive(Parser)]
#[command(
    name = "cookiewalk",
    version,
    about = "Deterministic experiments on cookie walks, their branching shadows, and hitting probabilities",
    long_about = "Runs seed-deterministic ensembles: walks in random cookie environments, \
                  excursions coupled to a branching process on shared coins, branching paths \
                  with immigration, forward/backward recursion samples, closed-form hitting \
                  probabilities against an oracle and Monte Carlo, and parameter-grid phase \
                  diagnostics. Reports are pure functions of the configuration: the same \
                  config and seed give byte-identical output on any worker count."
)]
struct Cli {
    /// Flat `key = value` config file; command-line flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Ensemble size.
    #[arg(long, global = true)]
    replicas: Option<u64>,

    /// Step budget per walk, or generation budget per branching path.
    #[arg(long, global = true)]
    horizon: Option<u64>,

    /// Depth/length parameter: branching levels, recursion length, and the
    /// deepest hitting-probability barrier.
    #[arg(long = "kmax", global = true, value_name = "K")]
    k_max: Option<u64>,

    /// Cookie-law decay exponent (pins the logarithmic cookie family).
    #[arg(long, global = true)]
    lambda: Option<f64>,

    /// Cookie-law scale (pins the logarithmic cookie family).
    #[arg(long, global = true)]
    beta: Option<f64>,

    /// Background right-step probability (pins the fixed background law).
    #[arg(long, global = true)]
    p: Option<f64>,

    /// Where cookies may appear: everywhere, positive_only, negative_only.
    #[arg(long, global = true)]
    mask: Option<String>,

    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,

    /// Output format: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,

    /// Worker threads; 0 means one per core. Affects wall time only, never
    /// the output bytes.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Option<CliCommand>,
}

#[derive(ClapSubcommand)]
enum CliCommand {
    /// Ensemble of walks from 0 in freshly seeded environments.
    Walk,
    /// Ensemble of excursions from 1, stopped on returning to 0, with
    /// upcrossing counts.
    Excursion,
    /// Excursions paired with their branching shadow on shared coins;
    /// exits 2 if any level-by-level identity fails.
    Couple,
    /// Branching process with immigration, one environment draw per
    /// replica, one row per generation.
    Bpre,
    /// Paired forward-recursion and backward-sum samples with a two-sample
    /// distribution test.
    Rde,
    /// Closed-form hitting probabilities vs. a linear-solve oracle vs.
    /// Monte Carlo, on randomized cookie-free windows.
    Hitprob,
    /// Walk ensembles across a cookie-law grid with predicted regime
    /// labels and drift/return trends at two horizons.
    Phase,
}

impl CliCommand {
    fn to_config(&self) -> Subcommand {
        match self {
            CliCommand::Walk => Subcommand::Walk,
            CliCommand::Excursion => Subcommand::Excursion,
            CliCommand::Couple => Subcommand::Couple,
            CliCommand::Bpre => Subcommand::Bpre,
            CliCommand::Rde => Subcommand::Rde,
            CliCommand::Hitprob => Subcommand::Hitprob,
            CliCommand::Phase => Subcommand::Phase,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let benign = matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };

    let file_text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => Some(text),
            Err(err) => {
                eprintln!("cannot read config file {}: {err}", path.display());
                return ExitCode::from(3);
            }
        },
        None => None,
    };

    let overrides = FlagOverrides {
        seed: cli.seed,
        replicas: cli.replicas,
        horizon: cli.horizon,
        k_max: cli.k_max,
        lambda: cli.lambda,
        beta: cli.beta,
        p: cli.p,
        mask: cli.mask.clone(),
        out: cli.out.clone(),
        format: cli.format.clone(),
        workers: cli.workers,
    };
    let argv_command = cli.command.as_ref().map(CliCommand::to_config);
    let cfg = match ExperimentConfig::assemble(argv_command, file_text.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };

    let report = match run_experiment(&cfg) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };

    if let Err(err) = emit_report(&report, cfg.out_format, cfg.out_path.as_deref()) {
        eprintln!("cannot write report: {err}");
        return ExitCode::from(3);
    }

    if cfg.command == Subcommand::Couple {
        let violations = report
            .aggregate
            .get("violations")
            .and_then(Value::as_u64)
            .unwrap_or(0);
        if violations > 0 {
            eprintln!("coupling identity violated at {violations} level(s)");
            return ExitCode::from(2);
        }
    }
    ExitCode::SUCCESS
}
