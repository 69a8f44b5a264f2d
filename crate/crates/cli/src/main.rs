//! `skelcalc`: deterministic experiment runner.
//!
//! Exit status: 0 ok, 1 the experiment ran but failed its check (or the
//! computation errored), 2 bad usage or configuration.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skelcalc::functionals::FunctionalSpec;

use crate::commands::{Failure, Verdict};
use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{manifest_hash, Output};

/// Output-directory override; `--out` still takes precedence.
const OUT_ENV: &str = "SKELCALC_OUT";

#[derive(Parser)]
#[command(name = "skelcalc", version, about = "Discrete-skeleton stochastic calculus experiments")]
struct Cli {
    /// Experiment configuration (TOML); defaults apply without one.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (else $SKELCALC_OUT, the config's out_dir, or ./skelcalc-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write x,y series under plot/.
    #[arg(long, global = true)]
    emit_plot_data: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct EnsembleArgs {
    /// Level range `a..b` (inclusive) or a single level.
    #[arg(long, value_parser = parse_levels)]
    k: Option<(u32, u32)>,
    /// Parameter-free functional name, or a JSON object with a `name` key.
    #[arg(long)]
    functional: Option<String>,
    /// Number of replications.
    #[arg(long)]
    paths: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample skeletons (and the shared path in coupled mode).
    Simulate(EnsembleArgs),
    /// Discrete operator traces along each skeleton.
    Operators(EnsembleArgs),
    /// Occupation events, level histograms and convergence study.
    Occupation {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Lattice level index whose terminal occupation is histogrammed.
        #[arg(long, allow_hyphen_values = true)]
        level: Option<i64>,
    },
    /// Exact p-variation of a series.
    Pvar {
        #[arg(long)]
        p: Option<f64>,
        /// Series file: the last column of each line is read.
        #[arg(long, value_name = "FILE")]
        input: Option<PathBuf>,
    },
    /// 1D Young integral of two configured functions on [0, 1].
    Young,
    /// Per-path martingale / horizontal / occupation decomposition.
    Decompose(EnsembleArgs),
    /// Drift recovered from occupation fields against its oracle.
    Drift(EnsembleArgs),
    /// Functional Itô identity residuals for an ex_phi functional.
    ItoCheck(EnsembleArgs),
    /// Empirical check of the functional's regularity assumptions.
    Audit(EnsembleArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Operators(_) => "operators",
            Self::Occupation { .. } => "occupation",
            Self::Pvar { .. } => "pvar",
            Self::Young => "young",
            Self::Decompose(_) => "decompose",
            Self::Drift(_) => "drift",
            Self::ItoCheck(_) => "ito-check",
            Self::Audit(_) => "audit",
        }
    }
}

fn parse_levels(s: &str) -> Result<(u32, u32), String> {
    let level = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("`{v}` is not a level: {e}"));
    match s.split_once("..") {
        Some((a, b)) => Ok((level(a)?, level(b.trim_start_matches('='))?)),
        None => level(s).map(|k| (k, k)),
    }
}

fn parse_functional(s: &str) -> Result<FunctionalSpec, ConfigError> {
    let value = if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| ConfigError { field: "--functional".into(), msg: e.to_string() })?
    } else {
        serde_json::json!({ "name": s })
    };
    FunctionalSpec::from_json(&value).map_err(|e| ConfigError { field: "--functional".into(), msg: e.to_string() })
}

fn apply(cfg: &mut ExperimentConfig, e: &EnsembleArgs) -> Result<(), ConfigError> {
    if let Some((a, b)) = e.k {
        cfg.ensemble.k_min = a;
        cfg.ensemble.k_max = b;
    }
    if let Some(name) = &e.functional {
        cfg.functional = parse_functional(name)?;
    }
    if let Some(n) = e.paths {
        cfg.ensemble.n_paths = n;
    }
    Ok(())
}

/// The effective configuration: file (or defaults) plus command-line overrides.
fn effective_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::named(cli.command.name()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Simulate(e)
        | Command::Operators(e)
        | Command::Decompose(e)
        | Command::Drift(e)
        | Command::ItoCheck(e)
        | Command::Audit(e) => apply(&mut cfg, e)?,
        Command::Occupation { ensemble, level } => {
            apply(&mut cfg, ensemble)?;
            if let Some(l) = level {
                cfg.occupation.level = *l;
            }
        }
        Command::Pvar { p, input } => {
            if let Some(p) = p {
                cfg.pvar.p = *p;
            }
            if let Some(input) = input {
                cfg.pvar.input = Some(input.clone());
            }
        }
        Command::Young => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("skelcalc-out"))
}

fn run(cli: &Cli) -> Result<Verdict, Failure> {
    let cfg = effective_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }
    let name = cli.command.name();
    let dir = out_dir(cli, &cfg);
    let mut out = Output::create(&dir, manifest_hash(name, &cfg), cli.emit_plot_data)?;
    let verdict = match cli.command {
        Command::Simulate(_) => commands::simulate(&cfg, &mut out),
        Command::Operators(_) => commands::operators(&cfg, &mut out),
        Command::Occupation { .. } => commands::occupation(&cfg, &mut out),
        Command::Pvar { .. } => commands::pvar(&cfg, &mut out),
        Command::Young => commands::young(&cfg, &mut out),
        Command::Decompose(_) => commands::decompose(&cfg, &mut out),
        Command::Drift(_) => commands::drift(&cfg, &mut out),
        Command::ItoCheck(_) => commands::ito_check(&cfg, &mut out),
        Command::Audit(_) => commands::audit(&cfg, &mut out),
    }?;
    let status = if verdict.passed { "ok" } else { "failed" };
    let manifest = out.finish(name, &cfg, status, verdict.summary.clone())?;
    println!("{name}: {status} (manifest {})", manifest.display());
    Ok(verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(v) if v.passed => ExitCode::SUCCESS,
        Ok(v) => {
            eprintln!("skelcalc: experiment failed: {}", v.message);
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("skelcalc: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("skelcalc: {msg}");
            ExitCode::from(1)
        }
    }
}
