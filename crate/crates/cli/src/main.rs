use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use noisy_gp::harness::{
    self, estimate_noise, replication_spec, run_comparison, run_experiment, theory_inputs,
    OutputFormat, RunConfig,
};
use noisy_gp::diagnostics::diagnose_trace;
use noisy_gp::stochastic::make_surrogate_problem;
use noisy_gp::{Error, NoiseMethod, Result};

/// Noise-tolerant gradient projection experiments.
#[derive(Debug, Parser)]
#[command(name = "noisygp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the problem seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one solver and write its results table.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Solver name; optional when the config defines exactly one.
        #[arg(long)]
        solver: Option<String>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<OutputFormat>,
        /// Also write full iteration records (JSONL) for `diagnose`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every configured solver; one table per solver plus summary.json.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_format)]
        format: Option<OutputFormat>,
    },
    /// Estimate the noise level or noise bound of the configured problem.
    EstimateNoise {
        #[command(flatten)]
        common: Common,
        /// pointwise-std, global-average, chebyshev, max-abs, range or difference-table.
        #[arg(long, value_parser = parse_method)]
        method: Option<NoiseMethod>,
    },
    /// Check a trace written by `solve --trace` against the convergence guarantee.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        solver: Option<String>,
        #[arg(long, default_value_t = 0)]
        replication: usize,
    },
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<NoiseMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.problem.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            common,
            solver,
            out,
            format,
            trace,
        } => {
            let cfg = load(&common)?;
            let format = format.unwrap_or(cfg.experiment.format);
            let exp = run_experiment(&cfg, solver.as_deref())?;
            match out.or_else(|| cfg.experiment.output.clone()) {
                Some(path) => exp.table.write_to_path(&path, format)?,
                None => exp.table.write(std::io::stdout().lock(), format)?,
            }
            if let Some(path) = trace {
                harness::write_trace(&path, &exp.traces)?;
            }
            for f in &exp.table.failures {
                eprintln!(
                    "replication {} diverged at iteration {}: {}",
                    f.replication, f.iteration, f.reason
                );
            }
        }
        Command::Compare {
            common,
            out,
            format,
        } => {
            let cfg = load(&common)?;
            let format = format.unwrap_or(cfg.experiment.format);
            let dir = out
                .or_else(|| cfg.experiment.output.clone())
                .ok_or_else(|| Error::InvalidConfig("compare needs --out or experiment.output".into()))?;
            let summaries = run_comparison(&cfg, &dir, format)?;
            for s in &summaries {
                println!(
                    "{}: median final moving average {:.6e}, median effort {}",
                    s.solver, s.median_final_moving_average, s.median_final_effort
                );
            }
        }
        Command::EstimateNoise { common, method } => {
            let cfg = load(&common)?;
            let method = method.unwrap_or(cfg.noise.method);
            let est = estimate_noise(&cfg, method)?;
            println!("{}", serde_json::to_string(&est)?);
        }
        Command::Diagnose {
            common,
            trace,
            solver,
            replication,
        } => {
            let cfg = load(&common)?;
            let (_, s) = cfg.solver(solver.as_deref())?;
            let problem = make_surrogate_problem(&replication_spec(&cfg.problem, replication))?;
            let inputs = theory_inputs(&problem, s)?;
            let records: Vec<_> = harness::read_trace(&trace)?
                .into_iter()
                .filter(|l| l.replication == replication)
                .map(|l| l.record)
                .collect();
            let exact = problem
                .oracle
                .exact()
                .ok_or(Error::Unsupported("diagnostics need a known exact objective"))?;
            let report = diagnose_trace(&records, exact, &problem.region, inputs)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
