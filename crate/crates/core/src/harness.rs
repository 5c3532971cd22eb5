//! Run configuration, replicated experiments and result tables.
//!
//! A run file is TOML:
//!
//! ```toml
//! version = 1
//!
//! [problem]
//! family = "horn-surrogate"
//! batch_size = 10
//! seed = 7
//!
//! [solvers.gp-ls]
//! mode = "gp-ls"
//! alpha0 = 0.025
//! eps_A = 1e-2
//!
//! [experiment]
//! replications = 10
//! effort_budget = 30000
//! ```
//!
//! Replication `r` uses seed `problem.seed + r` for both the oracle and the
//! solver, so every replication is independent and reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{fd_gradient_error_bound, TheoryInputs};
use crate::error::{Error, Result};
use crate::finite_difference::SampleMode;
use crate::geometry::{norm, BoxRegion, ConvexRegion};
use crate::noise::{self, difference_table_noise, NoiseEstimate, NoiseMethod};
use crate::solvers::{solve_with_lipschitz, GradientMethod, IterationRecord, SolverConfig};
use crate::stochastic::{make_surrogate_problem, random_point, ProblemSpec, SurrogateProblem};

pub const CONFIG_VERSION: u32 = 1;

/// Environment variable overriding the default worker count.
pub const WORKERS_ENV: &str = "NOISYGP_WORKERS";

/// Window of the reported moving-average objective.
pub const SUMMARY_WINDOW: usize = 50;

pub const CSV_HEADER: &str =
    "replication,k,f_noisy,f_reference,beta,backtracks,stationarity,effort,eps_A,alpha0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" => Ok(OutputFormat::Jsonl),
            other => Err(Error::config(format!("unknown format '{other}' (expected csv or jsonl)"))),
        }
    }
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "one")]
    pub replications: usize,
    /// Overrides every solver's own budget when set.
    #[serde(default)]
    pub effort_budget: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

fn one() -> usize {
    1
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            replications: 1,
            effort_budget: None,
            workers: None,
            output: None,
            format: OutputFormat::Csv,
        }
    }
}

/// Settings for the `estimate-noise` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_method")]
    pub method: NoiseMethod,
    /// Random points for the global average.
    #[serde(default = "default_points")]
    pub points: usize,
    /// Evaluations per point.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_lambda")]
    pub lambda: u32,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_table_points")]
    pub table_points: usize,
}

fn default_method() -> NoiseMethod {
    NoiseMethod::GlobalAverage
}
fn default_points() -> usize {
    100
}
fn default_repeats() -> usize {
    30
}
fn default_lambda() -> u32 {
    3
}
fn default_spacing() -> f64 {
    1e-2
}
fn default_table_points() -> usize {
    8
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            method: default_method(),
            points: default_points(),
            repeats: default_repeats(),
            lambda: default_lambda(),
            spacing: default_spacing(),
            table_points: default_table_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solvers: BTreeMap<String, SolverConfig>,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.experiment.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.experiment.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        for (name, s) in &self.solvers {
            s.validate()
                .map_err(|e| Error::config(format!("solver '{name}': {e}")))?;
        }
        Ok(())
    }

    /// The named solver, or the only one when `name` is `None`.
    pub fn solver(&self, name: Option<&str>) -> Result<(&str, &SolverConfig)> {
        match name {
            Some(n) => self
                .solvers
                .get_key_value(n)
                .map(|(k, v)| (k.as_str(), v))
                .ok_or_else(|| Error::config(format!("no solver named '{n}' in config"))),
            None => match self.solvers.len() {
                1 => {
                    let (k, v) = self.solvers.iter().next().expect("one entry");
                    Ok((k.as_str(), v))
                }
                0 => Err(Error::config("config defines no solvers")),
                _ => Err(Error::config(format!(
                    "config defines {} solvers; choose one with --solver",
                    self.solvers.len()
                ))),
            },
        }
    }

    fn workers(&self) -> Option<usize> {
        self.experiment.workers.or_else(|| {
            std::env::var(WORKERS_ENV)
                .ok()
                .and_then(|v| v.parse().ok())
                .filter(|&n: &usize| n > 0)
        })
    }
}

/// One flattened trace row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRow {
    pub replication: usize,
    pub k: usize,
    pub f_noisy: f64,
    pub f_reference: Option<f64>,
    pub beta: f64,
    pub backtracks: usize,
    pub stationarity: f64,
    pub effort: u64,
    #[serde(rename = "eps_A")]
    pub eps_a: f64,
    pub alpha0: f64,
}

impl ResultsRow {
    pub fn from_record(replication: usize, r: &IterationRecord) -> Self {
        Self {
            replication,
            k: r.k,
            f_noisy: r.f_noisy,
            f_reference: r.f_reference,
            beta: r.beta,
            backtracks: r.backtracks,
            stationarity: r.stationarity,
            effort: r.effort,
            eps_a: r.eps_a_used,
            alpha0: r.alpha0_used,
        }
    }

    /// The reference objective when recorded, otherwise the noisy one.
    pub fn objective(&self) -> f64 {
        self.f_reference.unwrap_or(self.f_noisy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub iteration: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultsRow>,
    pub failures: Vec<ReplicationFailure>,
}

impl ResultsTable {
    pub fn replication_rows(&self, replication: usize) -> impl Iterator<Item = &ResultsRow> {
        self.rows.iter().filter(move |r| r.replication == replication)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER.split(','))?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv>".into(),
            source: e,
        })?;
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for row in &self.rows {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n").map_err(|e| Error::Io {
                path: "<jsonl>".into(),
                source: e,
            })?;
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, out: W, format: OutputFormat) -> Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(out),
            OutputFormat::Jsonl => self.write_jsonl(out),
        }
    }

    pub fn write_to_path(&self, path: &Path, format: OutputFormat) -> Result<()> {
        let file = create_file(path)?;
        self.write(std::io::BufWriter::new(file), format)
    }

    pub fn to_string(&self, format: OutputFormat) -> Result<String> {
        let mut buf = Vec::new();
        self.write(&mut buf, format)?;
        Ok(String::from_utf8(buf).expect("writers emit UTF-8"))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<ResultsRow>> {
        let mut r = csv::Reader::from_path(path)?;
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }
}

fn create_file(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
    }
    fs::File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Full iteration records of one replication, for the detailed trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub replication: usize,
    #[serde(flatten)]
    pub record: IterationRecord,
}

pub fn write_trace(path: &Path, traces: &[Vec<IterationRecord>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(create_file(path)?);
    for (replication, trace) in traces.iter().enumerate() {
        for record in trace {
            let line = TraceLine {
                replication,
                record: record.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
    }
    out.flush().map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceLine>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                message: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Results of all replications of one solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub solver: String,
    pub table: ResultsTable,
    pub traces: Vec<Vec<IterationRecord>>,
    /// Oracle effort at the end of each replication.
    pub final_effort: Vec<u64>,
    /// Oracle call count at the end of each replication.
    pub final_calls: Vec<u64>,
}

/// Problem spec of replication `r`.
pub fn replication_spec(base: &ProblemSpec, r: usize) -> ProblemSpec {
    ProblemSpec {
        seed: base.seed.wrapping_add(r as u64),
        ..base.clone()
    }
}

struct ReplicationResult {
    trace: Vec<IterationRecord>,
    failure: Option<ReplicationFailure>,
    effort: u64,
    calls: u64,
}

fn run_replication(cfg: &RunConfig, solver: &SolverConfig, r: usize) -> Result<ReplicationResult> {
    let spec = replication_spec(&cfg.problem, r);
    let problem = make_surrogate_problem(&spec)?;
    let mut s = solver.clone();
    s.seed = solver.seed.wrapping_add(spec.seed);
    if cfg.experiment.effort_budget.is_some() {
        s.effort_budget = cfg.experiment.effort_budget;
    }
    let oracle = problem.oracle.as_ref();
    let (trace, failure) =
        match solve_with_lipschitz(oracle, &problem.region, &problem.start, &s, Some(problem.lipschitz)) {
            Ok(t) => (t, None),
            Err(Error::Diverged {
                iteration,
                reason,
                trace,
            }) => {
                log::warn!("replication {r} diverged at iteration {iteration}: {reason}");
                (
                    trace,
                    Some(ReplicationFailure {
                        replication: r,
                        iteration,
                        reason,
                    }),
                )
            }
            Err(e) => return Err(e),
        };
    Ok(ReplicationResult {
        trace,
        failure,
        effort: oracle.effort(),
        calls: oracle.calls(),
    })
}

/// Run every replication of `solver_name` (or the only solver).
///
/// Replications run concurrently on up to `experiment.workers` threads
/// (default from `NOISYGP_WORKERS`, else all cores). Rows are ordered by
/// `(replication, k)` regardless of scheduling. A diverged replication keeps
/// its partial rows and is listed in `failures`.
pub fn run_experiment(cfg: &RunConfig, solver_name: Option<&str>) -> Result<Experiment> {
    cfg.validate()?;
    let (name, solver) = cfg.solver(solver_name)?;
    let reps = cfg.experiment.replications;
    let work = || -> Result<Vec<ReplicationResult>> {
        (0..reps)
            .into_par_iter()
            .map(|r| run_replication(cfg, solver, r))
            .collect()
    };
    let results = match cfg.workers() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?
            .install(work)?,
        None => work()?,
    };

    let mut table = ResultsTable::default();
    let mut traces = Vec::with_capacity(reps);
    let mut final_effort = Vec::with_capacity(reps);
    let mut final_calls = Vec::with_capacity(reps);
    for (r, res) in results.into_iter().enumerate() {
        table
            .rows
            .extend(res.trace.iter().map(|rec| ResultsRow::from_record(r, rec)));
        table.failures.extend(res.failure);
        traces.push(res.trace);
        final_effort.push(res.effort);
        final_calls.push(res.calls);
    }
    Ok(Experiment {
        solver: name.to_string(),
        table,
        traces,
        final_effort,
        final_calls,
    })
}

/// Trailing mean over `window` entries; the first `window - 1` entries
/// average the available prefix.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::config("moving-average window must be at least 1"));
    }
    Ok((0..series.len())
        .map(|i| {
            let tail = &series[(i + 1).saturating_sub(window)..=i];
            tail.iter().sum::<f64>() / tail.len() as f64
        })
        .collect())
}

/// Per-solver summary written by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: String,
    pub replications: usize,
    pub failures: usize,
    /// Final moving-average objective of each replication.
    pub final_moving_average: Vec<f64>,
    pub median_final_moving_average: f64,
    pub median_final_effort: f64,
    pub mean_backtracks: f64,
    pub capped_fraction: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Final `window`-step moving average of the objective of each replication.
pub fn final_moving_averages(exp: &Experiment, window: usize) -> Result<Vec<f64>> {
    exp.traces
        .iter()
        .map(|t| {
            let series: Vec<f64> = t.iter().map(|r| r.f_reference.unwrap_or(r.f_noisy)).collect();
            Ok(moving_average(&series, window)?.last().copied().unwrap_or(f64::NAN))
        })
        .collect()
}

pub fn summarize(exp: &Experiment, window: usize) -> Result<SolverSummary> {
    let finals = final_moving_averages(exp, window)?;
    let rows = exp.table.rows.len().max(1) as f64;
    let capped = exp.traces.iter().flatten().filter(|r| r.capped).count() as f64;
    let backtracks: usize = exp.table.rows.iter().map(|r| r.backtracks).sum();
    let efforts: Vec<f64> = exp.final_effort.iter().map(|&e| e as f64).collect();
    Ok(SolverSummary {
        solver: exp.solver.clone(),
        replications: exp.traces.len(),
        failures: exp.table.failures.len(),
        median_final_moving_average: median(&finals),
        final_moving_average: finals,
        median_final_effort: median(&efforts),
        mean_backtracks: backtracks as f64 / rows,
        capped_fraction: capped / rows,
    })
}

/// Run every configured solver, writing `<dir>/<solver>.<ext>` tables and
/// `<dir>/summary.json`.
pub fn run_comparison(cfg: &RunConfig, dir: &Path, format: OutputFormat) -> Result<Vec<SolverSummary>> {
    if cfg.solvers.is_empty() {
        return Err(Error::config("config defines no solvers"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut summaries = Vec::new();
    for name in cfg.solvers.keys() {
        let exp = run_experiment(cfg, Some(name))?;
        exp.table
            .write_to_path(&dir.join(format!("{name}.{}", format.extension())), format)?;
        summaries.push(summarize(&exp, SUMMARY_WINDOW)?);
    }
    let path = dir.join("summary.json");
    let mut f = std::io::BufWriter::new(create_file(&path)?);
    serde_json::to_writer_pretty(&mut f, &summaries)?;
    f.write_all(b"\n").map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(summaries)
}

/// Noise estimate on the configured problem using `method`.
///
/// Pointwise, Chebyshev, max-abs and range work at the problem's start
/// point from `noise.repeats` evaluations; Chebyshev and max-abs measure
/// deviations from the out-of-band reference value. The global average
/// uses `noise.points` uniformly random points. The difference table runs
/// along a random unit direction from the box center.
pub fn estimate_noise(cfg: &RunConfig, method: NoiseMethod) -> Result<NoiseEstimate> {
    let problem = make_surrogate_problem(&cfg.problem)?;
    let n = &cfg.noise;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.problem.seed);
    let samples = |p: &SurrogateProblem, x: &[f64]| -> Result<Vec<f64>> {
        (0..n.repeats).map(|_| p.oracle.evaluate(x)).collect()
    };
    let x = problem.start.clone();
    match method {
        NoiseMethod::PointwiseStd => Ok(noise::pointwise_noise_level(&samples(&problem, &x)?)?.at(&x)),
        NoiseMethod::GlobalAverage => {
            let per_point = (0..n.points)
                .map(|_| {
                    let y = random_point(&problem.region, &mut rng);
                    Ok(noise::pointwise_noise_level(&samples(&problem, &y)?)?.at(&y))
                })
                .collect::<Result<Vec<_>>>()?;
            noise::global_noise_level(&per_point)
        }
        NoiseMethod::Chebyshev | NoiseMethod::MaxAbs => {
            let f_hat = problem.oracle.reference_value(&x, u64::MAX)?;
            let deltas: Vec<f64> = samples(&problem, &x)?.iter().map(|v| v - f_hat).collect();
            let est = if method == NoiseMethod::Chebyshev {
                noise::chebyshev_bound(&deltas, n.lambda)?
            } else {
                noise::max_abs_bound(&deltas)?
            };
            Ok(est.at(&x))
        }
        NoiseMethod::Range => Ok(noise::range_bound(&samples(&problem, &x)?)?.at(&x)),
        NoiseMethod::DifferenceTable => {
            let center = problem.region.center();
            let dir = random_unit_vector(center.len(), &mut rng);
            difference_table_noise(problem.oracle.as_ref(), &center, &dir, n.spacing, n.table_points)
        }
    }
}

fn random_unit_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let s = norm(&v);
        if s > 1e-12 {
            return v.iter().map(|x| x / s).collect();
        }
    }
}

/// Inputs of the neighborhood guarantee for a run of `solver` on `problem`.
/// Requires a problem with a known exact objective and noise bound.
pub fn theory_inputs(problem: &SurrogateProblem, solver: &SolverConfig) -> Result<TheoryInputs> {
    let exact = problem
        .oracle
        .exact()
        .ok_or(Error::Unsupported("diagnostics need a problem with a known exact objective"))?;
    let eps_b = problem
        .oracle
        .noise_bound()
        .ok_or(Error::Unsupported("diagnostics need a problem with a known noise bound"))?;
    let lipschitz = exact.lipschitz();
    let eps_g = match solver.gradient_method(Some(lipschitz))? {
        GradientMethod::Analytic => 0.0,
        GradientMethod::FiniteDifference(fd) => {
            let eb = if fd.sample_mode == SampleMode::Consistent { 0.0 } else { eps_b };
            fd_gradient_error_bound(problem.region.dim(), eb, fd.interval, lipschitz)
        }
    };
    Ok(TheoryInputs {
        alpha0: solver.alpha0,
        c: solver.c,
        rho: solver.rho,
        lipschitz,
        eps_g,
        eps_a: solver.initial_eps_a(),
        eps_b,
    })
}

/// The box region of a problem spec, without building a full experiment.
pub fn problem_region(spec: &ProblemSpec) -> Result<BoxRegion> {
    Ok(make_surrogate_problem(spec)?.region)
}
