//! Gradient projection solvers for noisy bound-constrained problems.
//!
//! * GP-F: `x <- P[x - alpha g~]` with a fixed step.
//! * GP-LS: projected direction `p~ = P[x - alpha0 g~] - x` followed by a
//!   backtracking search on the relaxed Armijo condition
//!   `f~(x + beta p~) <= f~(x) + c beta g~^T p~ + 2 eps_A`.
//! * GP-LS-cal: GP-LS whose `eps_A` and `alpha0` are adapted every `T`
//!   iterations from the recent backtrack counts.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_difference::{
    fd_gradient_with_base, noise_free_interval, optimal_interval, FdConfig, FdScheme, SampleMode,
};
use crate::geometry::{dot, search_direction, BoxRegion, ConvexRegion, FEASIBILITY_TOL};
use crate::stochastic::{mix_seed, NoisyOracle};

/// Backtrack cap for plain GP-LS (`beta >= rho^60`).
pub const GP_LS_MAX_BACKTRACKS: usize = 60;

/// Lower clamp for both calibrated parameters.
pub const CAL_FLOOR: f64 = 1e-5;
/// Upper clamp for the calibrated trial steplength.
pub const CAL_ALPHA0_CEIL: f64 = 1e-1;
/// Average backtrack count at or above which the search is relaxed.
pub const CAL_HIGH: f64 = 3.0;
/// Average backtrack count at or below which the search is tightened.
pub const CAL_LOW: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    GpF,
    GpLs,
    GpLsCal,
}

impl SolverMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverMode::GpF => "gp-f",
            SolverMode::GpLs => "gp-ls",
            SolverMode::GpLsCal => "gp-ls-cal",
        }
    }
}

impl std::fmt::Display for SolverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientSource {
    #[default]
    Analytic,
    FiniteDifference,
}

/// Finite-difference settings inside a solver configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdOptions {
    /// Explicit interval. When absent it is derived from `eps_f` and
    /// `lipschitz`, or set to the roundoff floor in consistent mode.
    #[serde(default)]
    pub interval: Option<f64>,
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub scheme: FdScheme,
    #[serde(default)]
    pub parallel: bool,
}

/// Gradient evaluation strategy after all defaults are resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMethod {
    Analytic,
    FiniteDifference(FdConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Trial steplength for the line-search modes, fixed step for GP-F.
    pub alpha0: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default, rename = "eps_A", alias = "eps_a")]
    pub eps_a: f64,
    /// When set, `eps_A = lambda * eps_f`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Reference noise level. Required by GP-LS-cal and by `lambda`.
    #[serde(default)]
    pub eps_f: Option<f64>,
    /// Calibration memory `T`.
    #[serde(default = "default_memory", rename = "T", alias = "memory")]
    pub memory: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub effort_budget: Option<u64>,
    /// Stop once the stationarity measure stays at or below this for
    /// `patience` consecutive iterations.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub gradient: GradientSource,
    #[serde(default)]
    pub fd: FdOptions,
    #[serde(default)]
    pub sample_mode: SampleMode,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate the out-of-band reference objective at every iterate.
    #[serde(default = "default_true")]
    pub record_reference: bool,
}

fn default_rho() -> f64 {
    0.5
}
fn default_c() -> f64 {
    1e-4
}
fn default_memory() -> usize {
    5
}
fn default_max_iterations() -> usize {
    1000
}
fn default_patience() -> usize {
    10
}
fn default_true() -> bool {
    true
}

impl SolverConfig {
    pub fn new(mode: SolverMode, alpha0: f64) -> Self {
        Self {
            mode,
            alpha0,
            rho: default_rho(),
            c: default_c(),
            eps_a: 0.0,
            lambda: None,
            eps_f: None,
            memory: default_memory(),
            max_iterations: default_max_iterations(),
            effort_budget: None,
            tolerance: None,
            patience: default_patience(),
            gradient: GradientSource::Analytic,
            fd: FdOptions::default(),
            sample_mode: SampleMode::Inconsistent,
            seed: 0,
            record_reference: true,
        }
    }

    pub fn gp_f(alpha: f64) -> Self {
        Self::new(SolverMode::GpF, alpha)
    }

    pub fn gp_ls(alpha0: f64, eps_a: f64) -> Self {
        Self {
            eps_a,
            ..Self::new(SolverMode::GpLs, alpha0)
        }
    }

    pub fn gp_ls_cal(alpha0: f64, eps_a: f64, eps_f: f64) -> Self {
        Self {
            eps_a,
            eps_f: Some(eps_f),
            ..Self::new(SolverMode::GpLsCal, alpha0)
        }
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    /// `eps_A` actually used at the first iteration.
    pub fn initial_eps_a(&self) -> f64 {
        match (self.lambda, self.eps_f) {
            (Some(l), Some(ef)) => l * ef,
            _ => self.eps_a,
        }
    }

    /// Whether `alpha0 + 2c < 1`, the hypothesis of the neighborhood guarantee, holds.
    pub fn satisfies_theory_hypothesis(&self) -> bool {
        self.alpha0 + 2.0 * self.c < 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.alpha0) {
            return Err(Error::config(format!("alpha0 must be positive, got {}", self.alpha0)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::config(format!("rho must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::config(format!("c must lie in (0, 1), got {}", self.c)));
        }
        if !(self.eps_a >= 0.0 && self.eps_a.is_finite()) {
            return Err(Error::config(format!("eps_A must be finite and >= 0, got {}", self.eps_a)));
        }
        if let Some(ef) = self.eps_f {
            if !(ef >= 0.0 && ef.is_finite()) {
                return Err(Error::config(format!("eps_f must be finite and >= 0, got {ef}")));
            }
        }
        if let Some(l) = self.lambda {
            if !(1.0..=2.0).contains(&l) {
                return Err(Error::config(format!("lambda must lie in [1, 2], got {l}")));
            }
            if self.eps_f.is_none() {
                return Err(Error::config("lambda requires eps_f"));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        if let Some(t) = self.tolerance {
            if !(t >= 0.0) {
                return Err(Error::config(format!("tolerance must be >= 0, got {t}")));
            }
        }
        if self.mode == SolverMode::GpLsCal {
            if self.memory == 0 {
                return Err(Error::config("calibration memory T must be at least 1"));
            }
            let ef = self
                .eps_f
                .ok_or_else(|| Error::config("gp-ls-cal requires a reference eps_f"))?;
            let ea = self.initial_eps_a();
            if !(CAL_FLOOR..=2.0 * ef).contains(&ea) {
                return Err(Error::config(format!(
                    "gp-ls-cal needs {CAL_FLOOR:e} <= eps_A <= 2 eps_f = {}, got {ea}",
                    2.0 * ef
                )));
            }
            if !(CAL_FLOOR..=CAL_ALPHA0_CEIL).contains(&self.alpha0) {
                return Err(Error::config(format!(
                    "gp-ls-cal needs {CAL_FLOOR:e} <= alpha0 <= {CAL_ALPHA0_CEIL}, got {}",
                    self.alpha0
                )));
            }
        }
        if let Some(h) = self.fd.interval {
            if !positive(h) {
                return Err(Error::config(format!("fd interval must be positive, got {h}")));
            }
        }
        Ok(())
    }

    /// Resolve the gradient strategy. `problem_lipschitz` is used when the
    /// configuration does not give one.
    pub fn gradient_method(&self, problem_lipschitz: Option<f64>) -> Result<GradientMethod> {
        if self.gradient == GradientSource::Analytic {
            return Ok(GradientMethod::Analytic);
        }
        let interval = match (self.fd.interval, self.sample_mode) {
            (Some(h), _) => h,
            (None, SampleMode::Consistent) => noise_free_interval(),
            (None, SampleMode::Inconsistent) => {
                let ef = self.eps_f.ok_or_else(|| {
                    Error::config("finite differences need fd.interval or eps_f")
                })?;
                let l = self.fd.lipschitz.or(problem_lipschitz).ok_or_else(|| {
                    Error::config("finite differences need fd.interval or fd.lipschitz")
                })?;
                optimal_interval(ef, l)?
            }
        };
        let cfg = FdConfig {
            interval,
            sample_mode: self.sample_mode,
            scheme: self.fd.scheme,
            parallel: self.fd.parallel,
        };
        cfg.validate()?;
        Ok(GradientMethod::FiniteDifference(cfg))
    }

    fn max_backtracks(&self) -> usize {
        match self.mode {
            SolverMode::GpLsCal => 3 * self.memory,
            _ => GP_LS_MAX_BACKTRACKS,
        }
    }
}

/// Rolling backtrack window and the current calibrated parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationState {
    pub window: VecDeque<usize>,
    pub memory: usize,
    pub eps_a: f64,
    pub alpha0: f64,
    pub eps_f_ref: f64,
}

impl CalibrationState {
    pub fn new(memory: usize, eps_a: f64, alpha0: f64, eps_f_ref: f64) -> Self {
        Self {
            window: VecDeque::with_capacity(memory),
            memory,
            eps_a,
            alpha0,
            eps_f_ref,
        }
    }

    /// Append a backtrack count, dropping the oldest beyond `memory`.
    pub fn push(&mut self, backtracks: usize) {
        if self.window.len() == self.memory {
            self.window.pop_front();
        }
        self.window.push_back(backtracks);
    }

    pub fn average(&self) -> Option<f64> {
        if self.window.is_empty() {
            return None;
        }
        Some(self.window.iter().sum::<usize>() as f64 / self.window.len() as f64)
    }

    /// True when both parameters lie within the calibration clamps.
    pub fn within_bounds(&self) -> bool {
        (CAL_FLOOR..=2.0 * self.eps_f_ref).contains(&self.eps_a)
            && (CAL_FLOOR..=CAL_ALPHA0_CEIL).contains(&self.alpha0)
    }
}

/// One calibration step from the window average.
///
/// `avg >= 3` relaxes the search (larger `eps_A`, smaller `alpha0`);
/// `avg <= 0.1` tightens it; anything in between changes nothing. The window
/// is left as is.
pub fn calibration_update(cal: &CalibrationState) -> CalibrationState {
    let mut next = cal.clone();
    let Some(avg) = cal.average() else {
        return next;
    };
    if avg >= CAL_HIGH {
        next.eps_a = (1.5 * cal.eps_a).min(2.0 * cal.eps_f_ref);
        next.alpha0 = (0.5 * cal.alpha0).max(CAL_FLOOR);
    } else if avg <= CAL_LOW {
        next.eps_a = (0.5 * cal.eps_a).max(CAL_FLOOR);
        next.alpha0 = (1.5 * cal.alpha0).min(CAL_ALPHA0_CEIL);
    }
    next
}

/// `f_trial <= f_base + c * beta * dir_dot_grad + 2 * eps_a`.
pub fn relaxed_armijo_accept(
    f_trial: f64,
    f_base: f64,
    beta: f64,
    dir_dot_grad: f64,
    c: f64,
    eps_a: f64,
) -> bool {
    f_trial <= f_base + c * beta * dir_dot_grad + 2.0 * eps_a
}

/// Per-iteration trace entry. Iteration `k` starts at `x` and moves to
/// `x_next`; `effort` is the oracle's cumulative effort after the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub x_next: Vec<f64>,
    pub gradient: Vec<f64>,
    pub direction: Vec<f64>,
    pub f_noisy: f64,
    pub f_reference: Option<f64>,
    pub beta: f64,
    pub backtracks: usize,
    pub capped: bool,
    pub stationarity: f64,
    pub effort: u64,
    #[serde(rename = "eps_A")]
    pub eps_a_used: f64,
    #[serde(rename = "alpha0")]
    pub alpha0_used: f64,
}

/// Noisy value and gradient at `x`, charged to the oracle.
pub fn noisy_value_and_gradient(
    oracle: &dyn NoisyOracle,
    region: &BoxRegion,
    x: &[f64],
    method: &GradientMethod,
) -> Result<(f64, Vec<f64>)> {
    match method {
        GradientMethod::Analytic => oracle.evaluate_with_gradient(x),
        GradientMethod::FiniteDifference(cfg) => {
            let f = oracle.evaluate(x)?;
            let g = fd_gradient_with_base(oracle, Some(region), x, f, cfg)?;
            Ok((f, g))
        }
    }
}

/// One fixed-step projected gradient step `P[x - alpha g~]`.
pub fn gp_f_step(
    oracle: &dyn NoisyOracle,
    region: &BoxRegion,
    x: &[f64],
    alpha: f64,
    method: &GradientMethod,
) -> Result<Vec<f64>> {
    let (_, g) = noisy_value_and_gradient(oracle, region, x, method)?;
    let d = search_direction(region, x, &g, alpha)?;
    region.project(&d.point_at(1.0))
}

fn check_finite(k: usize, what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        return Ok(());
    }
    Err(Error::Diverged {
        iteration: k,
        reason: format!("non-finite {what}"),
        trace: Vec::new(),
    })
}

struct StepParams {
    eps_a: f64,
    alpha0: f64,
    max_backtracks: usize,
    line_search: bool,
}

fn iterate(
    oracle: &dyn NoisyOracle,
    region: &BoxRegion,
    x: &[f64],
    k: usize,
    cfg: &SolverConfig,
    method: &GradientMethod,
    p: &StepParams,
) -> Result<IterationRecord> {
    let (f_base, g) = noisy_value_and_gradient(oracle, region, x, method)?;
    check_finite(k, "objective", &[f_base])?;
    check_finite(k, "gradient", &g)?;
    let d = search_direction(region, x, &g, p.alpha0)?;
    let slope = dot(&d.direction, &g);

    let mut beta = 1.0;
    let mut backtracks = 0;
    let mut capped = false;
    if p.line_search && !d.is_zero() {
        loop {
            let trial = region.project(&d.point_at(beta))?;
            let f_trial = oracle.evaluate(&trial)?;
            check_finite(k, "trial objective", &[f_trial])?;
            if relaxed_armijo_accept(f_trial, f_base, beta, slope, cfg.c, p.eps_a) {
                break;
            }
            backtracks += 1;
            beta *= cfg.rho;
            if backtracks >= p.max_backtracks {
                capped = true;
                break;
            }
        }
    }
    let x_next = region.project(&d.point_at(beta))?;
    Ok(IterationRecord {
        k,
        x: x.to_vec(),
        x_next,
        gradient: g,
        direction: d.direction,
        f_noisy: f_base,
        f_reference: None,
        beta,
        backtracks,
        capped,
        stationarity: -slope,
        effort: oracle.effort(),
        eps_a_used: p.eps_a,
        alpha0_used: p.alpha0,
    })
}

/// One GP-LS iteration from `x`. With `cal`, its current `eps_A` and
/// `alpha0` are used and the GP-LS-cal backtrack cap `3T` applies; the
/// backtrack count is pushed onto its window.
pub fn gp_ls_iterate(
    oracle: &dyn NoisyOracle,
    region: &BoxRegion,
    x: &[f64],
    cfg: &SolverConfig,
    cal: Option<&mut CalibrationState>,
) -> Result<IterationRecord> {
    let method = cfg.gradient_method(None)?;
    gp_ls_iterate_with(oracle, region, x, 0, cfg, &method, cal)
}

fn gp_ls_iterate_with(
    oracle: &dyn NoisyOracle,
    region: &BoxRegion,
    x: &[f64],
    k: usize,
    cfg: &SolverConfig,
    method: &GradientMethod,
    cal: Option<&mut CalibrationState>,
) -> Result<IterationRecord> {
    match cal {
        Some(cal) => {
            let params = StepParams {
                eps_a: cal.eps_a,
                alpha0: cal.alpha0,
                max_backtracks: 3 * cal.memory,
                line_search: true,
            };
            let rec = iterate(oracle, region, x, k, cfg, method, &params)?;
            cal.push(rec.backtracks);
            Ok(rec)
        }
        None => {
            let params = StepParams {
                eps_a: cfg.initial_eps_a(),
                alpha0: cfg.alpha0,
                max_backtracks: cfg.max_backtracks(),
                line_search: true,
            };
            iterate(oracle, region, x, k, cfg, method, &params)
        }
    }
}

/// Run the configured solver from `x0`.
///
/// Stops after `max_iterations`, once the oracle's effort reaches the
/// budget, or when the stationarity measure stays within `tolerance` for
/// `patience` consecutive iterations. In consistent mode every iteration
/// pins its own batch derived from `cfg.seed`. On divergence the error
/// carries all records produced so far.
pub fn solve(
    oracle: &dyn NoisyOracle,
    region: &BoxRegion,
    x0: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<IterationRecord>> {
    solve_with_lipschitz(oracle, region, x0, cfg, None)
}

/// [`solve`] with a problem-supplied Lipschitz estimate for deriving the
/// finite-difference interval.
pub fn solve_with_lipschitz(
    oracle: &dyn NoisyOracle,
    region: &BoxRegion,
    x0: &[f64],
    cfg: &SolverConfig,
    lipschitz: Option<f64>,
) -> Result<Vec<IterationRecord>> {
    cfg.validate()?;
    if cfg.mode != SolverMode::GpF && !cfg.satisfies_theory_hypothesis() {
        log::warn!(
            "alpha0 + 2c = {} >= 1: the neighborhood guarantee does not apply",
            cfg.alpha0 + 2.0 * cfg.c
        );
    }
    if x0.len() != region.dim() {
        return Err(Error::input(format!(
            "start point has dimension {}, region has {}",
            x0.len(),
            region.dim()
        )));
    }
    if !region.contains(x0, FEASIBILITY_TOL) {
        return Err(Error::input("start point is infeasible"));
    }
    let method = cfg.gradient_method(lipschitz)?;
    let mut cal = (cfg.mode == SolverMode::GpLsCal).then(|| {
        CalibrationState::new(
            cfg.memory,
            cfg.initial_eps_a(),
            cfg.alpha0,
            cfg.eps_f.expect("validated"),
        )
    });

    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut x = x0.to_vec();
    let mut quiet = 0;
    for k in 0..cfg.max_iterations {
        if let Some(budget) = cfg.effort_budget {
            if oracle.effort() >= budget {
                break;
            }
        }
        if let Some(c) = cal.as_mut() {
            if k > 0 && k % c.memory == 0 {
                *c = calibration_update(c);
            }
        }
        if cfg.sample_mode == SampleMode::Consistent {
            oracle.pin_batch(mix_seed(cfg.seed, k as u64));
        }
        let step = match cfg.mode {
            SolverMode::GpF => {
                let params = StepParams {
                    eps_a: 0.0,
                    alpha0: cfg.alpha0,
                    max_backtracks: 0,
                    line_search: false,
                };
                iterate(oracle, region, &x, k, cfg, &method, &params)
            }
            SolverMode::GpLs => gp_ls_iterate_with(oracle, region, &x, k, cfg, &method, None),
            SolverMode::GpLsCal => gp_ls_iterate_with(oracle, region, &x, k, cfg, &method, cal.as_mut()),
        };
        if cfg.sample_mode == SampleMode::Consistent {
            oracle.release_batch();
        }
        let mut rec = match step {
            Ok(r) => r,
            Err(Error::Diverged { iteration, reason, .. }) => {
                return Err(Error::Diverged {
                    iteration,
                    reason,
                    trace,
                })
            }
            Err(e) => return Err(e),
        };
        if cfg.record_reference {
            rec.f_reference = Some(oracle.reference_value(&rec.x, k as u64)?);
        }
        x = rec.x_next.clone();
        let stationary = cfg.tolerance.is_some_and(|t| rec.stationarity <= t);
        trace.push(rec);
        quiet = if stationary { quiet + 1 } else { 0 };
        if quiet >= cfg.patience {
            break;
        }
    }
    Ok(trace)
}
