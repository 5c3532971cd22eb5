//! Constants of the neighborhood convergence guarantee and post-hoc checks
//! of solver traces against it.
//!
//! With `alpha0 + 2c < 1`,
//!
//! ```text
//! gamma^2 = (1 - 2c - alpha0)(1 - alpha0) / ((1 - 2c - alpha0)(3 alpha0 + 1) + 2)
//! D       = 1/2 - alpha0/2 - (3 alpha0/2 + 1/2) gamma^2
//! eps_bar = eps_g^2 / gamma^2 + 2 alpha0 L / (c rho D) * (eps_A + eps_b)
//! ```
//!
//! and GP-LS satisfies `liminf |p_k^T g_k| <= eps_bar` when the gradient
//! error is at most `eps_g` and the function error at most `eps_b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, search_direction, sub, BoxRegion};
use crate::solvers::IterationRecord;
use crate::stochastic::ExactProblem;

/// Slack for the per-iterate inequalities.
pub const REPLAY_TOL: f64 = 1e-10;
/// Slack for the projection-only inequalities.
pub const PROJECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    pub alpha0: f64,
    pub c: f64,
    pub rho: f64,
    pub lipschitz: f64,
    pub eps_g: f64,
    #[serde(rename = "eps_A")]
    pub eps_a: f64,
    pub eps_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub gamma_sq: f64,
    pub eps_bar: f64,
    pub inputs: TheoryInputs,
}

impl TheoryConstants {
    pub fn compute(inputs: TheoryInputs) -> Result<Self> {
        Ok(Self {
            gamma_sq: gamma_squared(inputs.alpha0, inputs.c)?,
            eps_bar: epsilon_bar(&inputs)?,
            inputs,
        })
    }
}

fn check_hypothesis(alpha0: f64, c: f64) -> Result<()> {
    if !(alpha0 > 0.0 && c > 0.0 && c < 1.0) {
        return Err(Error::config(format!(
            "need alpha0 > 0 and 0 < c < 1, got alpha0 = {alpha0}, c = {c}"
        )));
    }
    if alpha0 + 2.0 * c >= 1.0 {
        return Err(Error::config(format!(
            "alpha0 + 2c = {} must be < 1",
            alpha0 + 2.0 * c
        )));
    }
    Ok(())
}

/// `gamma^2`, the threshold between the small- and large-noise regimes.
pub fn gamma_squared(alpha0: f64, c: f64) -> Result<f64> {
    check_hypothesis(alpha0, c)?;
    let a = 1.0 - 2.0 * c - alpha0;
    Ok(a * (1.0 - alpha0) / (a * (3.0 * alpha0 + 1.0) + 2.0))
}

/// `1/2 - alpha0/2 - (3 alpha0/2 + 1/2) gamma^2`.
pub fn descent_coefficient(alpha0: f64, gamma_sq: f64) -> f64 {
    0.5 - 0.5 * alpha0 - (1.5 * alpha0 + 0.5) * gamma_sq
}

/// Radius of the stationarity neighborhood.
pub fn epsilon_bar(inputs: &TheoryInputs) -> Result<f64> {
    let TheoryInputs {
        alpha0,
        c,
        rho,
        lipschitz,
        eps_g,
        eps_a,
        eps_b,
    } = *inputs;
    let gsq = gamma_squared(alpha0, c)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::config(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::config(format!("L must be positive, got {lipschitz}")));
    }
    for (name, v) in [("eps_g", eps_g), ("eps_A", eps_a), ("eps_b", eps_b)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let d = descent_coefficient(alpha0, gsq);
    assert!(d > 0.0, "descent coefficient must be positive under the hypothesis");
    Ok(eps_g * eps_g / gsq + 2.0 * alpha0 * lipschitz / (c * rho * d) * (eps_a + eps_b))
}

/// Bound on the forward-difference gradient error norm in `n` dimensions:
/// `sqrt(n) * (2 eps_b / h + L h / 2)`.
pub fn fd_gradient_error_bound(n: usize, eps_b: f64, h: f64, lipschitz: f64) -> f64 {
    (n as f64).sqrt() * (2.0 * eps_b / h + 0.5 * lipschitz * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseCase {
    /// `gamma_k^2 <= gamma^2`: gradient error small relative to stationarity.
    Small,
    /// `gamma_k^2 > gamma^2`.
    Large,
}

/// `||delta_g|| / sqrt(-p^T g)`.
pub fn gamma_k(delta_g_norm: f64, stationarity: f64) -> Result<f64> {
    if !(stationarity > 0.0) {
        return Err(Error::AtStationaryPoint);
    }
    Ok(delta_g_norm / stationarity.sqrt())
}

pub fn classify(gamma_k: f64, gamma_sq: f64) -> NoiseCase {
    if gamma_k * gamma_k <= gamma_sq {
        NoiseCase::Small
    } else {
        NoiseCase::Large
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodReport {
    pub iterations: usize,
    pub min_stationarity: f64,
    pub argmin: usize,
    pub eps_bar: f64,
    pub satisfied: bool,
}

/// Recompute the exact measure `-p(x_k)^T g(x_k)` along the trace and
/// compare its minimum with `eps_bar`.
pub fn verify_neighborhood(
    trace: &[IterationRecord],
    exact: &dyn ExactProblem,
    region: &BoxRegion,
    constants: &TheoryConstants,
) -> Result<NeighborhoodReport> {
    check_hypothesis(constants.inputs.alpha0, constants.inputs.c)?;
    if trace.is_empty() {
        return Err(Error::input("empty trace"));
    }
    let mut best = (f64::INFINITY, 0);
    for rec in trace {
        let g = exact.gradient(&rec.x);
        let d = search_direction(region, &rec.x, &g, constants.inputs.alpha0)?;
        let m = -dot(&d.direction, &g);
        if m < best.0 {
            best = (m, rec.k);
        }
    }
    Ok(NeighborhoodReport {
        iterations: trace.len(),
        min_stationarity: best.0,
        argmin: best.1,
        eps_bar: constants.eps_bar,
        satisfied: best.0 <= constants.eps_bar,
    })
}

/// Exact and noisy quantities at one instrumented iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub k: usize,
    pub stationarity_exact: f64,
    pub stationarity_noisy: f64,
    pub delta_g_norm: f64,
    pub delta_p_norm: f64,
    pub case: Option<NoiseCase>,
    /// `||p - p~|| <= alpha0 ||g - g~||`.
    pub direction_error_ok: bool,
    /// `||p~||^2 <= -alpha0 p~^T g~`.
    pub noisy_direction_ok: bool,
    /// `-p~^T g~ >= (1/2 - alpha0/2)(-p^T g) - (3 alpha0/2 + 1/2) ||delta_g||^2`.
    pub lower_bound_ok: bool,
    /// `f(x_{k+1}) <= f(x_k) + 2 eps_A + 2 eps_b`.
    pub descent_ok: bool,
}

impl InequalityCheck {
    pub fn all_hold(&self) -> bool {
        self.direction_error_ok && self.noisy_direction_ok && self.lower_bound_ok && self.descent_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub checks: Vec<InequalityCheck>,
    pub direction_error_violations: usize,
    pub noisy_direction_violations: usize,
    pub lower_bound_violations: usize,
    pub descent_violations: usize,
    pub small_noise_iterations: usize,
    pub large_noise_iterations: usize,
}

impl InequalityReport {
    pub fn all_hold(&self) -> bool {
        self.direction_error_violations == 0
            && self.noisy_direction_violations == 0
            && self.lower_bound_violations == 0
            && self.descent_violations == 0
    }
}

/// Replay the per-iterate inequalities of the analysis on a trace, using
/// the exact objective for `g`, `p` and `f`. Each record's own `alpha0` and
/// `eps_A` are used; `eps_b` bounds the function noise.
pub fn replay_inequalities(
    trace: &[IterationRecord],
    exact: &dyn ExactProblem,
    region: &BoxRegion,
    gamma_sq: f64,
    eps_b: f64,
) -> Result<InequalityReport> {
    let mut checks = Vec::with_capacity(trace.len());
    for rec in trace {
        let a0 = rec.alpha0_used;
        let g = exact.gradient(&rec.x);
        let p = search_direction(region, &rec.x, &g, a0)?.direction;
        let stat = -dot(&p, &g);
        let stat_noisy = -dot(&rec.direction, &rec.gradient);
        let dg = norm(&sub(&g, &rec.gradient));
        let dp = norm(&sub(&p, &rec.direction));
        let case = gamma_k(dg, stat).ok().map(|gk| classify(gk, gamma_sq));
        let lower = (0.5 - 0.5 * a0) * stat - (1.5 * a0 + 0.5) * dg * dg;
        let f0 = exact.value(&rec.x);
        let f1 = exact.value(&rec.x_next);
        checks.push(InequalityCheck {
            k: rec.k,
            stationarity_exact: stat,
            stationarity_noisy: stat_noisy,
            delta_g_norm: dg,
            delta_p_norm: dp,
            case,
            direction_error_ok: dp <= a0 * dg + PROJECTION_TOL,
            noisy_direction_ok: dot(&rec.direction, &rec.direction) <= a0 * stat_noisy + PROJECTION_TOL,
            lower_bound_ok: stat_noisy >= lower - REPLAY_TOL,
            descent_ok: f1 <= f0 + 2.0 * rec.eps_a_used + 2.0 * eps_b + REPLAY_TOL,
        });
    }
    let count = |f: fn(&InequalityCheck) -> bool| checks.iter().filter(|c| !f(c)).count();
    Ok(InequalityReport {
        direction_error_violations: count(|c| c.direction_error_ok),
        noisy_direction_violations: count(|c| c.noisy_direction_ok),
        lower_bound_violations: count(|c| c.lower_bound_ok),
        descent_violations: count(|c| c.descent_ok),
        small_noise_iterations: checks.iter().filter(|c| c.case == Some(NoiseCase::Small)).count(),
        large_noise_iterations: checks.iter().filter(|c| c.case == Some(NoiseCase::Large)).count(),
        checks,
    })
}

/// Everything the `diagnose` command reports for one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub constants: TheoryConstants,
    pub neighborhood: NeighborhoodReport,
    pub direction_error_violations: usize,
    pub noisy_direction_violations: usize,
    pub lower_bound_violations: usize,
    pub descent_violations: usize,
    pub small_noise_iterations: usize,
    pub large_noise_iterations: usize,
}

pub fn diagnose_trace(
    trace: &[IterationRecord],
    exact: &dyn ExactProblem,
    region: &BoxRegion,
    inputs: TheoryInputs,
) -> Result<DiagnosticReport> {
    let constants = TheoryConstants::compute(inputs)?;
    let neighborhood = verify_neighborhood(trace, exact, region, &constants)?;
    let r = replay_inequalities(trace, exact, region, constants.gamma_sq, inputs.eps_b)?;
    Ok(DiagnosticReport {
        constants,
        neighborhood,
        direction_error_violations: r.direction_error_violations,
        noisy_direction_violations: r.noisy_direction_violations,
        lower_bound_violations: r.lower_bound_violations,
        descent_violations: r.descent_violations,
        small_noise_iterations: r.small_noise_iterations,
        large_noise_iterations: r.large_noise_iterations,
    })
}
