//! Noise level and noise bound estimators.
//!
//! The noise level `eps_f(x)` is the standard deviation of `f~(x)`; the
//! noise bound `eps_b` bounds `|f~(x) - f(x)|`. Estimators that need an
//! accurate value `f^(x)` of the true objective take the noise samples
//! `delta_j = f~_j(x) - f^(x)` from the caller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::norm;
use crate::stochastic::NoisyOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMethod {
    PointwiseStd,
    GlobalAverage,
    Chebyshev,
    MaxAbs,
    Range,
    DifferenceTable,
}

impl NoiseMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseMethod::PointwiseStd => "pointwise-std",
            NoiseMethod::GlobalAverage => "global-average",
            NoiseMethod::Chebyshev => "chebyshev",
            NoiseMethod::MaxAbs => "max-abs",
            NoiseMethod::Range => "range",
            NoiseMethod::DifferenceTable => "difference-table",
        }
    }
}

impl std::fmt::Display for NoiseMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pointwise-std" | "pointwise" => NoiseMethod::PointwiseStd,
            "global-average" | "global" => NoiseMethod::GlobalAverage,
            "chebyshev" => NoiseMethod::Chebyshev,
            "max-abs" => NoiseMethod::MaxAbs,
            "range" => NoiseMethod::Range,
            "difference-table" => NoiseMethod::DifferenceTable,
            other => return Err(Error::config(format!("unknown noise estimation method '{other}'"))),
        })
    }
}

/// An estimated noise level or noise bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    pub value: f64,
    pub method: NoiseMethod,
    pub sample_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub location: Option<Vec<f64>>,
}

impl NoiseEstimate {
    fn new(value: f64, method: NoiseMethod, sample_count: usize) -> Self {
        Self {
            value,
            method,
            sample_count,
            location: None,
        }
    }

    pub fn at(mut self, x: &[f64]) -> Self {
        self.location = Some(x.to_vec());
        self
    }
}

fn require(samples: &[f64], needed: usize) -> Result<()> {
    if samples.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: samples.len(),
        });
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite sample {v}")));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Bessel-corrected sample standard deviation of repeated evaluations at
/// one point.
pub fn pointwise_noise_level(samples: &[f64]) -> Result<NoiseEstimate> {
    require(samples, 2)?;
    Ok(NoiseEstimate::new(sample_std(samples), NoiseMethod::PointwiseStd, samples.len()))
}

/// Mean of pointwise estimates taken at points spread over the region.
pub fn global_noise_level(per_point: &[NoiseEstimate]) -> Result<NoiseEstimate> {
    if per_point.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let values: Vec<f64> = per_point.iter().map(|e| e.value).collect();
    Ok(NoiseEstimate::new(
        mean(&values),
        NoiseMethod::GlobalAverage,
        per_point.len(),
    ))
}

/// Empirical Chebyshev bound `mean(delta) + lambda * std(delta)`.
pub fn chebyshev_bound(deltas: &[f64], lambda: u32) -> Result<NoiseEstimate> {
    require(deltas, 2)?;
    if lambda < 1 {
        return Err(Error::config("chebyshev lambda must be a positive integer"));
    }
    let value = mean(deltas) + f64::from(lambda) * sample_std(deltas);
    Ok(NoiseEstimate::new(value.max(0.0), NoiseMethod::Chebyshev, deltas.len()))
}

/// `max_j |delta_j|`.
pub fn max_abs_bound(deltas: &[f64]) -> Result<NoiseEstimate> {
    require(deltas, 1)?;
    let value = deltas.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(NoiseEstimate::new(value, NoiseMethod::MaxAbs, deltas.len()))
}

/// `max_j f~_j - min_j f~_j` over raw noisy values.
///
/// Needs no estimate of the true objective. For noise that is not
/// symmetric about zero it estimates the width of the noise support rather
/// than a bound on `|delta|`.
pub fn range_bound(values: &[f64]) -> Result<NoiseEstimate> {
    require(values, 2)?;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(NoiseEstimate::new(hi - lo, NoiseMethod::Range, values.len()))
}

/// Function values on a line and their scaled forward-difference levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferenceTable {
    /// `f~(x + i * spacing * direction)` for `i = 0..points`.
    pub values: Vec<f64>,
    /// `columns[k-1]` holds the k-th forward differences.
    pub columns: Vec<Vec<f64>>,
    /// `levels[k-1] = sqrt(gamma_k * mean(columns[k-1]^2))` with
    /// `gamma_k = (k!)^2 / (2k)!`.
    pub levels: Vec<f64>,
}

impl DifferenceTable {
    /// Build the table for difference orders `1..=values.len() - 2`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        require(&values, MIN_TABLE_POINTS)?;
        let max_order = values.len() - 2;
        let mut columns = Vec::with_capacity(max_order);
        let mut levels = Vec::with_capacity(max_order);
        let mut current = values.clone();
        let mut gamma = 1.0;
        for k in 1..=max_order {
            current = current.windows(2).map(|w| w[1] - w[0]).collect();
            // gamma_k = gamma_{k-1} * k^2 / ((2k)(2k-1))
            let kf = k as f64;
            gamma *= kf * kf / ((2.0 * kf) * (2.0 * kf - 1.0));
            let ms = current.iter().map(|d| d * d).sum::<f64>() / current.len() as f64;
            levels.push((gamma * ms).sqrt());
            columns.push(current.clone());
        }
        Ok(Self {
            values,
            columns,
            levels,
        })
    }

    /// Noise level from the first run of three consecutive orders whose
    /// levels agree within [`STABILITY_FACTOR`]; the median level of that
    /// run is returned. `None` when no run is stable.
    pub fn stable_level(&self) -> Option<f64> {
        self.levels.windows(3).find_map(|w| {
            let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = w.iter().cloned().fold(0.0, f64::max);
            if hi <= STABILITY_FACTOR * lo {
                let mut sorted = [w[0], w[1], w[2]];
                sorted.sort_by(|a, b| a.total_cmp(b));
                Some(sorted[1])
            } else {
                None
            }
        })
    }
}

/// Smallest number of line points accepted by the difference-table estimator.
pub const MIN_TABLE_POINTS: usize = 6;

/// Allowed ratio between the largest and smallest level in a stable run.
pub const STABILITY_FACTOR: f64 = 4.0;

/// Difference-table noise estimate along `x + t * direction`,
/// `t = 0, spacing, ..., (points-1) * spacing`.
///
/// Works for stochastic and for deterministic (computational) noise, since
/// it only looks at how high-order differences of nearby values behave.
pub fn difference_table_noise(
    oracle: &dyn NoisyOracle,
    x: &[f64],
    direction: &[f64],
    spacing: f64,
    points: usize,
) -> Result<NoiseEstimate> {
    if points < MIN_TABLE_POINTS {
        return Err(Error::config(format!(
            "difference table needs at least {MIN_TABLE_POINTS} points, got {points}"
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::config(format!("spacing must be positive, got {spacing}")));
    }
    if direction.len() != x.len() {
        return Err(Error::input("direction and point differ in dimension"));
    }
    let len = norm(direction);
    if !(len > 0.0) {
        return Err(Error::input("direction must be nonzero"));
    }
    let values = (0..points)
        .map(|i| {
            let t = i as f64 * spacing / len;
            let xi: Vec<f64> = x.iter().zip(direction).map(|(a, d)| a + t * d).collect();
            oracle.evaluate(&xi)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = DifferenceTable::from_values(values)?;
    match table.stable_level() {
        Some(level) => Ok(NoiseEstimate::new(level, NoiseMethod::DifferenceTable, points).at(x)),
        None => Err(Error::EstimationFailed {
            table: Box::new(table),
        }),
    }
}
