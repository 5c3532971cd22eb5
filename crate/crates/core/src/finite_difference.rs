//! Noise-aware finite-difference gradients.
//!
//! The forward-difference interval that minimizes the mean squared error
//! under i.i.d. noise of level `eps_f` and curvature bound `L` is
//! `h = 8^(1/4) * sqrt(eps_f / L)`. With sample consistency all evaluations
//! of one gradient share a batch, so the differences see no noise and `h`
//! can go down to roundoff scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxRegion, ConvexRegion, FEASIBILITY_TOL};
use crate::stochastic::{BatchHandle, NoisyOracle};

/// Smallest interval accepted by [`fd_gradient`].
pub const MIN_INTERVAL: f64 = f64::EPSILON;

/// Interval used when the noise level is zero: cube root of machine
/// epsilon, about 6.06e-6.
pub fn noise_free_interval() -> f64 {
    f64::EPSILON.cbrt()
}

/// `8^(1/4) * sqrt(eps_f / L)`, or [`noise_free_interval`] when `eps_f = 0`.
pub fn optimal_interval(eps_f: f64, lipschitz: f64) -> Result<f64> {
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::config(format!(
            "curvature bound L must be positive and finite, got {lipschitz}"
        )));
    }
    if !(eps_f >= 0.0 && eps_f.is_finite()) {
        return Err(Error::config(format!("noise level must be finite and >= 0, got {eps_f}")));
    }
    if eps_f == 0.0 {
        return Ok(noise_free_interval());
    }
    Ok(8f64.powf(0.25) * (eps_f / lipschitz).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    /// Every evaluation of one gradient reuses a single batch.
    Consistent,
    /// Every evaluation draws its own batch.
    #[default]
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FdScheme {
    #[default]
    Forward,
    /// Second-order central differences; intended for testing.
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub interval: f64,
    pub sample_mode: SampleMode,
    pub scheme: FdScheme,
    /// Evaluate coordinates on the rayon pool when the oracle allows it.
    pub parallel: bool,
}

impl FdConfig {
    pub fn forward(interval: f64) -> Self {
        Self {
            interval,
            sample_mode: SampleMode::Inconsistent,
            scheme: FdScheme::Forward,
            parallel: false,
        }
    }

    pub fn central(interval: f64) -> Self {
        Self {
            scheme: FdScheme::Central,
            ..Self::forward(interval)
        }
    }

    pub fn consistent(mut self) -> Self {
        self.sample_mode = SampleMode::Consistent;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.interval.is_finite() && self.interval >= MIN_INTERVAL) {
            return Err(Error::config(format!(
                "finite-difference interval must be finite and >= {MIN_INTERVAL:e}, got {}",
                self.interval
            )));
        }
        Ok(())
    }
}

/// How one gradient component is formed.
#[derive(Debug, Clone, Copy)]
enum Stencil {
    /// Fixed coordinate; component is zero.
    Pinned,
    /// `(f(x + step e_i) - f(x)) / step`; `step` may be negative.
    OneSided { step: f64 },
    /// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
    Central { h: f64 },
}

fn stencil(region: Option<&BoxRegion>, x: &[f64], i: usize, cfg: &FdConfig) -> Stencil {
    let h = cfg.interval;
    let Some(r) = region else {
        return match cfg.scheme {
            FdScheme::Forward => Stencil::OneSided { step: h },
            FdScheme::Central => Stencil::Central { h },
        };
    };
    let (l, u) = (r.lower()[i], r.upper()[i]);
    if l == u {
        return Stencil::Pinned;
    }
    let up_room = u - x[i];
    let down_room = x[i] - l;
    if cfg.scheme == FdScheme::Central && up_room >= h && down_room >= h {
        return Stencil::Central { h };
    }
    if up_room >= h {
        Stencil::OneSided { step: h }
    } else if down_room >= h {
        Stencil::OneSided { step: -h }
    } else if up_room >= down_room {
        Stencil::OneSided { step: up_room }
    } else {
        Stencil::OneSided { step: -down_room }
    }
}

fn shifted(x: &[f64], i: usize, step: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    y[i] += step;
    y
}

/// Finite-difference gradient at `x`.
///
/// When `region` is given, no evaluation leaves the box: a coordinate whose
/// forward step would be infeasible uses the backward difference instead,
/// and central stencils that cross a bound fall back to one-sided ones.
/// Effort is charged to the oracle for every evaluation.
pub fn fd_gradient(
    oracle: &dyn NoisyOracle,
    region: Option<&BoxRegion>,
    x: &[f64],
    cfg: &FdConfig,
) -> Result<Vec<f64>> {
    gradient_impl(oracle, region, x, None, cfg)
}

/// Like [`fd_gradient`], reusing an already computed `f~(x)` for one-sided
/// stencils. In consistent mode `base` must come from the batch that is
/// currently pinned on the oracle.
pub fn fd_gradient_with_base(
    oracle: &dyn NoisyOracle,
    region: Option<&BoxRegion>,
    x: &[f64],
    base: f64,
    cfg: &FdConfig,
) -> Result<Vec<f64>> {
    gradient_impl(oracle, region, x, Some(base), cfg)
}

fn gradient_impl(
    oracle: &dyn NoisyOracle,
    region: Option<&BoxRegion>,
    x: &[f64],
    base: Option<f64>,
    cfg: &FdConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.len() != oracle.dim() {
        return Err(Error::input(format!(
            "point has dimension {}, oracle expects {}",
            x.len(),
            oracle.dim()
        )));
    }
    if let Some(r) = region {
        if !r.contains(x, FEASIBILITY_TOL) {
            return Err(Error::input("finite differences requested at an infeasible point"));
        }
    }
    let stencils: Vec<Stencil> = (0..x.len()).map(|i| stencil(region, x, i, cfg)).collect();
    let batches = oracle.batches();
    let shared = match cfg.sample_mode {
        SampleMode::Consistent => Some(batches.current()),
        SampleMode::Inconsistent => None,
    };
    let next = || shared.unwrap_or_else(|| batches.current());

    let needs_base = stencils.iter().any(|s| matches!(s, Stencil::OneSided { .. }));
    let f0 = match (needs_base, base) {
        (true, Some(b)) => Some(b),
        (true, None) => Some(oracle.evaluate_on(x, next())?),
        (false, _) => None,
    };

    // Batches are assigned in coordinate order before any evaluation so the
    // result does not depend on scheduling.
    let mut tasks: Vec<(usize, Vec<f64>, BatchHandle)> = Vec::new();
    for (i, s) in stencils.iter().enumerate() {
        match *s {
            Stencil::Pinned => {}
            Stencil::OneSided { step } => tasks.push((i, shifted(x, i, step), next())),
            Stencil::Central { h } => {
                tasks.push((i, shifted(x, i, h), next()));
                tasks.push((i, shifted(x, i, -h), next()));
            }
        }
    }
    let eval = |(_, y, b): &(usize, Vec<f64>, BatchHandle)| oracle.evaluate_on(y, *b);
    let values: Vec<f64> = if cfg.parallel && oracle.concurrent_safe() {
        tasks.par_iter().map(eval).collect::<Result<_>>()?
    } else {
        tasks.iter().map(eval).collect::<Result<_>>()?
    };

    let mut g = vec![0.0; x.len()];
    let mut it = values.into_iter();
    for (i, s) in stencils.iter().enumerate() {
        g[i] = match *s {
            Stencil::Pinned => 0.0,
            Stencil::OneSided { step } => {
                let fp = it.next().expect("one value per one-sided stencil");
                (fp - f0.expect("base computed for one-sided stencils")) / step
            }
            Stencil::Central { h } => {
                let fp = it.next().expect("two values per central stencil");
                let fm = it.next().expect("two values per central stencil");
                (fp - fm) / (2.0 * h)
            }
        };
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::{AdditiveNoise, AdditiveNoiseOracle, ExactProblem};
    use approx::assert_relative_eq;

    struct Poly {
        coeffs: Vec<(f64, f64)>, // (a, b): a*x^2 + b*x per coordinate
    }

    impl ExactProblem for Poly {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.coeffs).map(|(x, (a, b))| a * x * x + b * x).sum()
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            x.iter().zip(&self.coeffs).map(|(x, (a, b))| 2.0 * a * x + b).collect()
        }
        fn lipschitz(&self) -> f64 {
            self.coeffs.iter().map(|(a, _)| 2.0 * a.abs()).fold(0.0, f64::max)
        }
    }

    fn oracle(coeffs: Vec<(f64, f64)>, noise: AdditiveNoise) -> AdditiveNoiseOracle {
        let n = coeffs.len();
        AdditiveNoiseOracle::new(Box::new(Poly { coeffs }), n, noise, 7).unwrap()
    }

    #[test]
    fn optimal_interval_examples() {
        assert_relative_eq!(optimal_interval(1e-4, 1.0).unwrap(), 8f64.powf(0.25) * 1e-2);
        assert_relative_eq!(optimal_interval(1e-4, 1.0).unwrap(), 1.6817928305074290e-2, epsilon = 1e-15);
        let floor = optimal_interval(0.0, 1.0).unwrap();
        assert_relative_eq!(floor, 6.055454452393343e-6, max_relative = 1e-12);
        assert!(optimal_interval(1e-3, 0.0).is_err());
        assert!(optimal_interval(1e-3, -2.0).is_err());
        // eps_f = 1e-3 gives h = 1e-2 when L = sqrt(8) * 1e-3 / 1e-4
        let l = 8f64.sqrt() * 1e-3 / 1e-4;
        assert_relative_eq!(optimal_interval(1e-3, l).unwrap(), 1e-2, max_relative = 1e-12);
    }

    #[test]
    fn quadratic_forward_difference_is_two_x_plus_h() {
        let o = oracle(vec![(1.0, 0.0)], AdditiveNoise::None);
        let g = fd_gradient(&o, None, &[1.0], &FdConfig::forward(1e-4)).unwrap();
        assert_relative_eq!(g[0], 2.0001, epsilon = 1e-10);
    }

    #[test]
    fn linear_forward_difference_is_exact() {
        let o = oracle(vec![(0.0, 3.0)], AdditiveNoise::None);
        for h in [0.5, 0.25, 0.125] {
            let g = fd_gradient(&o, None, &[1.0], &FdConfig::forward(h)).unwrap();
            assert_eq!(g[0], 3.0);
        }
    }

    #[test]
    fn effort_counts_base_plus_coordinates() {
        let o = oracle(vec![(1.0, 0.0); 4], AdditiveNoise::Uniform { bound: 1e-3 });
        fd_gradient(&o, None, &[0.1; 4], &FdConfig::forward(1e-2)).unwrap();
        assert_eq!(o.calls(), 5);
        fd_gradient_with_base(&o, None, &[0.1; 4], 0.0, &FdConfig::forward(1e-2)).unwrap();
        assert_eq!(o.calls(), 9);
        fd_gradient(&o, None, &[0.1; 4], &FdConfig::central(1e-2)).unwrap();
        assert_eq!(o.calls(), 17);
    }

    #[test]
    fn upper_bound_flips_to_backward_difference() {
        let o = oracle(vec![(1.0, 0.0); 2], AdditiveNoise::None);
        let r = BoxRegion::uniform(2, 0.0, 1.0).unwrap();
        let h = 1e-3;
        let g = fd_gradient(&o, Some(&r), &[1.0, 0.5], &FdConfig::forward(h)).unwrap();
        // backward difference of x^2 at 1 is 2 - h
        assert_relative_eq!(g[0], 2.0 - h, epsilon = 1e-9);
        assert_relative_eq!(g[1], 1.0 + h, epsilon = 1e-9);
    }

    #[test]
    fn pinned_coordinate_gets_zero_component() {
        let o = oracle(vec![(1.0, 0.0); 2], AdditiveNoise::None);
        let r = BoxRegion::new(vec![0.0, 0.5], vec![1.0, 0.5]).unwrap();
        let g = fd_gradient(&o, Some(&r), &[0.2, 0.5], &FdConfig::forward(1e-3)).unwrap();
        assert_eq!(g[1], 0.0);
        assert_eq!(o.calls(), 2);
    }

    #[test]
    fn consistent_mode_is_deterministic_on_pinned_batch() {
        let o = oracle(vec![(1.0, 0.5); 3], AdditiveNoise::Uniform { bound: 1e-2 });
        o.pin_batch(4);
        let cfg = FdConfig::forward(1e-6).consistent();
        let a = fd_gradient(&o, None, &[0.3; 3], &cfg).unwrap();
        let b = fd_gradient(&o, None, &[0.3; 3], &cfg).unwrap();
        assert_eq!(a, b);
        // the additive offset cancels on a shared batch, leaving the O(h) term
        for gi in &a {
            assert_relative_eq!(*gi, 1.1 + 1e-6, epsilon = 1e-8);
        }
    }

    #[test]
    fn parallel_matches_serial() {
        let o1 = oracle(vec![(1.0, 0.5); 6], AdditiveNoise::Uniform { bound: 1e-2 });
        let o2 = oracle(vec![(1.0, 0.5); 6], AdditiveNoise::Uniform { bound: 1e-2 });
        let cfg = FdConfig::forward(1e-2);
        let serial = fd_gradient(&o1, None, &[0.3; 6], &cfg).unwrap();
        let par = fd_gradient(&o2, None, &[0.3; 6], &FdConfig { parallel: true, ..cfg }).unwrap();
        assert_eq!(serial, par);
        assert_eq!(o1.effort(), o2.effort());
    }

    #[test]
    fn interval_below_floor_rejected() {
        let o = oracle(vec![(1.0, 0.0)], AdditiveNoise::None);
        for h in [0.0, -1.0, 1e-17, f64::NAN] {
            assert!(matches!(
                fd_gradient(&o, None, &[1.0], &FdConfig::forward(h)),
                Err(Error::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn infeasible_point_rejected() {
        let o = oracle(vec![(1.0, 0.0)], AdditiveNoise::None);
        let r = BoxRegion::uniform(1, 0.0, 1.0).unwrap();
        assert!(fd_gradient(&o, Some(&r), &[1.5], &FdConfig::forward(1e-3)).is_err());
    }
}
