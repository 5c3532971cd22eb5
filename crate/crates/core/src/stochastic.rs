//! Noisy objective oracles.
//!
//! Every oracle evaluates on an explicit [`BatchHandle`]. A handle is a
//! `(seed, counter)` pair that deterministically re-materializes the same
//! sample batch, so nothing is stored between calls. Unpinned evaluations
//! draw the next counter from the oracle's stream; while a batch is pinned,
//! every evaluation reuses it (sample consistency).
//!
//! Two oracle shapes are provided:
//!
//! * [`SampleAverageOracle`] returns `mean + 3 * std` of `N` per-sample
//!   values, with the analytic gradient of both statistics.
//! * [`AdditiveNoiseOracle`] returns `f(x) + delta` for a known smooth `f`
//!   and a bounded perturbation, either freshly drawn per batch or a
//!   deterministic function of `x` (computational noise).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxRegion;

/// Weight of the standard-deviation term in the robust objective.
pub const STD_WEIGHT: f64 = 3.0;

/// Batch size used for out-of-band reference evaluations.
pub const REFERENCE_BATCH: usize = 100;

const PIN_DOMAIN: u64 = 0x5049_4e4e_4544_0001;
const REFERENCE_DOMAIN: u64 = 0x5245_4645_5245_4e43;

pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a combined word
    let mut z = a ^ b.rotate_left(32) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifies one sample batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BatchHandle {
    pub seed: u64,
    pub counter: u64,
}

impl BatchHandle {
    /// The random stream that materializes this batch.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.counter);
        rng
    }
}

/// Hands out fresh batch handles and tracks the pinned batch.
#[derive(Debug)]
pub struct BatchSource {
    seed: u64,
    next: AtomicU64,
    pinned: Mutex<Option<BatchHandle>>,
}

impl BatchSource {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            next: AtomicU64::new(0),
            pinned: Mutex::new(None),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A never-before-used handle from this oracle's stream.
    pub fn fresh(&self) -> BatchHandle {
        BatchHandle {
            seed: self.seed,
            counter: self.next.fetch_add(1, Ordering::Relaxed),
        }
    }

    /// The pinned handle, or a fresh one when nothing is pinned.
    pub fn current(&self) -> BatchHandle {
        self.pinned().unwrap_or_else(|| self.fresh())
    }

    pub fn pinned(&self) -> Option<BatchHandle> {
        *self.pinned.lock().expect("batch pin lock poisoned")
    }

    pub fn pin(&self, handle: BatchHandle) {
        *self.pinned.lock().expect("batch pin lock poisoned") = Some(handle);
    }

    pub fn release(&self) {
        *self.pinned.lock().expect("batch pin lock poisoned") = None;
    }
}

/// Counts oracle calls and effort (`batch size x calls`).
#[derive(Debug, Default)]
pub struct EffortCounter {
    calls: AtomicU64,
    effort: AtomicU64,
}

impl EffortCounter {
    pub fn record(&self, batch_size: usize) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.effort.fetch_add(batch_size as u64, Ordering::Relaxed);
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn effort(&self) -> u64 {
        self.effort.load(Ordering::Relaxed)
    }
}

/// A smooth objective with known value, gradient and gradient Lipschitz
/// constant. Synthetic problems expose one so that diagnostics can compare
/// noisy quantities with exact ones.
pub trait ExactProblem: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn lipschitz(&self) -> f64;
}

/// Black-box noisy objective.
///
/// Implementors provide the raw, uncounted `value_on` (and optionally
/// `value_and_gradient_on`); the provided `evaluate*` methods add effort
/// accounting and batch selection and are what solvers call.
pub trait NoisyOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// Samples consumed per function call.
    fn batch_size(&self) -> usize;

    fn batches(&self) -> &BatchSource;

    fn counter(&self) -> &EffortCounter;

    /// Raw evaluation on a given batch. Does not touch the effort counter.
    fn value_on(&self, x: &[f64], batch: BatchHandle) -> Result<f64>;

    /// Raw value plus analytic gradient on a given batch.
    fn value_and_gradient_on(&self, _x: &[f64], _batch: BatchHandle) -> Result<(f64, Vec<f64>)> {
        Err(Error::Unsupported("oracle has no analytic gradient"))
    }

    /// Out-of-band approximation of the true objective, used for reporting
    /// only. Never counted as effort.
    fn reference_value(&self, x: &[f64], stream: u64) -> Result<f64>;

    /// Exact objective, when the problem is synthetic and known.
    fn exact(&self) -> Option<&dyn ExactProblem> {
        None
    }

    /// Known bound on `|f~(x) - f(x)|`, when there is one.
    fn noise_bound(&self) -> Option<f64> {
        None
    }

    /// Whether evaluations may run concurrently on this oracle.
    fn concurrent_safe(&self) -> bool {
        true
    }

    fn evaluate_on(&self, x: &[f64], batch: BatchHandle) -> Result<f64> {
        check_dim(self.dim(), x)?;
        let v = self.value_on(x, batch)?;
        self.counter().record(self.batch_size());
        Ok(v)
    }

    /// One function call on the pinned batch, or a fresh one.
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let batch = self.batches().current();
        self.evaluate_on(x, batch)
    }

    fn evaluate_with_gradient_on(&self, x: &[f64], batch: BatchHandle) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim(), x)?;
        let out = self.value_and_gradient_on(x, batch)?;
        self.counter().record(self.batch_size());
        Ok(out)
    }

    /// Value and analytic gradient from a single batch; counts as one call.
    fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let batch = self.batches().current();
        self.evaluate_with_gradient_on(x, batch)
    }

    fn analytic_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.evaluate_with_gradient(x).map(|(_, g)| g)
    }

    /// Pin the batch identified by `seed` until [`release_batch`](Self::release_batch).
    fn pin_batch(&self, seed: u64) -> BatchHandle {
        let handle = BatchHandle {
            seed: mix_seed(seed, PIN_DOMAIN),
            counter: 0,
        };
        self.batches().pin(handle);
        handle
    }

    /// Pin the next batch of the oracle's own stream.
    fn pin_fresh_batch(&self) -> BatchHandle {
        let handle = self.batches().fresh();
        self.batches().pin(handle);
        handle
    }

    fn release_batch(&self) {
        self.batches().release();
    }

    fn effort(&self) -> u64 {
        self.counter().effort()
    }

    fn calls(&self) -> u64 {
        self.counter().calls()
    }
}

fn check_dim(n: usize, x: &[f64]) -> Result<()> {
    if x.len() != n {
        return Err(Error::input(format!(
            "point has dimension {}, oracle expects {n}",
            x.len()
        )));
    }
    Ok(())
}

/// Sample mean and Bessel-corrected variance of per-sample values, with
/// optional gradients of the mean and of the standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStatistics {
    pub mean: f64,
    pub variance: f64,
    pub grad_mean: Option<Vec<f64>>,
    pub grad_std: Option<Vec<f64>>,
}

impl SampleStatistics {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let (mean, variance) = mean_and_variance(values)?;
        Ok(Self {
            mean,
            variance,
            grad_mean: None,
            grad_std: None,
        })
    }

    /// Statistics plus `grad mean = (1/N) sum grad s_i` and
    /// `grad std = sum (s_i - mean)(grad s_i - grad mean) / ((N-1) std)`.
    /// At zero variance the std gradient is taken to be zero.
    pub fn from_values_and_gradients(values: &[f64], grads: &[Vec<f64>]) -> Result<Self> {
        let (mean, variance) = mean_and_variance(values)?;
        if grads.len() != values.len() {
            return Err(Error::input(format!(
                "{} gradients for {} values",
                grads.len(),
                values.len()
            )));
        }
        let n = grads[0].len();
        if grads.iter().any(|g| g.len() != n) {
            return Err(Error::input("per-sample gradients differ in dimension"));
        }
        let m = values.len() as f64;
        let mut grad_mean = vec![0.0; n];
        for g in grads {
            for (acc, gi) in grad_mean.iter_mut().zip(g) {
                *acc += gi;
            }
        }
        grad_mean.iter_mut().for_each(|v| *v /= m);

        let std = variance.sqrt();
        let mut grad_std = vec![0.0; n];
        if std > 0.0 {
            for (s, g) in values.iter().zip(grads) {
                let w = s - mean;
                for ((acc, gi), gm) in grad_std.iter_mut().zip(g).zip(&grad_mean) {
                    *acc += w * (gi - gm);
                }
            }
            let scale = 1.0 / ((m - 1.0) * std);
            grad_std.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(Self {
            mean,
            variance,
            grad_mean: Some(grad_mean),
            grad_std: Some(grad_std),
        })
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    /// `mean + 3 * std`.
    pub fn objective(&self) -> f64 {
        self.mean + STD_WEIGHT * self.std()
    }

    /// Gradient of [`objective`](Self::objective), when gradients were supplied.
    pub fn objective_gradient(&self) -> Option<Vec<f64>> {
        let gm = self.grad_mean.as_ref()?;
        let gs = self.grad_std.as_ref()?;
        Some(gm.iter().zip(gs).map(|(m, s)| m + STD_WEIGHT * s).collect())
    }
}

fn mean_and_variance(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: values.len(),
        });
    }
    let m = values.len() as f64;
    // Shifting by the first value makes identical samples give an exact mean
    // and an exactly zero variance.
    let shift = values[0];
    let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / m;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok((mean, variance))
}

/// Per-sample model `s(x, xi)` behind a sample-average objective.
pub trait SampleModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Draw one realization `xi` of the uncertain parameters.
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;

    fn value(&self, x: &[f64], xi: &[f64]) -> f64;

    fn gradient(&self, _x: &[f64], _xi: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// `f~(x) = mean_i s(x, xi_i) + 3 std_i s(x, xi_i)` over a batch of `N`
/// i.i.d. draws.
pub struct SampleAverageOracle<M> {
    model: M,
    batch_size: usize,
    reference_batch: usize,
    batches: BatchSource,
    counter: EffortCounter,
}

impl<M: SampleModel> SampleAverageOracle<M> {
    pub fn new(model: M, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size < 2 {
            return Err(Error::config(format!(
                "batch size must be at least 2 for a sample variance, got {batch_size}"
            )));
        }
        Ok(Self {
            model,
            batch_size,
            reference_batch: REFERENCE_BATCH,
            batches: BatchSource::new(seed),
            counter: EffortCounter::default(),
        })
    }

    pub fn with_reference_batch(mut self, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::config("reference batch must be at least 2"));
        }
        self.reference_batch = size;
        Ok(self)
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    fn draw_batch(&self, batch: BatchHandle, size: usize) -> Vec<Vec<f64>> {
        let mut rng = batch.rng();
        (0..size).map(|_| self.model.draw(&mut rng)).collect()
    }

    /// Statistics of the per-sample values on `batch`, without counting effort.
    pub fn statistics_on(&self, x: &[f64], batch: BatchHandle, with_gradient: bool) -> Result<SampleStatistics> {
        let xis = self.draw_batch(batch, self.batch_size);
        let values: Vec<f64> = xis.iter().map(|xi| self.model.value(x, xi)).collect();
        if !with_gradient {
            return SampleStatistics::from_values(&values);
        }
        let grads = xis
            .iter()
            .map(|xi| self.model.gradient(x, xi))
            .collect::<Option<Vec<_>>>()
            .ok_or(Error::Unsupported("sample model has no per-sample gradient"))?;
        SampleStatistics::from_values_and_gradients(&values, &grads)
    }
}

impl<M: SampleModel> NoisyOracle for SampleAverageOracle<M> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn batches(&self) -> &BatchSource {
        &self.batches
    }

    fn counter(&self) -> &EffortCounter {
        &self.counter
    }

    fn value_on(&self, x: &[f64], batch: BatchHandle) -> Result<f64> {
        Ok(self.statistics_on(x, batch, false)?.objective())
    }

    fn value_and_gradient_on(&self, x: &[f64], batch: BatchHandle) -> Result<(f64, Vec<f64>)> {
        let stats = self.statistics_on(x, batch, true)?;
        let g = stats.objective_gradient().expect("gradients were requested");
        Ok((stats.objective(), g))
    }

    fn reference_value(&self, x: &[f64], stream: u64) -> Result<f64> {
        check_dim(self.dim(), x)?;
        let batch = BatchHandle {
            seed: mix_seed(self.batches.seed(), REFERENCE_DOMAIN),
            counter: stream,
        };
        let values: Vec<f64> = self
            .draw_batch(batch, self.reference_batch)
            .iter()
            .map(|xi| self.model.value(x, xi))
            .collect();
        Ok(SampleStatistics::from_values(&values)?.objective())
    }
}

/// Bounded perturbation added to an exact objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdditiveNoise {
    None,
    /// `Unif(-bound, bound)` drawn from the batch stream; constant in `x`
    /// on a pinned batch.
    Uniform { bound: f64 },
    /// Deterministic pseudo-random function of `x` with values in
    /// `(-bound, bound)`; repeated evaluation returns the same value.
    Computational { bound: f64, seed: u64 },
}

impl AdditiveNoise {
    pub fn bound(&self) -> f64 {
        match *self {
            AdditiveNoise::None => 0.0,
            AdditiveNoise::Uniform { bound } | AdditiveNoise::Computational { bound, .. } => bound,
        }
    }

    fn sample(&self, x: &[f64], batch: BatchHandle) -> f64 {
        match *self {
            AdditiveNoise::None => 0.0,
            AdditiveNoise::Uniform { bound } => {
                if bound == 0.0 {
                    return 0.0;
                }
                let mut rng = batch.rng();
                rng.random_range(-bound..bound)
            }
            AdditiveNoise::Computational { bound, seed } => {
                let h = x.iter().fold(seed, |acc, v| mix_seed(acc, v.to_bits()));
                // 53 random bits mapped to [0, 1)
                let u = (h >> 11) as f64 / (1u64 << 53) as f64;
                bound * (2.0 * u - 1.0)
            }
        }
    }
}

/// `f~(x) = f(x) + delta` with `|delta| <= bound`. Effort is one per call.
pub struct AdditiveNoiseOracle {
    exact: Box<dyn ExactProblem>,
    dim: usize,
    noise: AdditiveNoise,
    batches: BatchSource,
    counter: EffortCounter,
}

impl AdditiveNoiseOracle {
    pub fn new(exact: Box<dyn ExactProblem>, dim: usize, noise: AdditiveNoise, seed: u64) -> Result<Self> {
        let b = noise.bound();
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::config(format!("noise bound must be finite and >= 0, got {b}")));
        }
        Ok(Self {
            exact,
            dim,
            noise,
            batches: BatchSource::new(seed),
            counter: EffortCounter::default(),
        })
    }

    pub fn noise(&self) -> AdditiveNoise {
        self.noise
    }
}

impl NoisyOracle for AdditiveNoiseOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn batch_size(&self) -> usize {
        1
    }

    fn batches(&self) -> &BatchSource {
        &self.batches
    }

    fn counter(&self) -> &EffortCounter {
        &self.counter
    }

    fn value_on(&self, x: &[f64], batch: BatchHandle) -> Result<f64> {
        Ok(self.exact.value(x) + self.noise.sample(x, batch))
    }

    fn value_and_gradient_on(&self, x: &[f64], batch: BatchHandle) -> Result<(f64, Vec<f64>)> {
        if matches!(self.noise, AdditiveNoise::Computational { .. }) {
            return Err(Error::Unsupported(
                "computational noise is not differentiable; use finite differences",
            ));
        }
        Ok((self.value_on(x, batch)?, self.exact.gradient(x)))
    }

    fn reference_value(&self, x: &[f64], _stream: u64) -> Result<f64> {
        check_dim(self.dim, x)?;
        Ok(self.exact.value(x))
    }

    fn exact(&self) -> Option<&dyn ExactProblem> {
        Some(self.exact.as_ref())
    }

    fn noise_bound(&self) -> Option<f64> {
        Some(self.noise.bound())
    }
}

/// `f(x) = 0.5 * sum_i d_i (x_i - c_i)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableQuadratic {
    pub curvature: Vec<f64>,
    pub center: Vec<f64>,
}

impl SeparableQuadratic {
    /// Minimizer over a box: the clamped center.
    pub fn box_minimizer(&self, region: &BoxRegion) -> Vec<f64> {
        self.center
            .iter()
            .zip(region.lower().iter().zip(region.upper()))
            .map(|(&c, (&l, &u))| c.max(l).min(u))
            .collect()
    }
}

impl ExactProblem for SeparableQuadratic {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x
            .iter()
            .zip(&self.center)
            .zip(&self.curvature)
            .map(|((xi, ci), di)| di * (xi - ci) * (xi - ci))
            .sum::<f64>()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .zip(&self.curvature)
            .map(|((xi, ci), di)| di * (xi - ci))
            .collect()
    }

    fn lipschitz(&self) -> f64 {
        self.curvature.iter().cloned().fold(0.0, f64::max)
    }
}

/// Smooth stand-in for the acoustic horn efficiency.
///
/// Six design variables in `[0, 1]`, three uncertain parameters per sample:
/// wave number `k ~ Unif(1.3, 1.5)` and wall impedances
/// `z_l, z_u ~ N(50, 3)`. The per-sample value is the smoothed absolute
/// deviation `sqrt(r^2 + tau^2)` of a nonconvex response `r(b; xi)`, which
/// keeps the gradient Lipschitz everywhere.
#[derive(Debug, Clone)]
pub struct HornSurrogate {
    weights: [f64; 6],
    targets: [f64; 6],
    shifts: [f64; 6],
    offset: f64,
    ripple: f64,
    ripple_freq: f64,
    impedance_gain: f64,
    target_gain: f64,
    tau: f64,
}

impl Default for HornSurrogate {
    fn default() -> Self {
        Self {
            weights: [1.0, 1.5, 2.0, 2.0, 1.5, 1.0],
            targets: [0.35, 0.45, 0.55, 0.6, 0.5, 0.4],
            shifts: [0.5, -0.5, 0.5, -0.5, 0.5, -0.5],
            offset: 0.04,
            ripple: 0.02,
            ripple_freq: 1.5,
            impedance_gain: 0.01,
            target_gain: 0.05,
            tau: 1e-6,
        }
    }
}

impl HornSurrogate {
    pub const DIM: usize = 6;

    /// Upper estimate of the gradient Lipschitz constant of the per-sample
    /// response over `[0, 1]^6`.
    pub fn lipschitz_hint(&self) -> f64 {
        let quad = 2.0 * self.weights.iter().cloned().fold(0.0, f64::max);
        let w = 2.0 * std::f64::consts::PI * 1.5 * self.ripple_freq;
        quad + self.ripple * w * w
    }

    /// Response `r(b; xi)` and its gradient in `b`.
    fn response(&self, b: &[f64], xi: &[f64]) -> (f64, [f64; 6]) {
        let (k, zl, zu) = (xi[0], xi[1], xi[2]);
        let kappa = (k - 1.4) / 0.1;
        let zeta = [(zl - 50.0) / 3.0, (zu - 50.0) / 3.0];
        let w = 2.0 * std::f64::consts::PI * k * self.ripple_freq;
        let mut r = self.offset;
        let mut grad = [0.0; 6];
        for i in 0..Self::DIM {
            let d = b[i] - self.targets[i] - self.target_gain * kappa * self.shifts[i];
            let z = zeta[i / 3] * self.impedance_gain / 3.0;
            r += self.weights[i] * d * d + self.ripple * (1.0 - (w * b[i]).cos()) + z * b[i];
            grad[i] = 2.0 * self.weights[i] * d + self.ripple * w * (w * b[i]).sin() + z;
        }
        (r, grad)
    }
}

impl SampleModel for HornSurrogate {
    fn dim(&self) -> usize {
        Self::DIM
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let k = Uniform::new(1.3, 1.5).expect("valid range").sample(rng);
        let z = Normal::new(50.0, 3.0).expect("valid normal");
        vec![k, z.sample(rng), z.sample(rng)]
    }

    fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        let (r, _) = self.response(x, xi);
        (r * r + self.tau * self.tau).sqrt()
    }

    fn gradient(&self, x: &[f64], xi: &[f64]) -> Option<Vec<f64>> {
        let (r, g) = self.response(x, xi);
        let s = (r * r + self.tau * self.tau).sqrt();
        Some(g.iter().map(|gi| r / s * gi).collect())
    }
}

/// Noise model selector for the quadratic family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    #[default]
    Uniform,
    Computational,
}

/// Description of a built-in synthetic problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// `"horn-surrogate"` or `"quadratic"`.
    pub family: String,
    /// Samples per call (sample-average families only).
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Bound on the additive noise (quadratic family only).
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    #[serde(default = "default_reference_batch")]
    pub reference_batch: usize,
}

fn default_batch_size() -> usize {
    100
}

fn default_reference_batch() -> usize {
    REFERENCE_BATCH
}

impl ProblemSpec {
    pub fn horn(batch_size: usize, seed: u64) -> Self {
        Self {
            family: "horn-surrogate".into(),
            batch_size,
            seed,
            noise_amplitude: 0.0,
            noise_kind: NoiseKind::Uniform,
            reference_batch: REFERENCE_BATCH,
        }
    }

    pub fn quadratic(noise_amplitude: f64, seed: u64) -> Self {
        Self {
            family: "quadratic".into(),
            batch_size: 1,
            seed,
            noise_amplitude,
            noise_kind: NoiseKind::Uniform,
            reference_batch: REFERENCE_BATCH,
        }
    }
}

/// An oracle together with its feasible box, a default starting point and a
/// gradient Lipschitz estimate.
pub struct SurrogateProblem {
    pub oracle: Box<dyn NoisyOracle>,
    pub region: BoxRegion,
    pub start: Vec<f64>,
    pub lipschitz: f64,
}

/// The 6-D quadratic used by the convergence experiments. Two centers lie
/// outside `[0, 1]^6`, so the minimizer has active bounds.
pub fn test_quadratic() -> SeparableQuadratic {
    SeparableQuadratic {
        curvature: vec![1.0, 2.0, 1.5, 4.0, 3.0, 2.5],
        center: vec![0.3, 1.4, 0.6, -0.5, 0.8, 0.45],
    }
}

pub fn make_surrogate_problem(spec: &ProblemSpec) -> Result<SurrogateProblem> {
    match spec.family.as_str() {
        "horn-surrogate" => {
            let model = HornSurrogate::default();
            let lipschitz = model.lipschitz_hint();
            let oracle = SampleAverageOracle::new(model, spec.batch_size, spec.seed)?
                .with_reference_batch(spec.reference_batch)?;
            Ok(SurrogateProblem {
                oracle: Box::new(oracle),
                region: BoxRegion::uniform(HornSurrogate::DIM, 0.0, 1.0)?,
                start: vec![0.9; HornSurrogate::DIM],
                lipschitz,
            })
        }
        "quadratic" => {
            let q = test_quadratic();
            let n = q.center.len();
            let lipschitz = q.lipschitz();
            let noise = match (spec.noise_amplitude, spec.noise_kind) {
                (a, _) if a == 0.0 => AdditiveNoise::None,
                (bound, NoiseKind::Uniform) => AdditiveNoise::Uniform { bound },
                (bound, NoiseKind::Computational) => AdditiveNoise::Computational {
                    bound,
                    seed: spec.seed,
                },
            };
            let oracle = AdditiveNoiseOracle::new(Box::new(q), n, noise, spec.seed)?;
            Ok(SurrogateProblem {
                oracle: Box::new(oracle),
                region: BoxRegion::uniform(n, 0.0, 1.0)?,
                start: vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
                lipschitz,
            })
        }
        other => Err(Error::config(format!(
            "unknown problem family '{other}' (expected 'horn-surrogate' or 'quadratic')"
        ))),
    }
}

/// Uniformly random point of a box.
pub fn random_point(region: &BoxRegion, rng: &mut impl Rng) -> Vec<f64> {
    region
        .lower()
        .iter()
        .zip(region.upper())
        .map(|(&l, &u)| if l == u { l } else { rng.random_range(l..=u) })
        .collect()
}
