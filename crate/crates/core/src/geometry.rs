//! Feasible-region projection, projected search directions and the
//! stationarity measure `-p(x)^T g(x)`.
//!
//! With `p(x) = P[x - alpha0 * g(x)] - x`, a feasible point is first-order
//! stationary exactly when `p(x) = 0`, equivalently when `p(x)^T g(x) = 0`.
//! The same vector is the search direction of the gradient projection
//! solvers, so the measure is available for free at every iterate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute feasibility tolerance used throughout the crate.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// A closed convex feasible set that can project points onto itself.
pub trait ConvexRegion {
    fn dim(&self) -> usize;

    /// Euclidean projection. Fails only on dimension mismatch.
    fn project(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn contains(&self, x: &[f64], tol: f64) -> bool;
}

/// Axis-aligned box `lower <= x <= upper`.
///
/// `lower[i] == upper[i]` is allowed and pins coordinate `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::input("box region must have dimension >= 1"));
        }
        if lower.len() != upper.len() {
            return Err(Error::input(format!(
                "bound dimensions differ: lower has {}, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(Error::input(format!("bound {i} is NaN")));
            }
            if l > u {
                return Err(Error::input(format!(
                    "lower[{i}] = {l} exceeds upper[{i}] = {u}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The box `[lo, hi]^n`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Coordinatewise midpoint of the box.
    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    fn check_dim(&self, what: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.lower.len() {
            return Err(Error::input(format!(
                "{what} has dimension {}, region has {}",
                v.len(),
                self.lower.len()
            )));
        }
        Ok(())
    }
}

impl ConvexRegion for BoxRegion {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim("point", x)?;
        Ok(x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&xi, (&l, &u))| clamp(xi, l, u))
            .collect())
    }

    fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.lower.len()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&xi, (&l, &u))| xi >= l - tol && xi <= u + tol)
    }
}

fn clamp(x: f64, l: f64, u: f64) -> f64 {
    if x <= l {
        l
    } else if x >= u {
        u
    } else {
        x
    }
}

/// Projection of `x` onto `region`.
pub fn project<R: ConvexRegion + ?Sized>(region: &R, x: &[f64]) -> Result<Vec<f64>> {
    region.project(x)
}

/// A projected-gradient direction `p = P[x - alpha0 g] - x` anchored at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchDirection {
    pub direction: Vec<f64>,
    pub base_point: Vec<f64>,
    pub trial_scale: f64,
}

impl SearchDirection {
    /// `base_point + beta * direction`.
    pub fn point_at(&self, beta: f64) -> Vec<f64> {
        self.base_point
            .iter()
            .zip(&self.direction)
            .map(|(x, p)| x + beta * p)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.direction.iter().all(|&p| p == 0.0)
    }
}

pub fn search_direction<R: ConvexRegion + ?Sized>(
    region: &R,
    x: &[f64],
    g: &[f64],
    alpha0: f64,
) -> Result<SearchDirection> {
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return Err(Error::config(format!(
            "trial steplength alpha0 must be positive and finite, got {alpha0}"
        )));
    }
    if g.len() != x.len() {
        return Err(Error::input(format!(
            "gradient has dimension {}, point has {}",
            g.len(),
            x.len()
        )));
    }
    let trial: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - alpha0 * gi).collect();
    let projected = region.project(&trial)?;
    let direction = projected.iter().zip(x).map(|(z, xi)| z - xi).collect();
    Ok(SearchDirection {
        direction,
        base_point: x.to_vec(),
        trial_scale: alpha0,
    })
}

/// `-direction^T g`. Nonnegative up to rounding whenever `d` was built from
/// the same `g`.
pub fn stationarity_measure(d: &SearchDirection, g: &[f64]) -> Result<f64> {
    if g.len() != d.direction.len() {
        return Err(Error::input(format!(
            "gradient has dimension {}, direction has {}",
            g.len(),
            d.direction.len()
        )));
    }
    Ok(-dot(&d.direction, g))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
