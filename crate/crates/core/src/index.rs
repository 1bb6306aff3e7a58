//! Unit index vectors with the first-nonzero-positive sign convention and
//! their hyperspherical angle coordinates.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{FsiError, Result};

/// A coefficient vector θ with `|θ| = 1` whose first nonzero entry is positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct IndexParam {
    theta: Vec<f64>,
}

impl IndexParam {
    /// Normalizes `v` onto the identifiable half of the unit sphere.
    pub fn new(v: &[f64]) -> Result<Self> {
        normalize_identifiable(v)
    }

    /// Unit axis `e_j` in dimension `p`.
    pub fn axis(p: usize, j: usize) -> Self {
        let mut theta = vec![0.0; p];
        theta[j] = 1.0;
        IndexParam { theta }
    }

    pub fn from_polar(eta: &[f64]) -> Result<Self> {
        normalize_identifiable(&polar_to_theta(eta)?)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Angle coordinates `η` with `polar_to_theta(η) = θ`.
    pub fn eta(&self) -> Vec<f64> {
        theta_to_polar(&self.theta)
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.theta.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

impl TryFrom<Vec<f64>> for IndexParam {
    type Error = FsiError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        normalize_identifiable(&v)
    }
}

impl From<IndexParam> for Vec<f64> {
    fn from(p: IndexParam) -> Self {
        p.theta
    }
}

/// `v / |v|`, sign-flipped so that the first nonzero entry is positive.
pub fn normalize_identifiable(v: &[f64]) -> Result<IndexParam> {
    if v.is_empty() {
        return Err(FsiError::Empty("index vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(FsiError::InvalidInput("non-finite index vector".into()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(FsiError::InvalidInput("zero index vector".into()));
    }
    let sign = match v.iter().find(|x| **x != 0.0) {
        Some(first) if *first < 0.0 => -1.0,
        _ => 1.0,
    };
    // Already unit length up to rounding: dividing again would perturb the last bit.
    if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(IndexParam { theta: v.iter().map(|x| sign * x).collect() });
    }
    Ok(IndexParam { theta: v.iter().map(|x| sign * x / norm).collect() })
}

/// Hyperspherical map from `p − 1` angles in `[−π/2, π/2]` to a unit vector:
/// `θ₁ = Π cos ηⱼ`, `θ_k = sin η_{k−1} Π_{j≥k} cos ηⱼ`, `θ_p = sin η_{p−1}`.
pub fn polar_to_theta(eta: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = eta.iter().find(|a| !(a.abs() <= FRAC_PI_2)) {
        return Err(FsiError::InvalidInput(format!("angle {bad} outside [-pi/2, pi/2]")));
    }
    Ok(polar_to_theta_unchecked(eta))
}

/// [`polar_to_theta`] without the range check; any real angles give a unit vector.
pub fn polar_to_theta_unchecked(eta: &[f64]) -> Vec<f64> {
    let p = eta.len() + 1;
    let mut theta = vec![0.0; p];
    // tail[k] = Π_{j ≥ k} cos η_j (0-based angles)
    let mut tail = 1.0;
    for k in (1..p).rev() {
        theta[k] = eta[k - 1].sin() * tail;
        tail *= eta[k - 1].cos();
    }
    theta[0] = tail;
    theta
}

/// Inverse of [`polar_to_theta`] for unit vectors with `θ₁ ≥ 0`.
pub fn theta_to_polar(theta: &[f64]) -> Vec<f64> {
    let mut head_sq = theta[0] * theta[0];
    let mut eta = Vec::with_capacity(theta.len().saturating_sub(1));
    for &t in &theta[1..] {
        eta.push(t.atan2(head_sq.sqrt()));
        head_sq += t * t;
    }
    eta
}
