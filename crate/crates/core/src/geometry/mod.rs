//! Response geometries and their weighted Fréchet means.
//!
//! Every geometry implements [`MetricSpace`]: a distance plus a solver for
//! `argmin_w Σ wᵢ d²(yᵢ, w)` under possibly signed weights. Local-linear
//! weights are signed, so the solvers never assume nonnegativity.

mod euclidean;
mod sphere;
mod wasserstein;

use serde::Serialize;
use std::fmt::Debug;
use std::sync::Arc;

pub use euclidean::Euclidean;
pub use sphere::{
    sphere_distance, sphere_exp, sphere_log, Sphere, SphereSolverOptions, SpherePoint,
};
pub use wasserstein::{pav_nondecreasing, wasserstein_distance, QuantileGrid, Wasserstein};

use crate::error::Result;

/// Tag identifying the geometry of a response set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum MetricSpaceKind {
    Sphere,
    Wasserstein1D { grid: Arc<[f64]> },
    Euclidean1D,
}

/// A fitted response together with solver diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedObject<P> {
    pub point: P,
    /// `n⁻¹ Σ wᵢ d²(yᵢ, point)` with the weights used for the fit.
    pub criterion_value: f64,
    pub iterations: usize,
    /// Riemannian gradient norm of the normalized objective (zero for closed-form spaces).
    pub grad_norm: f64,
}

pub trait MetricSpace: Clone + Debug + Send + Sync {
    type Point: Clone + Debug + PartialEq + Send + Sync;

    fn kind(&self) -> MetricSpaceKind;

    fn distance(&self, a: &Self::Point, b: &Self::Point) -> f64;

    /// Checks that `p` belongs to this space (unit norm, shared grid, ...).
    fn validate(&self, p: &Self::Point) -> Result<()>;

    /// Minimizer of `Σ wᵢ d²(yᵢ, ·)`. `init` is a warm start for iterative solvers.
    fn weighted_mean(
        &self,
        points: &[Self::Point],
        weights: &[f64],
        init: Option<&Self::Point>,
    ) -> Result<FittedObject<Self::Point>>;

    /// Kernel-weighted warm start for iterative solvers, skipping observation
    /// `exclude`; `None` for closed-form spaces.
    fn warm_start(
        &self,
        _points: &[Self::Point],
        _kernel_weights: &[f64],
        _exclude: Option<usize>,
    ) -> Option<Self::Point> {
        None
    }

    /// Extrinsic projection of `Σ wᵢ yᵢ` back onto the space, when the space
    /// sits inside a Euclidean embedding that makes this meaningful.
    fn project_extrinsic(&self, _points: &[Self::Point], _weights: &[f64]) -> Option<Result<Self::Point>> {
        None
    }

    fn squared_distance(&self, a: &Self::Point, b: &Self::Point) -> f64 {
        let d = self.distance(a, b);
        d * d
    }
}

/// Weighted Fréchet mean without a warm start.
pub fn weighted_frechet_mean<S: MetricSpace>(
    space: &S,
    points: &[S::Point],
    weights: &[f64],
) -> Result<FittedObject<S::Point>> {
    space.weighted_mean(points, weights, None)
}

pub(crate) fn check_weights(len: usize, weights: &[f64]) -> Result<()> {
    use crate::error::FsiError;
    if len == 0 {
        return Err(FsiError::Empty("responses"));
    }
    if weights.len() != len {
        return Err(FsiError::InvalidInput(format!(
            "{} weights for {} responses",
            weights.len(),
            len
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(FsiError::InvalidInput("non-finite weight".into()));
    }
    Ok(())
}
