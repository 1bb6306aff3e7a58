use rayon::prelude::*;

use crate::error::{FsiError, Result};
use crate::geometry::{FittedObject, MetricSpace, Sphere};
use crate::index::IndexParam;
use crate::regression::{fit_on_index, RegressionDataset};
use crate::smoothing::{Kernel, LocalWeights};

fn tag_index(err: FsiError, i: usize) -> FsiError {
    match err {
        FsiError::DegenerateWindow { index: None } => FsiError::DegenerateWindow { index: Some(i) },
        other => other,
    }
}

/// In-sample fits `Ŷᵢ(θ, h) = ĝ(θ'Xᵢ, θ)` for every observation. Iterative
/// solvers are warm-started from the leave-one-out Nadaraya–Watson estimate.
pub fn fitted_values<S: MetricSpace>(
    data: &RegressionDataset<S>,
    theta: &IndexParam,
    h: f64,
    kernel: Kernel,
) -> Result<Vec<FittedObject<S::Point>>> {
    let u = data.projections(theta);
    (0..data.n())
        .into_par_iter()
        .map(|i| {
            fit_on_index(data.space(), data.y(), &u, u[i], h, kernel, None, Some(i)).map_err(|e| tag_index(e, i))
        })
        .collect()
}

/// `W_n(θ) = n⁻¹ Σ d²(Yᵢ, Ŷᵢ(θ, h))` with in-sample (not leave-one-out) fits.
pub fn wn_criterion<S: MetricSpace>(
    data: &RegressionDataset<S>,
    theta: &IndexParam,
    h: f64,
    kernel: Kernel,
) -> Result<f64> {
    let fits = fitted_values(data, theta, h, kernel)?;
    Ok(mean_squared_distance(data, fits.iter().map(|f| &f.point)))
}

pub(crate) fn mean_squared_distance<'a, S: MetricSpace>(
    data: &RegressionDataset<S>,
    fitted: impl Iterator<Item = &'a S::Point>,
) -> f64
where
    S::Point: 'a,
{
    let total: f64 = data
        .y()
        .iter()
        .zip(fitted)
        .map(|(y, f)| data.space().squared_distance(y, f))
        .sum();
    total / data.n() as f64
}

/// Proxy criterion `n⁻¹ Σ d²(Yᵢ, Yᵢ*)` where `Yᵢ*` is the extrinsic local
/// linear fit projected back onto the space. Only spaces with an extrinsic
/// projection (the sphere) support it.
pub fn wn_proxy<S: MetricSpace>(
    data: &RegressionDataset<S>,
    theta: &IndexParam,
    h: f64,
    kernel: Kernel,
) -> Result<f64> {
    let u = data.projections(theta);
    let space = data.space();
    let total: Result<Vec<f64>> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let offsets: Vec<f64> = u.iter().map(|v| v - u[i]).collect();
            let w = LocalWeights::from_offsets(&offsets, h, kernel).map_err(|e| tag_index(e, i))?;
            let star = space
                .project_extrinsic(data.y(), &w.weights)
                .ok_or_else(|| FsiError::InvalidInput("proxy criterion needs an extrinsic projection".into()))??;
            Ok(space.squared_distance(&data.y()[i], &star))
        })
        .collect();
    Ok(total?.iter().sum::<f64>() / data.n() as f64)
}

pub fn wn_proxy_sphere(
    data: &RegressionDataset<Sphere>,
    theta: &IndexParam,
    h: f64,
    kernel: Kernel,
) -> Result<f64> {
    wn_proxy(data, theta, h, kernel)
}

pub(crate) fn has_proxy<S: MetricSpace>(data: &RegressionDataset<S>) -> bool {
    data.space().project_extrinsic(&data.y()[..1], &[1.0]).is_some()
}
