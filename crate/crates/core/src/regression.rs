//! Local, global and multivariate local Fréchet regression.

use nalgebra::{DMatrix, DVector};

use crate::error::{FsiError, Result};
use crate::geometry::{FittedObject, MetricSpace, Sphere, SpherePoint};
use crate::index::IndexParam;
use crate::smoothing::{multivariate_local_weights, Kernel, LocalWeights};

/// Per-column centering and scaling applied to the covariates.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Covariates `X` (n × p) paired with responses in a metric space.
#[derive(Clone, Debug)]
pub struct RegressionDataset<S: MetricSpace> {
    x: DMatrix<f64>,
    y: Vec<S::Point>,
    space: S,
    standardization: Option<Standardization>,
}

impl<S: MetricSpace> RegressionDataset<S> {
    pub fn new(x: DMatrix<f64>, y: Vec<S::Point>, space: S) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(FsiError::InvalidInput(format!(
                "{} covariate rows for {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(FsiError::Empty("dataset"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FsiError::InvalidInput("non-finite covariate entry".into()));
        }
        for p in &y {
            space.validate(p)?;
        }
        Ok(RegressionDataset { x, y, space, standardization: None })
    }

    /// Centers every column and scales it to unit sample variance.
    pub fn standardized(mut self) -> Result<Self> {
        let (n, p) = self.x.shape();
        if n < 2 {
            return Err(FsiError::InvalidInput("standardization needs at least two rows".into()));
        }
        let mut mean = Vec::with_capacity(p);
        let mut sd = Vec::with_capacity(p);
        for j in 0..p {
            let col = self.x.column(j);
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            if !(var > 0.0) {
                return Err(FsiError::SingularCovariance);
            }
            mean.push(m);
            sd.push(var.sqrt());
        }
        for j in 0..p {
            for i in 0..n {
                self.x[(i, j)] = (self.x[(i, j)] - mean[j]) / sd[j];
            }
        }
        self.standardization = Some(Standardization { mean, sd });
        Ok(self)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &[S::Point] {
        &self.y
    }

    pub fn space(&self) -> &S {
        &self.space
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// `θ'Xᵢ` for every observation.
    pub fn projections(&self, theta: &IndexParam) -> Vec<f64> {
        let t = theta.as_slice();
        self.x
            .row_iter()
            .map(|row| row.iter().zip(t).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Rows `idx`, in that order, keeping the standardization record.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let x = DMatrix::from_fn(idx.len(), self.p(), |r, c| self.x[(idx[r], c)]);
        let y = idx.iter().map(|&i| self.y[i].clone()).collect();
        RegressionDataset {
            x,
            y,
            space: self.space.clone(),
            standardization: self.standardization.clone(),
        }
    }
}

/// Local Fréchet fit on the scalar index `u` at `u0`.
///
/// `leave_out` drops that observation from the weights; `init_exclude`
/// drops it from the warm start only.
pub(crate) fn fit_on_index<S: MetricSpace>(
    space: &S,
    y: &[S::Point],
    u: &[f64],
    u0: f64,
    h: f64,
    kernel: Kernel,
    leave_out: Option<usize>,
    init_exclude: Option<usize>,
) -> Result<FittedObject<S::Point>> {
    let offsets: Vec<f64> = u.iter().map(|&v| v - u0).collect();
    let weights = match leave_out {
        None => LocalWeights::from_offsets(&offsets, h, kernel)?.weights,
        Some(skip) => {
            let kept: Vec<f64> = offsets
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, d)| *d)
                .collect();
            let mut w = LocalWeights::from_offsets(&kept, h, kernel)?.weights;
            w.insert(skip, 0.0);
            w
        }
    };
    let kernel_values: Vec<f64> = offsets.iter().map(|&d| kernel.scaled(d, h)).collect();
    let init = space.warm_start(y, &kernel_values, leave_out.or(init_exclude));
    space.weighted_mean(y, &weights, init.as_ref())
}

/// `argmin_ω n⁻¹ Σ r̂_h(Xᵢ, x, θ) d²(Yᵢ, ω)`.
pub fn local_frechet_at<S: MetricSpace>(
    data: &RegressionDataset<S>,
    x: &[f64],
    theta: &IndexParam,
    h: f64,
    kernel: Kernel,
) -> Result<FittedObject<S::Point>> {
    if x.len() != data.p() || theta.dim() != data.p() {
        return Err(FsiError::InvalidInput(format!(
            "query/index dimension does not match p = {}",
            data.p()
        )));
    }
    let u = data.projections(theta);
    fit_on_index(data.space(), data.y(), &u, theta.dot(x), h, kernel, None, None)
}

/// Leave-one-out Nadaraya–Watson estimate at `Xᵢ` on the index `θ'X`,
/// projected back onto the sphere.
pub fn nadaraya_watson_sphere_init(
    data: &RegressionDataset<Sphere>,
    i: usize,
    theta: &IndexParam,
    h: f64,
    kernel: Kernel,
) -> Result<SpherePoint> {
    if i >= data.n() {
        return Err(FsiError::InvalidInput(format!("index {i} out of range")));
    }
    if data.n() < 2 {
        return Err(FsiError::InvalidInput("need another observation besides i".into()));
    }
    let u = data.projections(theta);
    let k: Vec<f64> = u.iter().map(|&v| kernel.eval((u[i] - v) / h)).collect();
    data.space()
        .warm_start(data.y(), &k, Some(i))
        .ok_or(FsiError::ZeroNormProjection)
}

/// Global Fréchet regression: weights `sᵢ(x) = 1 + (Xᵢ − X̄)' Σ̂⁻¹ (x − X̄)`.
#[derive(Clone, Debug)]
pub struct GlobalFrechet {
    mean: DVector<f64>,
    cov_inv: DMatrix<f64>,
    centered: DMatrix<f64>,
}

impl GlobalFrechet {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if n < 2 {
            return Err(FsiError::InvalidInput("global Frechet needs at least two observations".into()));
        }
        let mean = DVector::from_fn(p, |j, _| x.column(j).sum() / n as f64);
        let centered = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
        // Divisor n: with it, Euclidean responses reproduce the OLS fit.
        let cov = centered.transpose() * &centered / n as f64;
        let diag: Vec<f64> = (0..p).map(|j| cov[(j, j)]).collect();
        if diag.iter().any(|d| !(*d > 0.0)) {
            return Err(FsiError::SingularCovariance);
        }
        let scaled = DMatrix::from_fn(p, p, |a, b| cov[(a, b)] / (diag[a] * diag[b]).sqrt());
        let eig = scaled.symmetric_eigenvalues();
        let (min, max) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
        if !(min > 1e-12 * max) {
            return Err(FsiError::SingularCovariance);
        }
        let cov_inv = cov.cholesky().ok_or(FsiError::SingularCovariance)?.inverse();
        Ok(GlobalFrechet { mean, cov_inv, centered })
    }

    pub fn weights_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(FsiError::InvalidInput("query dimension does not match covariates".into()));
        }
        let dx = DVector::from_fn(x.len(), |j, _| x[j] - self.mean[j]);
        let a = &self.cov_inv * dx;
        Ok(self
            .centered
            .row_iter()
            .map(|row| 1.0 + row.iter().zip(a.iter()).map(|(r, c)| r * c).sum::<f64>())
            .collect())
    }

    /// Fit at `x`. On the sphere the descent is safeguarded: if it ends above
    /// the extrinsic warm start (or fails to converge), the warm start is returned.
    pub fn fit_at<S: MetricSpace>(&self, data: &RegressionDataset<S>, x: &[f64]) -> Result<FittedObject<S::Point>> {
        let w = self.weights_at(x)?;
        let space = data.space();
        let warm = match space.project_extrinsic(data.y(), &w) {
            None => return space.weighted_mean(data.y(), &w, None),
            Some(warm) => warm,
        };
        let fallback = |warm: &S::Point| FittedObject {
            point: warm.clone(),
            criterion_value: data
                .y()
                .iter()
                .zip(&w)
                .map(|(y, wi)| wi * space.squared_distance(y, warm))
                .sum::<f64>()
                / data.n() as f64,
            iterations: 0,
            grad_norm: f64::NAN,
        };
        match warm {
            Ok(warm) => match space.weighted_mean(data.y(), &w, Some(&warm)) {
                Ok(fit) => {
                    let start = fallback(&warm);
                    if fit.criterion_value <= start.criterion_value {
                        Ok(fit)
                    } else {
                        Ok(start)
                    }
                }
                Err(FsiError::NonConvergence { .. }) => Ok(fallback(&warm)),
                Err(e) => Err(e),
            },
            Err(_) => space.weighted_mean(data.y(), &w, None),
        }
    }
}

pub fn global_frechet_fit<S: MetricSpace>(data: &RegressionDataset<S>, x: &[f64]) -> Result<FittedObject<S::Point>> {
    GlobalFrechet::new(data.x())?.fit_at(data, x)
}

/// Local Fréchet fit with multivariate local-linear weights (product kernel).
pub fn multivariate_local_frechet_at<S: MetricSpace>(
    data: &RegressionDataset<S>,
    x: &[f64],
    h: f64,
    kernel: Kernel,
) -> Result<FittedObject<S::Point>> {
    let w = multivariate_local_weights(data.x(), x, h, kernel)?;
    data.space().weighted_mean(data.y(), &w, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Euclidean, QuantileGrid, Wasserstein};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn line_data() -> RegressionDataset<Euclidean> {
        let x = DMatrix::from_row_slice(6, 2, &[0.1, 0.3, 0.4, -0.2, -0.5, 0.9, 0.7, 0.1, -0.3, -0.6, 0.2, 0.5]);
        let y = (0..6).map(|i| 2.0 * x[(i, 0)] - x[(i, 1)] + 0.5).collect();
        RegressionDataset::new(x, y, Euclidean).unwrap()
    }

    #[test]
    fn constant_responses_fit_exactly() {
        let x = DMatrix::from_row_slice(5, 1, &[0.0, 0.2, 0.5, 0.7, 1.0]);
        let data = RegressionDataset::new(x, vec![3.5; 5], Euclidean).unwrap();
        let fit = local_frechet_at(&data, &[0.4], &IndexParam::axis(1, 0), 0.3, Kernel::Gaussian).unwrap();
        assert!((fit.point - 3.5).abs() < 1e-12);
    }

    #[test]
    fn global_weights_average_to_one_and_center() {
        let data = line_data();
        let gf = GlobalFrechet::new(data.x()).unwrap();
        let w = gf.weights_at(&[0.8, -0.1]).unwrap();
        assert!((w.iter().sum::<f64>() / 6.0 - 1.0).abs() < 1e-12);
        let center: Vec<f64> = (0..2).map(|j| data.x().column(j).mean()).collect();
        assert!(gf.weights_at(&center).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn global_fit_reproduces_linear_truth() {
        let data = line_data();
        let fit = global_frechet_fit(&data, &[0.25, 0.25]).unwrap();
        assert!((fit.point - (2.0 * 0.25 - 0.25 + 0.5)).abs() < 1e-10);
    }

    #[test]
    fn duplicate_rows_are_singular() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(GlobalFrechet::new(&x), Err(FsiError::SingularCovariance)));
        let collinear = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        assert!(matches!(GlobalFrechet::new(&collinear), Err(FsiError::SingularCovariance)));
    }

    #[test]
    fn multivariate_reproduces_linear_truth() {
        let data = line_data();
        let fit = multivariate_local_frechet_at(&data, &[0.0, 0.1], 0.6, Kernel::Gaussian).unwrap();
        assert!((fit.point - (0.0 - 0.1 + 0.5)).abs() < 1e-8);
    }

    #[test]
    fn nw_init_examples() {
        let a = SpherePoint::new(1.0, 0.0, 0.0).unwrap();
        let b = SpherePoint::new(0.0, 1.0, 0.0).unwrap();
        let c = SpherePoint::new(0.0, 0.0, 1.0).unwrap();
        let x = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, -0.5, 0.0, 0.0, 0.0]);
        let data = RegressionDataset::new(x, vec![a, b, c], Sphere::new()).unwrap();
        let init = nadaraya_watson_sphere_init(&data, 2, &IndexParam::axis(2, 0), 0.4, Kernel::Gaussian).unwrap();
        let expected = nalgebra::Vector3::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0);
        assert!((init.as_vector() - expected).norm() < 1e-14);

        let same = RegressionDataset::new(
            DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]),
            vec![c, b, b],
            Sphere::new(),
        )
        .unwrap();
        let init = nadaraya_watson_sphere_init(&same, 0, &IndexParam::axis(1, 0), 0.5, Kernel::Gaussian).unwrap();
        assert!((init.as_vector() - b.as_vector()).norm() < 1e-15);
    }

    #[test]
    fn wasserstein_large_bandwidth_matches_explicit_weights() {
        let grid = QuantileGrid::uniform_grid(4);
        let raw = [
            [0.0, 1.0, 2.0, 3.0],
            [1.0, 1.5, 2.5, 4.0],
            [-1.0, 0.0, 0.5, 1.0],
            [0.5, 0.5, 3.0, 3.5],
            [2.0, 2.1, 2.2, 6.0],
        ];
        let y: Vec<QuantileGrid> = raw.iter().map(|r| QuantileGrid::new(grid.clone(), r.to_vec()).unwrap()).collect();
        let u = [-1.0, -0.4, 0.1, 0.6, 1.2];
        let x = DMatrix::from_row_slice(5, 1, &u);
        let data = RegressionDataset::new(x, y, Wasserstein::new(grid).unwrap()).unwrap();
        let (x0, h) = (0.3, 50.0);
        let fit = local_frechet_at(&data, &[x0], &IndexParam::axis(1, 0), h, Kernel::Gaussian).unwrap();

        // Oracle: explicit local-linear weights, pointwise average, then PAV.
        let k: Vec<f64> = u.iter().map(|v| (-0.5 * ((v - x0) / h).powi(2)).exp()).collect();
        let s = |j: i32| k.iter().zip(&u).map(|(ki, v)| ki * (v - x0).powi(j)).sum::<f64>();
        let (s1, s2) = (s(1), s(2));
        let w: Vec<f64> = k.iter().zip(&u).map(|(ki, v)| ki * (s2 - s1 * (v - x0))).collect();
        let wsum: f64 = w.iter().sum();
        let mut avg = [0.0; 4];
        for (wi, r) in w.iter().zip(raw) {
            for t in 0..4 {
                avg[t] += wi * r[t] / wsum;
            }
        }
        let expected = crate::geometry::pav_nondecreasing(&avg);
        for (a, b) in fit.point.values().iter().zip(expected) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
