use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{FsiError, Result};
use crate::geometry::MetricSpace;
use crate::index::{normalize_identifiable, IndexParam};
use crate::regression::{fit_on_index, multivariate_local_frechet_at, RegressionDataset};
use crate::smoothing::Kernel;

/// Which estimator a leave-one-out bandwidth search refits.
#[derive(Clone, Copy, Debug)]
pub enum LoocvModel<'a> {
    /// Local Fréchet on a fixed projection; a unit axis gives a single-covariate fit.
    Projected(&'a IndexParam),
    /// Single index fits: one index estimate per grid bandwidth, held fixed
    /// while the smoothing stage leaves each observation out.
    IndexPerBandwidth(&'a [IndexParam]),
    MultivariateLocal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoocvSelection {
    pub h: f64,
    /// `Σᵢ d²(Yᵢ, Ŷᵢ⁽⁻ⁱ⁾(h))` per grid entry; `None` where some fit failed.
    pub scores: Vec<Option<f64>>,
}

/// Leave-one-out score of one bandwidth, `None` if any held-out fit fails.
pub(crate) fn loo_score_projected<S: MetricSpace>(
    data: &RegressionDataset<S>,
    theta: &IndexParam,
    h: f64,
    kernel: Kernel,
) -> Option<f64> {
    let u = data.projections(theta);
    let scores: Option<Vec<f64>> = (0..data.n())
        .into_par_iter()
        .map(|i| {
            fit_on_index(data.space(), data.y(), &u, u[i], h, kernel, Some(i), None)
                .ok()
                .map(|fit| data.space().squared_distance(&data.y()[i], &fit.point))
        })
        .collect();
    scores.map(|s| s.iter().sum())
}

fn loo_score_multivariate<S: MetricSpace>(data: &RegressionDataset<S>, h: f64, kernel: Kernel) -> Option<f64> {
    let n = data.n();
    let scores: Option<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let train = data.subset(&keep);
            multivariate_local_frechet_at(&train, &data.row(i), h, kernel)
                .ok()
                .map(|fit| data.space().squared_distance(&data.y()[i], &fit.point))
        })
        .collect();
    scores.map(|s| s.iter().sum())
}

/// Picks the grid minimizer of the scores; exact ties go to the larger bandwidth.
pub(crate) fn select_min(grid: &[f64], scores: &[Option<f64>]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (&h, score) in grid.iter().zip(scores) {
        let Some(s) = score.filter(|s| s.is_finite()) else { continue };
        best = match best {
            None => Some((h, s)),
            Some((bh, bs)) => {
                if s < bs || (s == bs && h > bh) {
                    Some((h, s))
                } else {
                    Some((bh, bs))
                }
            }
        };
    }
    best.map(|(h, _)| h)
        .ok_or_else(|| FsiError::AllInfeasible("every bandwidth in the grid failed".into()))
}

/// Bandwidth minimizing the leave-one-out prediction error over `grid`.
pub fn loocv_bandwidth<S: MetricSpace>(
    data: &RegressionDataset<S>,
    model: LoocvModel<'_>,
    grid: &[f64],
    kernel: Kernel,
) -> Result<LoocvSelection> {
    if grid.is_empty() {
        return Err(FsiError::Empty("bandwidth grid"));
    }
    if data.n() < 3 {
        return Err(FsiError::InvalidInput("leave-one-out needs at least three observations".into()));
    }
    if let LoocvModel::IndexPerBandwidth(thetas) = model {
        if thetas.len() != grid.len() {
            return Err(FsiError::InvalidInput("one index estimate per bandwidth is required".into()));
        }
    }
    let scores: Vec<Option<f64>> = grid
        .par_iter()
        .enumerate()
        .map(|(k, &h)| match model {
            LoocvModel::Projected(theta) => loo_score_projected(data, theta, h, kernel),
            LoocvModel::IndexPerBandwidth(thetas) => loo_score_projected(data, &thetas[k], h, kernel),
            LoocvModel::MultivariateLocal => loo_score_multivariate(data, h, kernel),
        })
        .collect();
    let h = if grid.len() == 1 { grid[0] } else { select_min(grid, &scores)? };
    Ok(LoocvSelection { h, scores })
}

/// `count` log-spaced bandwidths between the 5th and 50th percentiles of the
/// pairwise projected distances `|θ̄'(Xᵢ − Xⱼ)|`, with θ̄ the leading principal
/// direction of `X`.
pub fn auto_bandwidth_grid(x: &DMatrix<f64>, count: usize) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if n < 3 || count == 0 {
        return Err(FsiError::InvalidInput("automatic bandwidth grid needs n >= 3 and count >= 1".into()));
    }
    let pilot = principal_direction(x)?;
    let u: Vec<f64> = x
        .row_iter()
        .map(|r| r.iter().zip(pilot.as_slice()).map(|(a, b)| a * b).sum())
        .collect();
    let mut gaps = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            gaps.push((u[i] - u[j]).abs());
        }
    }
    gaps.sort_by(f64::total_cmp);
    let lo_raw = percentile(&gaps, 0.05);
    let hi = percentile(&gaps, 0.50);
    let lo = if lo_raw > 0.0 {
        lo_raw
    } else {
        gaps.iter().copied().find(|g| *g > 0.0).unwrap_or(0.0)
    };
    if !(hi > lo) || !(lo > 0.0) {
        return Err(FsiError::InvalidInput(format!(
            "covariates too concentrated for an automatic bandwidth grid (p = {p})"
        )));
    }
    if count == 1 {
        return Ok(vec![hi]);
    }
    let ratio = (hi / lo).ln();
    Ok((0..count)
        .map(|k| lo * (ratio * k as f64 / (count - 1) as f64).exp())
        .collect())
}

fn principal_direction(x: &DMatrix<f64>) -> Result<IndexParam> {
    let (n, p) = x.shape();
    if p == 1 {
        return Ok(IndexParam::axis(1, 0));
    }
    let means: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - means[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = cov.symmetric_eigen();
    let (best, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
    let v: Vec<f64> = eig.eigenvectors.column(best).iter().copied().collect();
    normalize_identifiable(&v)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Euclidean;

    #[test]
    fn ties_prefer_larger_bandwidth() {
        let grid = [0.1, 0.2, 0.3];
        assert_eq!(select_min(&grid, &[Some(1.0), Some(0.5), Some(0.5)]).unwrap(), 0.3);
        assert_eq!(select_min(&grid, &[None, Some(0.7), Some(0.9)]).unwrap(), 0.2);
        assert!(select_min(&grid, &[None, None, None]).is_err());
    }

    #[test]
    fn single_element_grid() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let data = RegressionDataset::new(x, vec![0.0, 1.0, 0.0, 1.0], Euclidean).unwrap();
        let theta = IndexParam::axis(1, 0);
        let sel = loocv_bandwidth(&data, LoocvModel::Projected(&theta), &[0.7], Kernel::Gaussian).unwrap();
        assert_eq!(sel.h, 0.7);
    }

    #[test]
    fn auto_grid_is_increasing() {
        let x = DMatrix::from_fn(30, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let grid = auto_bandwidth_grid(&x, 10).unwrap();
        assert_eq!(grid.len(), 10);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
}
