use std::sync::Arc;

use super::{check_weights, FittedObject, MetricSpace, MetricSpaceKind};
use crate::error::{FsiError, Result};

/// A one-dimensional distribution represented by its quantile function
/// sampled on a shared grid of probability levels `0 = t₁ < … < t_M = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileGrid {
    grid: Arc<[f64]>,
    values: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(grid: Arc<[f64]>, values: Vec<f64>) -> Result<Self> {
        validate_grid(&grid)?;
        if values.len() != grid.len() {
            return Err(FsiError::InvalidInput(format!(
                "{} quantile values for a grid of {} levels",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FsiError::InvalidInput("non-finite quantile value".into()));
        }
        if let Some(index) = values.windows(2).position(|w| w[0] > w[1]) {
            return Err(FsiError::NonMonotoneQuantile { index });
        }
        Ok(QuantileGrid { grid, values })
    }

    /// `m` equispaced levels including 0 and 1.
    pub fn uniform_grid(m: usize) -> Arc<[f64]> {
        assert!(m >= 2, "a quantile grid needs at least two levels");
        (0..m).map(|k| k as f64 / (m - 1) as f64).collect()
    }

    pub fn grid(&self) -> &Arc<[f64]> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shares_grid(&self, other: &QuantileGrid) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid[..] == other.grid[..]
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(FsiError::InvalidInput("quantile grid needs at least two levels".into()));
    }
    if grid[0] != 0.0 || grid[grid.len() - 1] != 1.0 {
        return Err(FsiError::InvalidInput("quantile grid must start at 0 and end at 1".into()));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(FsiError::InvalidInput("quantile grid must be strictly increasing".into()));
    }
    Ok(())
}

fn trapezoid_sq_diff(grid: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..grid.len() - 1 {
        let d0 = a[k] - b[k];
        let d1 = a[k + 1] - b[k + 1];
        total += 0.5 * (grid[k + 1] - grid[k]) * (d0 * d0 + d1 * d1);
    }
    total
}

/// L² distance between quantile functions, by the trapezoidal rule on the shared grid.
pub fn wasserstein_distance(g1: &QuantileGrid, g2: &QuantileGrid) -> Result<f64> {
    if !g1.shares_grid(g2) {
        return Err(FsiError::GridMismatch);
    }
    Ok(trapezoid_sq_diff(&g1.grid, &g1.values, &g2.values).sqrt())
}

/// Pool-adjacent-violators: the least-squares projection of `values` onto
/// nondecreasing sequences (uniform weights).
pub fn pav_nondecreasing(values: &[f64]) -> Vec<f64> {
    // Blocks as (sum, count); merged while the last two are out of order.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (sum, count) in blocks {
        let mean = sum / count as f64;
        out.extend(std::iter::repeat_n(mean, count));
    }
    out
}

/// 1-D Wasserstein space on a fixed grid of probability levels.
#[derive(Clone, Debug, PartialEq)]
pub struct Wasserstein {
    grid: Arc<[f64]>,
}

impl Wasserstein {
    pub fn new(grid: Arc<[f64]>) -> Result<Self> {
        validate_grid(&grid)?;
        Ok(Wasserstein { grid })
    }

    pub fn grid(&self) -> &Arc<[f64]> {
        &self.grid
    }
}

impl MetricSpace for Wasserstein {
    type Point = QuantileGrid;

    fn kind(&self) -> MetricSpaceKind {
        MetricSpaceKind::Wasserstein1D { grid: self.grid.clone() }
    }

    fn distance(&self, a: &QuantileGrid, b: &QuantileGrid) -> f64 {
        debug_assert!(a.values.len() == self.grid.len() && b.values.len() == self.grid.len());
        trapezoid_sq_diff(&self.grid, &a.values, &b.values).sqrt()
    }

    fn squared_distance(&self, a: &QuantileGrid, b: &QuantileGrid) -> f64 {
        trapezoid_sq_diff(&self.grid, &a.values, &b.values)
    }

    fn validate(&self, p: &QuantileGrid) -> Result<()> {
        if p.grid[..] != self.grid[..] {
            return Err(FsiError::GridMismatch);
        }
        Ok(())
    }

    /// Pointwise weighted average of quantile values followed by isotonic projection.
    fn weighted_mean(
        &self,
        points: &[QuantileGrid],
        weights: &[f64],
        _init: Option<&QuantileGrid>,
    ) -> Result<FittedObject<QuantileGrid>> {
        check_weights(points.len(), weights)?;
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(FsiError::NonPositiveWeightSum { sum: total });
        }
        let m = self.grid.len();
        let mut avg = vec![0.0; m];
        for (q, &w) in points.iter().zip(weights) {
            if q.values.len() != m {
                return Err(FsiError::GridMismatch);
            }
            for (a, v) in avg.iter_mut().zip(&q.values) {
                *a += w * v;
            }
        }
        for a in &mut avg {
            *a /= total;
        }
        let point = QuantileGrid { grid: self.grid.clone(), values: pav_nondecreasing(&avg) };
        let criterion_value = points
            .iter()
            .zip(weights)
            .map(|(q, w)| w * self.squared_distance(q, &point))
            .sum::<f64>()
            / points.len() as f64;
        Ok(FittedObject { point, criterion_value, iterations: 0, grad_norm: 0.0 })
    }
}
